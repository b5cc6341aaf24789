"""Video latents, seeded noise streams, 3D spectra and low-pass filters.

Latents are plain ``float64`` arrays laid out ``(T, C, H, W)``. Spectra are the
complex arrays returned by :func:`fft3`, transformed over the T, H and W axes
independently per channel. Filters are stored *centered* (DC at index
``n // 2`` on each axis) and un-shifted inside :func:`apply_filter`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConjugateSymmetryError,
    DimensionError,
    ParameterError,
    ShapeError,
)

FFT_AXES = (0, 2, 3)
FILTER_FAMILIES = ("butterworth", "gaussian", "ideal")


def check_latent(field_: np.ndarray, name: str = "field") -> np.ndarray:
    arr = np.asarray(field_)
    if arr.ndim != 4:
        raise ShapeError(f"{name} must be 4D (T, C, H, W), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise DimensionError(f"{name} has an empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


def _check_dims(dims, rank: int) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != rank:
        raise DimensionError(f"expected {rank} dimensions, got {dims}")
    if any(d < 1 for d in dims):
        raise DimensionError(f"all dimensions must be >= 1, got {dims}")
    return dims


@dataclass
class RngStream:
    """A labelled, reproducible stream of standard-normal draws.

    The generator is keyed on ``(seed, sha256(label))`` so that streams with
    different labels are independent and a given label always replays the same
    sequence. Draws are sequential: two ``normal`` calls continue the stream.
    """

    seed: int
    label: str
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            digest = hashlib.sha256(self.label.encode("utf-8")).digest()
            words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
            seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
            entropy = [seed & 0xFFFFFFFF, seed >> 32, *words]
            self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
        return self._gen

    def normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape, dtype=np.float64)

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}")


def sample_gaussian(dims, rng: RngStream) -> np.ndarray:
    """Draw an i.i.d. standard normal latent of shape ``(T, C, H, W)``."""
    dims = _check_dims(dims, 4)
    return rng.normal(dims)


def fft3(field_: np.ndarray) -> np.ndarray:
    """Unnormalized DFT over (T, H, W), per channel."""
    arr = check_latent(field_)
    return np.fft.fftn(arr, axes=FFT_AXES)


def ifft3(spectrum: np.ndarray, rtol: float = 1e-6) -> np.ndarray:
    """Inverse of :func:`fft3` (carries the ``1/(T*H*W)`` factor).

    The imaginary part is dropped, but only after checking it is below
    ``rtol * ||real part||``; a larger residue means the spectrum was not
    conjugate-symmetric.
    """
    spec = np.asarray(spectrum)
    if spec.ndim != 4:
        raise ShapeError(f"spectrum must be 4D, got shape {spec.shape}")
    out = np.fft.ifftn(spec, axes=FFT_AXES)
    real = np.ascontiguousarray(out.real)
    residue = float(np.linalg.norm(out.imag))
    if residue > rtol * float(np.linalg.norm(real)) and residue > 0.0:
        raise ConjugateSymmetryError(
            f"imaginary residue {residue:.3e} exceeds {rtol:g} x field norm"
        )
    return real


def centered_frequencies(n: int) -> np.ndarray:
    """Normalized frequencies in [-1, 1) with DC at index ``n // 2``."""
    return np.fft.fftshift(np.fft.fftfreq(n)) * 2.0


@dataclass(frozen=True)
class FrequencyFilter:
    values: np.ndarray  # centered, shape (T, H, W)
    family: str
    cutoff_spatial: float
    cutoff_temporal: float
    order: int = 4

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)

    def uncentered(self) -> np.ndarray:
        return np.fft.ifftshift(self.values)

    def complement(self) -> "FrequencyFilter":
        """The high-pass ``1 - H`` (not itself a valid low-pass filter)."""
        return FrequencyFilter(
            1.0 - self.values, f"1-{self.family}", self.cutoff_spatial, self.cutoff_temporal, self.order
        )


def make_lowpass_filter(
    dims,
    family: str = "butterworth",
    cutoff_spatial: float = 0.25,
    cutoff_temporal: float = 0.25,
    order: int = 4,
) -> FrequencyFilter:
    """Build a centered spatio-temporal low-pass filter over ``(T, H, W)``.

    Butterworth and Gaussian use the anisotropic distance
    ``d^2 = (f_t/cut_t)^2 + (f_h^2 + f_w^2)/cut_s^2``. The ideal filter is a
    box in the same scaled coordinates (pass iff every scaled axis frequency
    is within 1), so cutoffs of 1.0 pass the whole spectrum.
    """
    t, h, w = _check_dims(dims, 3)
    if family not in FILTER_FAMILIES:
        raise ParameterError(f"unknown filter family {family!r}; expected one of {FILTER_FAMILIES}")
    if not (0.0 < cutoff_spatial <= 1.0) or not (0.0 < cutoff_temporal <= 1.0):
        raise ParameterError(
            f"cutoffs must lie in (0, 1], got spatial={cutoff_spatial}, temporal={cutoff_temporal}"
        )
    if int(order) != order or order < 1:
        raise ParameterError(f"order must be a positive integer, got {order}")

    ft = centered_frequencies(t)[:, None, None] / cutoff_temporal
    fh = centered_frequencies(h)[None, :, None] / cutoff_spatial
    fw = centered_frequencies(w)[None, None, :] / cutoff_spatial

    if family == "ideal":
        dmax = np.maximum(np.maximum(np.abs(ft), np.abs(fh)), np.abs(fw))
        values = (dmax <= 1.0).astype(np.float64)
    else:
        d2 = ft**2 + fh**2 + fw**2
        if family == "butterworth":
            values = 1.0 / (1.0 + d2 ** int(order))
        else:
            values = np.exp(-0.5 * d2)
    return FrequencyFilter(values, family, float(cutoff_spatial), float(cutoff_temporal), int(order))


def apply_filter(spectrum: np.ndarray, filter_: FrequencyFilter | np.ndarray) -> np.ndarray:
    """Hadamard product of a spectrum with a centered filter, per channel."""
    spec = np.asarray(spectrum)
    values = filter_.values if isinstance(filter_, FrequencyFilter) else np.asarray(filter_)
    if spec.ndim != 4 or values.shape != (spec.shape[0], spec.shape[2], spec.shape[3]):
        raise ShapeError(f"filter dims {values.shape} do not match spectrum {spec.shape}")
    mask = np.fft.ifftshift(values)
    return spec * mask[:, None, :, :]
