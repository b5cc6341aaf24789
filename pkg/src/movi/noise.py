"""Structured initial noise from a scene plan.

Three ingredients, composed by :func:`compose_scene_noise`:

* frequency re-initialization: keep the low band of one field and take the
  high band from another;
* noise flow: propagate a frame-1 noise slice through time by cyclic shifts
  that follow a box track;
* mask-local injection: paste one fixed noise patch into every frame at the
  box position, so the patch travels with the object.

Latent grids are addressed as ``(H_lat, W_lat)``; masks are ``uint8`` arrays of
shape ``(T, H_lat, W_lat)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError
from .latent import FrequencyFilter, RngStream, apply_filter, fft3, ifft3
from .trajectory import BoxTrack, ScenePlan

log = logging.getLogger(__name__)

FLOW_MODES = ("local", "global")


def latent_grid(canvas, scale: int = 8) -> tuple[int, int]:
    """``(H_lat, W_lat)`` for a ``(width, height)`` pixel canvas."""
    w, h = canvas
    if scale < 1 or w < scale or h < scale:
        raise InputError(f"latent scale {scale} does not fit canvas {w}x{h}")
    return h // scale, w // scale


def frequency_reinit(z_t: np.ndarray, eta: np.ndarray, filter_: FrequencyFilter) -> np.ndarray:
    """Low band of ``z_t`` plus high band of ``eta``, back in the signal domain."""
    z_t, eta = np.asarray(z_t), np.asarray(eta)
    if z_t.shape != eta.shape:
        raise ShapeError(f"z_T {z_t.shape} and eta {eta.shape} differ")
    low = apply_filter(fft3(z_t), filter_)
    high = apply_filter(fft3(eta), 1.0 - filter_.values)
    return ifft3(low + high)


# -- shifts and flow ---------------------------------------------------------


@dataclass(frozen=True)
class ShiftSequence:
    """Integer per-frame shifts for frames 2..T plus the carried fractional parts."""

    di: tuple[int, ...]
    dj: tuple[int, ...]
    remainder_i: tuple[float, ...]
    remainder_j: tuple[float, ...]

    def __len__(self):
        return len(self.di)


def trajectory_shifts(track: BoxTrack, latent_dims) -> ShiftSequence:
    """Convert per-frame center motion (pixels) into integer latent-cell shifts.

    Fractions are carried to the next frame and truncated toward zero, so a
    track moving half a cell per frame shifts 0, 1, 0, 1, ...
    """
    h_lat, w_lat = latent_dims
    if h_lat < 1 or w_lat < 1:
        raise InputError(f"latent dims must be >= 1, got {latent_dims}")
    cw, ch = track.canvas
    deltas = np.diff(track.centers, axis=0)
    di, dj, ri, rj = [], [], [], []
    carry_i = carry_j = 0.0
    for dx, dy in deltas:
        vi = carry_i + dy * (h_lat / ch)
        vj = carry_j + dx * (w_lat / cw)
        si, sj = math.trunc(vi), math.trunc(vj)
        carry_i, carry_j = vi - si, vj - sj
        di.append(int(math.fmod(si, h_lat)))
        dj.append(int(math.fmod(sj, w_lat)))
        ri.append(carry_i)
        rj.append(carry_j)
    return ShiftSequence(tuple(di), tuple(dj), tuple(ri), tuple(rj))


def noise_flow(eps0: np.ndarray, shifts: ShiftSequence) -> np.ndarray:
    """Roll a ``(C, H, W)`` frame-1 slice forward through ``len(shifts)`` frames.

    ``out[f][:, i, j] == out[f-1][:, (i - di) % H, (j - dj) % W]``.
    """
    eps0 = np.asarray(eps0)
    if eps0.ndim != 3:
        raise ShapeError(f"frame-1 noise must be (C, H, W), got {eps0.shape}")
    frames = [eps0]
    for di, dj in zip(shifts.di, shifts.dj):
        frames.append(np.roll(frames[-1], (di, dj), axis=(1, 2)))
    return np.stack(frames)


# -- masks and local injection -----------------------------------------------


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _cell_span(lo: np.ndarray, hi: np.ndarray, scale: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    # origin and extent are rounded separately so a constant-size box keeps a
    # constant cell count wherever it sits; spill past the grid is translated back
    start = _round_half_away(lo * scale)
    size = _round_half_away((hi - lo) * scale)
    start = np.clip(start, 0, np.maximum(n - size, 0))
    return start.astype(int), np.minimum(start + size, n).astype(int)


def latent_rects(track: BoxTrack, latent_dims) -> np.ndarray:
    """Per-frame ``(r0, r1, c0, c1)`` cell ranges covered by each box.

    The corner and the box size are scaled to the latent grid and rounded
    half away from zero. A box that rounds to nothing becomes the single cell
    under its center.
    """
    h_lat, w_lat = latent_dims
    cw, ch = track.canvas
    sy, sx = h_lat / ch, w_lat / cw
    b = track.boxes
    r0, r1 = _cell_span(b[:, 1], b[:, 3], sy, h_lat)
    c0, c1 = _cell_span(b[:, 0], b[:, 2], sx, w_lat)
    rects = np.stack([r0, r1, c0, c1], axis=1)

    empty = (r1 <= r0) | (c1 <= c0)
    if np.any(empty):
        centers = track.centers
        ci = np.clip(np.floor(centers[:, 1] * sy), 0, h_lat - 1).astype(int)
        cj = np.clip(np.floor(centers[:, 0] * sx), 0, w_lat - 1).astype(int)
        rects[empty] = np.stack([ci, ci + 1, cj, cj + 1], axis=1)[empty]
    return rects


def rasterize_masks(track: BoxTrack, latent_dims) -> np.ndarray:
    h_lat, w_lat = latent_dims
    mask = np.zeros((track.frames, h_lat, w_lat), dtype=np.uint8)
    for f, (r0, r1, c0, c1) in enumerate(latent_rects(track, latent_dims)):
        mask[f, r0:r1, c0:c1] = 1
    return mask


def local_patch_shape(track: BoxTrack, latent_dims) -> tuple[int, int]:
    """Size of the local noise patch: the largest rasterized box extent."""
    rects = latent_rects(track, latent_dims)
    return int(np.max(rects[:, 1] - rects[:, 0])), int(np.max(rects[:, 3] - rects[:, 2]))


def local_noise_inject(
    frame_noises: np.ndarray, mask: np.ndarray, eps_local: np.ndarray, track: BoxTrack
) -> np.ndarray:
    """Replace masked cells with ``eps_local`` indexed relative to the box corner."""
    frame_noises = np.asarray(frame_noises)
    t, c, h_lat, w_lat = frame_noises.shape
    mask = np.asarray(mask)
    if mask.shape != (t, h_lat, w_lat):
        raise ShapeError(f"mask {mask.shape} does not match noise grid {(t, h_lat, w_lat)}")
    ph, pw = local_patch_shape(track, (h_lat, w_lat))
    if eps_local.shape != (c, ph, pw):
        raise ShapeError(f"local patch must be {(c, ph, pw)}, got {eps_local.shape}")

    out = frame_noises.copy()
    for f, (r0, _, c0, _) in enumerate(latent_rects(track, (h_lat, w_lat))):
        rows, cols = np.nonzero(mask[f])
        if rows.size == 0:
            continue
        pi = np.clip(rows - r0, 0, ph - 1)
        pj = np.clip(cols - c0, 0, pw - 1)
        out[f][:, rows, cols] = eps_local[:, pi, pj]
    return out


def overlap_cells(masks) -> int:
    """Number of (frame, cell) positions claimed by more than one object."""
    if not masks:
        return 0
    counts = np.sum(np.stack(masks).astype(np.int64), axis=0)
    return int(np.sum(counts > 1))


# -- scene composition -------------------------------------------------------


def inject_objects(
    field: np.ndarray,
    plan: ScenePlan,
    latent_dims,
    seed: int,
    flow: str = "local",
    order=None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Write every object's noise into ``field``.

    Object ``i`` always draws from stream ``object:i``; ``order`` only changes
    which object is written last where masks overlap (default: ascending
    index, so the highest index wins).

    ``flow="local"`` pastes a fixed patch that travels with the box.
    ``flow="global"`` rolls a full frame-1 slice along the track's integer
    shifts and keeps the part inside the box.
    """
    if flow not in FLOW_MODES:
        raise InputError(f"unknown flow mode {flow!r}; expected one of {FLOW_MODES}")
    t, c = field.shape[:2]
    out = field.copy()
    masks = [rasterize_masks(track, latent_dims) for track in plan.tracks]
    for i in order if order is not None else range(len(plan.tracks)):
        track, mask = plan.tracks[i], masks[i]
        rng = RngStream(seed, f"object:{i}")
        if flow == "local":
            ph, pw = local_patch_shape(track, latent_dims)
            out = local_noise_inject(out, mask, rng.normal((c, ph, pw)), track)
        else:
            flowed = noise_flow(rng.normal((c, *latent_dims)), trajectory_shifts(track, latent_dims))
            out = np.where(mask[:, None, :, :].astype(bool), flowed, out)
    return out, masks


def compose_scene_noise(
    plan: ScenePlan,
    latent_dims,
    seed: int,
    channels: int = 4,
    filter_: FrequencyFilter | None = None,
    reinit: bool = False,
    flow: str = "local",
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Background noise (stream ``bg``) with every object injected.

    With ``reinit=True`` the result is additionally frequency re-initialized
    against fresh noise from stream ``eta``.
    """
    h_lat, w_lat = latent_dims
    dims = (plan.frames, channels, h_lat, w_lat)
    background = RngStream(seed, "bg").normal(dims)
    noise, masks = inject_objects(background, plan, latent_dims, seed, flow)
    n_overlap = overlap_cells(masks)
    if n_overlap:
        log.warning("overlap cells: %d (later objects overwrite earlier ones)", n_overlap)
    if reinit:
        if filter_ is None:
            raise InputError("reinit requested without a frequency filter")
        noise = frequency_reinit(noise, RngStream(seed, "eta").normal(dims), filter_)
    return noise, masks
