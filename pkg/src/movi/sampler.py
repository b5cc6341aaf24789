"""Deterministic DDIM sampling, the FreeInit-style outer loop, and toy backends."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Protocol

import numpy as np

from .attention import AttentionGuidance, ProjectionSet, guided_cross_attention, tokenize
from .errors import BackendError, ParameterError, RejectionError, ScheduleIndexError
from .latent import FrequencyFilter, RngStream
from .noise import frequency_reinit
from .trajectory import ScenePlan

log = logging.getLogger(__name__)

BASE_STEPS = 1000


@dataclass(frozen=True)
class DiffusionSchedule:
    """``timesteps`` ascending, ``alpha_bar[k]`` the cumulative alpha at ``timesteps[k]``."""

    timesteps: np.ndarray
    alpha_bar: np.ndarray
    base_alpha_bar: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.timesteps)

    @property
    def t_max(self) -> int:
        return int(self.timesteps[-1])

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative alpha on the base grid; ``t = -1`` is the clean limit (1.0)."""
        if t == -1:
            return 1.0
        if not 0 <= t < len(self.base_alpha_bar):
            raise ScheduleIndexError(f"timestep {t} outside [0, {len(self.base_alpha_bar)})")
        return float(self.base_alpha_bar[t])


def make_schedule(steps: int = 50, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Linear-beta schedule on a 1000-step grid, subsampled to ``steps`` DDIM steps.

    Timesteps use trailing spacing, so the noisiest step is always 999.
    """
    if not 1 <= steps <= BASE_STEPS:
        raise ParameterError(f"steps must lie in [1, {BASE_STEPS}], got {steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ParameterError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, BASE_STEPS, dtype=np.float64)
    base = np.cumprod(1.0 - betas)
    ts = np.round(np.arange(steps, 0, -1) * (BASE_STEPS / steps)).astype(np.int64) - 1
    ts = np.sort(ts)
    return DiffusionSchedule(ts, base[ts], base)


def forward_diffuse(z0: np.ndarray, t: int, schedule: DiffusionSchedule, eps: np.ndarray) -> np.ndarray:
    if np.shape(z0) != np.shape(eps):
        raise BackendError(f"z0 {np.shape(z0)} and eps {np.shape(eps)} differ")
    a = schedule.alpha_bar_at(t)
    return np.sqrt(a) * z0 + np.sqrt(1.0 - a) * eps


class DenoiserBackend(Protocol):
    has_attention: bool

    def predict_noise(self, z_t, t: int, alpha_bar: float, step: int, conditioning=None, guidance=None): ...


def ddim_sample(backend, z_T, schedule: DiffusionSchedule, conditioning=None, guidance=None) -> np.ndarray:
    """Deterministic (eta = 0) DDIM from ``z_T`` down to a clean latent.

    The last update uses a previous cumulative alpha of 1, i.e. it returns the
    final clean-latent estimate.
    """
    z = np.asarray(z_T, dtype=np.float64)
    ts, abar = schedule.timesteps[::-1], schedule.alpha_bar[::-1]
    for step, (t, a) in enumerate(zip(ts, abar)):
        eps = backend.predict_noise(z, int(t), float(a), step, conditioning, guidance)
        if np.shape(eps) != z.shape:
            raise BackendError(f"backend returned {np.shape(eps)} for input {z.shape}")
        x0 = (z - np.sqrt(1.0 - a) * eps) / np.sqrt(a)
        a_prev = float(abar[step + 1]) if step + 1 < len(abar) else 1.0
        z = np.sqrt(a_prev) * x0 + np.sqrt(1.0 - a_prev) * eps
    return z


def freeinit_iterate(
    backend,
    initial_noise,
    schedule: DiffusionSchedule,
    filter_: FrequencyFilter,
    iterations: int,
    seed: int,
    conditioning=None,
    guidance=None,
    eta_hook: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Sample, re-noise to the top timestep, swap in fresh high frequencies, resample.

    Iteration ``k`` draws its forward-diffusion noise from stream
    ``freeinit:k:eps`` and its replacement high band from ``freeinit:k:eta``.
    ``eta_hook`` may rewrite the fresh noise before mixing (object re-injection).
    """
    if iterations < 0:
        raise ParameterError(f"iterations must be >= 0, got {iterations}")
    z0 = ddim_sample(backend, initial_noise, schedule, conditioning, guidance)
    for k in range(iterations):
        eps = RngStream(seed, f"freeinit:{k}:eps").normal(z0.shape)
        eta = RngStream(seed, f"freeinit:{k}:eta").normal(z0.shape)
        if eta_hook is not None:
            eta = eta_hook(eta)
        z_t = forward_diffuse(z0, schedule.t_max, schedule, eps)
        z0 = ddim_sample(backend, frequency_reinit(z_t, eta, filter_), schedule, conditioning, guidance)
    return z0


# -- toy backends ------------------------------------------------------------


def dirac_target(plan: ScenePlan, latent_dims, channels: int = 4) -> np.ndarray:
    """Clean video with one unit-mass Gaussian blob per object per frame.

    The blob sits at the box center with sigma = box size / 6 on each axis and
    is written to channel ``object_index % channels``; everything else is 0.
    """
    h_lat, w_lat = latent_dims
    cw, ch = plan.canvas
    sy, sx = h_lat / ch, w_lat / cw
    target = np.zeros((plan.frames, channels, h_lat, w_lat))
    rows = np.arange(h_lat) + 0.5
    cols = np.arange(w_lat) + 0.5
    for i, track in enumerate(plan.tracks):
        for f, (x0, y0, x1, y1) in enumerate(track.boxes):
            cy, cx = (y0 + y1) / 2 * sy, (x0 + x1) / 2 * sx
            sig_y = max((y1 - y0) * sy / 6, 1e-3)
            sig_x = max((x1 - x0) * sx / 6, 1e-3)
            blob = np.exp(-0.5 * ((rows[:, None] - cy) / sig_y) ** 2 - 0.5 * ((cols[None, :] - cx) / sig_x) ** 2)
            total = blob.sum()
            if total > 0:
                target[f, i % channels] += blob / total
    return target


@dataclass
class ToyDiracBackend:
    """Exact noise predictor for a data distribution concentrated on ``target``."""

    target: np.ndarray
    has_attention: bool = False

    def predict_noise(self, z_t, t, alpha_bar, step=0, conditioning=None, guidance=None):
        return (z_t - np.sqrt(alpha_bar) * self.target) / np.sqrt(1.0 - alpha_bar)


def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{token.lower()}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.standard_normal(dim)


@dataclass
class ToyAttentionBackend:
    """Tiny denoiser with one guided cross-attention site per step.

    Channels are the feature dimension. The clean-latent estimate is
    ``gain * tanh(X')`` where ``X'`` is the cross-attention output of the
    noisy latent against the prompt's token embeddings, optionally pulled
    toward ``target``.
    """

    channels: int = 4
    d_k: int = 8
    seed: int = 0
    gain: float = 0.5
    target: np.ndarray | None = None
    has_attention: bool = True
    proj: ProjectionSet = field(init=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        self.proj = ProjectionSet.random(self.channels, self.d_k, self.channels, rng)

    def embed(self, prompt: str) -> np.ndarray:
        tokens = [text for _, text in tokenize(prompt)] or [""]
        return np.stack([_token_vector(tok, self.channels, self.seed) for tok in tokens])

    def predict_noise(self, z_t, t, alpha_bar, step=0, conditioning=None, guidance: AttentionGuidance | None = None):
        e = self.embed(conditioning or "")
        x = np.transpose(z_t, (0, 2, 3, 1))
        if guidance is not None and guidance.active(step):
            out = guided_cross_attention(x, e, self.proj, guidance.bindings, guidance.masks, guidance.renormalize)
        else:
            out = guided_cross_attention(x, e, self.proj)
        x0 = self.gain * np.tanh(np.transpose(out, (0, 3, 1, 2)))
        if self.target is not None:
            x0 = x0 + self.target
        return (z_t - np.sqrt(alpha_bar) * x0) / np.sqrt(1.0 - alpha_bar)


# -- rejection sampling ------------------------------------------------------


class Candidate(NamedTuple):
    video: np.ndarray
    score: float
    seed: int


def rejection_sample(
    generate_fn: Callable[[int], np.ndarray],
    scorer: Callable[[np.ndarray], float],
    candidates: int,
    seed: int,
    workers: int = 1,
) -> Candidate:
    """Best of ``candidates`` generations with seeds ``seed, seed+1, ...``.

    Ties go to the lowest seed. Candidates whose scorer raises are skipped.
    """
    if candidates < 1:
        raise ParameterError(f"candidates must be >= 1, got {candidates}")

    def run(k: int):
        video = generate_fn(seed + k)
        try:
            return video, float(scorer(video))
        except Exception as exc:  # noqa: BLE001 - any scorer failure disqualifies the candidate
            log.warning("scorer failed on seed %d: %s", seed + k, exc)
            return video, None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(candidates)))
    else:
        results = [run(k) for k in range(candidates)]

    best: Candidate | None = None
    for k, (video, score) in enumerate(results):
        if score is None or not np.isfinite(score):
            continue
        if best is None or score > best.score:
            best = Candidate(video, score, seed + k)
    if best is None:
        raise RejectionError(f"all {candidates} candidates failed scoring")
    return best
