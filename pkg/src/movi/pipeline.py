"""End-to-end generation and the local proxy metrics."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attention import AttentionGuidance, ObjectBinding, bind_tokens, tokenize
from .config import PipelineConfig, load_binding_overrides
from .latent import make_lowpass_filter
from .noise import compose_scene_noise, inject_objects, latent_grid, latent_rects
from .sampler import (
    ToyAttentionBackend,
    ToyDiracBackend,
    dirac_target,
    freeinit_iterate,
    make_schedule,
    rejection_sample,
)
from .trajectory import BoxTrack, ScenePlan, score_trajectory_heuristic, smoothness


@dataclass
class GenerateResult:
    video: np.ndarray
    noise: np.ndarray
    masks: list[np.ndarray]
    bindings: list[ObjectBinding]
    seed: int
    score: float | None = None


def build_backend(cfg: PipelineConfig, plan: ScenePlan, latent_dims):
    target = dirac_target(plan, latent_dims, cfg.channels)
    if cfg.backend == "toy-dirac":
        return ToyDiracBackend(target)
    return ToyAttentionBackend(channels=cfg.channels, seed=cfg.seed, target=target)


def make_bindings(plan: ScenePlan, cfg: PipelineConfig) -> list[ObjectBinding]:
    att = cfg.attention
    bindings = bind_tokens(plan.prompt, plan.objects, tokenize(plan.prompt), att.scale, att.self_scale)
    if att.bindings_file:
        by_label = {o.label: o for o in load_binding_overrides(att.bindings_file)}
        bindings = [
            replace(b, tokens=frozenset(o.tokens), scale=o.scale, self_scale=o.self_scale)
            if (o := by_label.get(b.label)) is not None
            else b
            for b in bindings
        ]
    return bindings


def generate(plan: ScenePlan, cfg: PipelineConfig, seed: int | None = None, noise=None) -> GenerateResult:
    """Scene noise, then FreeInit-style sampling with attention guidance.

    A pure function of ``(plan, cfg, seed)``; ``noise`` replaces the composed
    initial noise when given (masks are still rasterized from the plan).
    """
    seed = cfg.seed if seed is None else seed
    latent_dims = latent_grid(plan.canvas, cfg.latent_scale)
    f = cfg.filter
    filter_ = make_lowpass_filter(
        (plan.frames, *latent_dims), f.family, f.cutoff_spatial, f.cutoff_temporal, f.order
    )
    composed, masks = compose_scene_noise(
        plan, latent_dims, seed, cfg.channels, filter_, cfg.noise.reinit, cfg.noise.flow
    )
    if noise is None:
        noise = composed
    else:
        noise = np.asarray(noise, dtype=np.float64)

    backend = build_backend(cfg, plan, latent_dims)
    bindings: list[ObjectBinding] = []
    guidance = None
    if backend.has_attention and cfg.attention.enabled:
        bindings = make_bindings(plan, cfg)
        guidance = AttentionGuidance(bindings, masks, cfg.attention.step_range, cfg.attention.renormalize)

    eta_hook = None
    if cfg.reinit.reinject:
        def eta_hook(eta):
            return inject_objects(eta, plan, latent_dims, seed, cfg.noise.flow)[0]

    s = cfg.schedule
    video = freeinit_iterate(
        backend,
        noise,
        make_schedule(s.steps, s.beta_start, s.beta_end),
        filter_,
        cfg.reinit.iterations,
        seed,
        conditioning=plan.prompt,
        guidance=guidance,
        eta_hook=eta_hook,
    )
    return GenerateResult(video, noise, masks, bindings, seed)


def generate_best(plan: ScenePlan, cfg: PipelineConfig, candidates: int, seed=None, workers: int = 1):
    """Rejection sampling over seeds, scored by mean object occupancy."""
    seed = cfg.seed if seed is None else seed
    results: dict[int, GenerateResult] = {}

    def run(s):
        results[s] = generate(plan, cfg, seed=s)
        return results[s].video

    def scorer(video):
        return mean_occupancy(video, plan, cfg)

    best = rejection_sample(run, scorer, candidates, seed, workers)
    chosen = results[best.seed]
    chosen.score = best.score
    return chosen


# -- metrics -----------------------------------------------------------------


def metric_occupancy(video: np.ndarray, track: BoxTrack, latent_dims, channels=None) -> np.ndarray:
    """Per-frame share of absolute signal mass that lies inside the track's box.

    ``channels`` selects the channels summed into the magnitude (all by
    default). A frame with no mass has occupancy 0.
    """
    video = np.asarray(video)
    if video.shape[0] != track.frames or video.shape[2:] != tuple(latent_dims):
        raise ValueError(f"video {video.shape} does not match track/grid {track.frames}, {latent_dims}")
    sel = video if channels is None else video[:, list(channels)]
    mag = np.abs(sel).sum(axis=1)
    occ = np.zeros(track.frames)
    for f, (r0, r1, c0, c1) in enumerate(latent_rects(track, latent_dims)):
        total = mag[f].sum()
        if total > 0:
            occ[f] = mag[f, r0:r1, c0:c1].sum() / total
    return occ


def object_channel(index: int, channels: int) -> list[int]:
    return [index % channels]


def mean_occupancy(video, plan: ScenePlan, cfg: PipelineConfig) -> float:
    if not plan.tracks:
        return 0.0
    latent_dims = latent_grid(plan.canvas, cfg.latent_scale)
    return float(
        np.mean(
            [
                metric_occupancy(video, t, latent_dims, object_channel(i, cfg.channels)).mean()
                for i, t in enumerate(plan.tracks)
            ]
        )
    )


def dynamic_degree(video: np.ndarray) -> float:
    """Mean absolute inter-frame difference over mean absolute value."""
    video = np.asarray(video)
    if video.shape[0] < 2:
        return 0.0
    scale = float(np.mean(np.abs(video)))
    if scale == 0.0:
        return 0.0
    return float(np.mean(np.abs(np.diff(video, axis=0)))) / scale


def metrics_report(plan: ScenePlan, result: GenerateResult, cfg: PipelineConfig) -> dict:
    latent_dims = latent_grid(plan.canvas, cfg.latent_scale)
    occupancy = {
        t.label: [float(v) for v in metric_occupancy(result.video, t, latent_dims, object_channel(i, cfg.channels))]
        for i, t in enumerate(plan.tracks)
    }
    report = {
        "seed": result.seed,
        "occupancy": occupancy,
        "mean_occupancy": {k: float(np.mean(v)) for k, v in occupancy.items()},
        "dynamic_degree": dynamic_degree(result.video),
        "smoothness": smoothness(plan),
        "heuristic_score": score_trajectory_heuristic(plan),
    }
    if result.score is not None:
        report["rejection_score"] = result.score
    return report

