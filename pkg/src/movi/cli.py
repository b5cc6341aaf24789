"""``movi`` command line: plan -> noise -> generate, plus score.

Exit codes: 0 success, 2 input/schema error, 3 endpoint error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, load_config, load_plan, save_plan
from .errors import InputError, MoviError, ParseError
from .latent import make_lowpass_filter
from .llm import LlmEndpoint, request_trajectories, score_trajectory_llm, stub_transport
from .noise import compose_scene_noise, latent_grid
from .pipeline import generate, generate_best, metrics_report
from .tensorio import read_tensor, write_masks, write_tensor
from .trajectory import (
    box_tracks_to_points,
    build_plan_prompt,
    load_fewshot,
    make_plan,
    parse_trajectories,
    score_trajectory_heuristic,
)

log = logging.getLogger("movi")


def _parse_canvas(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"canvas must look like 512x320, got {text!r}")
    return w, h


def _endpoint(cfg: PipelineConfig) -> LlmEndpoint:
    llm = cfg.llm
    return LlmEndpoint.from_env(
        base_url=llm.base_url,
        model=llm.model,
        api_key_env=llm.api_key_env,
        temperature=llm.temperature,
        max_retries=llm.max_retries,
        timeout=llm.timeout,
    )


def _stub(path) -> object | None:
    if path is None:
        return None
    return stub_transport(Path(path).read_text(encoding="utf-8"))


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_plan(args, cfg: PipelineConfig) -> int:
    frames = args.frames or cfg.frames
    canvas = args.canvas or tuple(cfg.canvas)
    fewshot = load_fewshot() if cfg.llm.fewshot == "default" and not args.zero_shot else []
    prompt_text = build_plan_prompt(args.prompt, frames, fewshot, canvas)
    raw = request_trajectories(_endpoint(cfg), prompt_text, transport=_stub(args.stub))
    try:
        tracks = parse_trajectories(raw)
    except ParseError as exc:
        print(f"error: {exc}\n--- LLM response ---\n{raw}\n---", file=sys.stderr)
        return exc.exit_code
    plan = make_plan(args.prompt, tracks, frames, canvas, cfg.box.policy())
    save_plan(plan, args.out)
    log.info("wrote %d objects x %d frames to %s", len(plan.tracks), frames, args.out)
    return 0


def _latent_setup(plan, cfg):
    latent_dims = latent_grid(plan.canvas, cfg.latent_scale)
    f = cfg.filter
    filter_ = make_lowpass_filter((plan.frames, *latent_dims), f.family, f.cutoff_spatial, f.cutoff_temporal, f.order)
    return latent_dims, filter_


def cmd_noise(args, cfg: PipelineConfig) -> int:
    plan = load_plan(args.trajectory)
    latent_dims, filter_ = _latent_setup(plan, cfg)
    noise, masks = compose_scene_noise(
        plan, latent_dims, cfg.seed, cfg.channels, filter_, cfg.noise.reinit, cfg.noise.flow
    )
    write_tensor(args.out, noise)
    write_masks(args.masks or f"{args.out}.masks", masks)
    return 0


def cmd_generate(args, cfg: PipelineConfig) -> int:
    plan = load_plan(args.trajectory)
    candidates = args.candidates or cfg.candidates
    if args.noise:
        if candidates > 1:
            raise InputError("--noise cannot be combined with --candidates > 1")
        result = generate(plan, cfg, noise=read_tensor(args.noise))
    elif candidates > 1:
        result = generate_best(plan, cfg, candidates, workers=args.workers)
    else:
        result = generate(plan, cfg)
    write_tensor(args.out, result.video)
    write_masks(args.masks or f"{args.out}.masks", result.masks)
    _write_json(args.metrics or f"{args.out}.metrics.json", metrics_report(plan, result, cfg))
    return 0


def cmd_score(args, cfg: PipelineConfig) -> int:
    plan = load_plan(args.trajectory)
    report = {"heuristic": score_trajectory_heuristic(plan)}
    if args.llm or args.stub:
        report["llm"] = score_trajectory_llm(
            _endpoint(cfg), plan.prompt, box_tracks_to_points(plan.tracks), plan.frames, transport=_stub(args.stub)
        )
    print(json.dumps(report, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="movi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"movi {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file (defaults apply for omitted keys)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("plan", help="ask the LLM director for object trajectories")
    p.add_argument("prompt")
    p.add_argument("--out", required=True, help="trajectory JSON to write")
    p.add_argument("--frames", type=int)
    p.add_argument("--canvas", type=_parse_canvas, help="WIDTHxHEIGHT in pixels")
    p.add_argument("--stub", help="file whose text stands in for the LLM reply")
    p.add_argument("--zero-shot", action="store_true", help="omit the bundled few-shot examples")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("noise", help="build structured initial noise from a trajectory file")
    p.add_argument("trajectory")
    p.add_argument("--out", required=True, help="MOVILAT1 noise tensor to write")
    p.add_argument("--masks", help="mask file (default: OUT.masks)")
    common(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("generate", help="sample a latent video from a trajectory file")
    p.add_argument("trajectory")
    p.add_argument("--out", required=True, help="MOVILAT1 video tensor to write")
    p.add_argument("--masks", help="mask file (default: OUT.masks)")
    p.add_argument("--metrics", help="metrics JSON (default: OUT.metrics.json)")
    p.add_argument("--noise", help="use this MOVILAT1 noise instead of composing it")
    p.add_argument("--candidates", type=int, help="rejection-sample this many seeds")
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("score", help="score a trajectory file")
    p.add_argument("trajectory")
    p.add_argument("--llm", action="store_true", help="also ask the LLM judge")
    p.add_argument("--stub", help="file whose text stands in for the judge reply")
    common(p)
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed)
        return args.func(args, cfg)
    except MoviError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal-error code
        print(f"internal error [{args.command}]: {exc!r}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
