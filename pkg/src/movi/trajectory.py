"""Trajectory planning: prompt text, LLM output grammar, and box tracks.

The LLM answers with blocks like::

    Cat:
    (1, 10, 20) (2, 15, 22) ...

which :func:`parse_trajectories` turns into :class:`PointTrack` objects.
:func:`normalize_tracks` then resamples each track to the requested frame
count, clamps it to the canvas and grows every center into a fixed-size box.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import DegenerateTrackError, InputError, ParseError, TupleError

DEFAULT_CANVAS = (512, 320)
DEFAULT_FRAMES = 16

PLAN_TEMPLATE = (
    "Think of a trajectory for a {frames}-frame video, given the prompt. "
    "Give me (x,y) coordinates of the objects over time. "
    "You should provide co-ordinates based on the number of objects. "
    "Format should be: <Object1>: (frame, x, y) … <Object 2>: (frame, x , y) "
    "The prompt is: {prompt}"
)
CANVAS_NOTE = "Use pixel coordinates on a {width}x{height} canvas (x to the right, y downward)."

_NUM = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_NUM_RE = re.compile(_NUM)
_TUPLE_RE = re.compile(r"\(([^()]*)\)")
_GAP_RE = re.compile(r"[\s,;]*")
_MAX_LABEL_WORDS = 6


@dataclass
class PointTrack:
    label: str
    points: list[tuple[int, float, float]]

    def frames(self) -> list[int]:
        return [p[0] for p in self.points]


@dataclass(eq=False)
class BoxTrack:
    """Per-frame boxes ``(x0, y0, x1, y1)`` in canvas pixels, shape ``(T, 4)``."""

    label: str
    index: int
    boxes: np.ndarray
    canvas: tuple[int, int] = DEFAULT_CANVAS
    raw_centers: np.ndarray | None = None  # resampled, before clamping

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        w, h = self.canvas
        b = self.boxes
        if len(b) < 1:
            raise InputError(f"track {self.label!r} has no boxes")
        if np.any(b[:, 0] >= b[:, 2]) or np.any(b[:, 1] >= b[:, 3]):
            raise InputError(f"track {self.label!r} has an empty box")
        if np.any(b[:, :2] < 0) or np.any(b[:, 2] > w) or np.any(b[:, 3] > h):
            raise InputError(f"track {self.label!r} leaves the {w}x{h} canvas")

    @property
    def frames(self) -> int:
        return len(self.boxes)

    @property
    def centers(self) -> np.ndarray:
        """Box centers ``(cx, cy)`` per frame."""
        return np.stack(
            [(self.boxes[:, 0] + self.boxes[:, 2]) / 2, (self.boxes[:, 1] + self.boxes[:, 3]) / 2], axis=1
        )


@dataclass(eq=False)
class ScenePlan:
    prompt: str
    tracks: list[BoxTrack]
    frames: int = DEFAULT_FRAMES
    canvas: tuple[int, int] = DEFAULT_CANVAS

    def __post_init__(self):
        labels = self.objects
        if len(set(labels)) != len(labels):
            raise InputError(f"object labels must be unique, got {labels}")
        for track in self.tracks:
            if track.frames != self.frames:
                raise InputError(
                    f"track {track.label!r} has {track.frames} boxes, plan has {self.frames} frames"
                )

    @property
    def objects(self) -> list[str]:
        return [t.label for t in self.tracks]

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt,
            "canvas": list(self.canvas),
            "frames": self.frames,
            "objects": [
                {"label": t.label, "boxes": [[float(v) for v in box] for box in t.boxes]} for t in self.tracks
            ],
        }


@dataclass
class BoxSizePolicy:
    """Constant box size per object: a canvas fraction, or explicit pixels per label."""

    width_frac: float = 0.25
    height_frac: float = 0.25
    overrides: dict[str, tuple[float, float]] = field(default_factory=dict)

    def size(self, label: str, canvas) -> tuple[float, float]:
        w, h = canvas
        bw, bh = self.overrides.get(label, (self.width_frac * w, self.height_frac * h))
        if bw <= 0 or bh <= 0:
            raise InputError(f"box size for {label!r} must be positive")
        return min(float(bw), float(w)), min(float(bh), float(h))


# -- prompting ---------------------------------------------------------------


def load_fewshot() -> list[tuple[str, str]]:
    """The bundled pool of eight example transcripts as ``(prompt, response)``."""
    text = resources.files("movi").joinpath("data/fewshot.json").read_text(encoding="utf-8")
    return [(item["prompt"], item["response"]) for item in json.loads(text)]


def build_plan_prompt(
    prompt: str,
    frame_count: int = DEFAULT_FRAMES,
    fewshot=(),
    canvas: tuple[int, int] | None = None,
) -> str:
    if frame_count < 2:
        raise InputError(f"frame_count must be >= 2, got {frame_count}")
    parts = [f"Prompt: {p}\nResponse: {r}\n" for p, r in fewshot]
    instruction = PLAN_TEMPLATE.format(frames=frame_count, prompt=prompt)
    if canvas is not None:
        instruction += "\n" + CANVAS_NOTE.format(width=canvas[0], height=canvas[1])
    parts.append(instruction)
    return "\n".join(parts)


# -- parsing -----------------------------------------------------------------


def _header_label(chunk: str) -> str | None:
    chunk = chunk.rstrip().rstrip("*").rstrip()
    if not chunk.endswith(":"):
        return None
    head = chunk[:-1]
    cut = max(head.rfind(c) for c in "\n:.!?")
    label = head[cut + 1 :].strip().strip("*<>#-").strip()
    if not label or len(label.split()) > _MAX_LABEL_WORDS:
        return None
    return label


def _numeric_triple(body: str):
    fields = [f.strip() for f in body.split(",")]
    if len(fields) != 3 or not all(re.fullmatch(_NUM, f) for f in fields):
        return None
    return fields


def parse_trajectories(text: str) -> list[PointTrack]:
    """Extract ``Label: (frame, x, y) ...`` blocks from free-form LLM text.

    Tuples may wrap across lines; anything that is not a labelled run of
    numeric triples (intro sentences, trailing explanation, ``(10, 20)`` pairs
    in prose) is skipped. Coordinates are kept exactly as written. A label that
    occurs twice has its points appended to the first occurrence.
    """
    runs: list[list[re.Match]] = []
    for m in _TUPLE_RE.finditer(text):
        if _numeric_triple(m.group(1)) is None:
            continue
        if runs and _GAP_RE.fullmatch(text, runs[-1][-1].end(), m.start()):
            runs[-1].append(m)
        else:
            runs.append([m])

    tracks: dict[str, PointTrack] = {}
    prev_end = 0
    for run in runs:
        label = _header_label(text[prev_end : run[0].start()])
        prev_end = run[-1].end()
        if label is None:
            continue
        points = []
        for m in run:
            f, x, y = _numeric_triple(m.group(1))
            frame = float(f)
            if not frame.is_integer():
                raise TupleError(
                    f"frame index {f!r} is not an integer at offset {m.start()}", text, m.start()
                )
            points.append((int(frame), float(x), float(y)))
        if label in tracks:
            tracks[label].points.extend(points)
        else:
            tracks[label] = PointTrack(label, points)

    if not tracks:
        raise ParseError("no trajectory found in LLM response", text)
    return list(tracks.values())


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def format_tracks(tracks) -> str:
    """Serialize point tracks back into the grammar accepted by the parser."""
    lines = []
    for t in tracks:
        pts = " ".join(f"({f}, {_fmt(x)}, {_fmt(y)})" for f, x, y in t.points)
        lines.append(f"{t.label}: {pts}")
    return "\n".join(lines)


def box_tracks_to_points(tracks) -> list[PointTrack]:
    return [
        PointTrack(t.label, [(i + 1, round(float(cx), 2), round(float(cy), 2)) for i, (cx, cy) in enumerate(t.centers)])
        for t in tracks
    ]


# -- normalization -----------------------------------------------------------


def _clean_points(track: PointTrack) -> np.ndarray:
    latest: dict[int, tuple[float, float]] = {}
    for f, x, y in track.points:
        latest[int(f)] = (float(x), float(y))
    if len(latest) < 2:
        raise DegenerateTrackError(
            f"track {track.label!r} needs at least 2 distinct frames, got {len(latest)}"
        )
    frames = sorted(latest)
    return np.array([(f, *latest[f]) for f in frames], dtype=np.float64)


def resample_centers(points: np.ndarray, frame_count: int) -> np.ndarray:
    """Piecewise-linear resampling of ``(frame, x, y)`` rows to ``frame_count`` centers.

    Samples are evenly spaced from the first to the last frame, so both
    endpoints are kept and affine motion stays affine.
    """
    at = np.linspace(points[0, 0], points[-1, 0], frame_count)
    xs = np.interp(at, points[:, 0], points[:, 1])
    ys = np.interp(at, points[:, 0], points[:, 2])
    return np.stack([xs, ys], axis=1)


def normalize_tracks(
    tracks,
    frame_count: int = DEFAULT_FRAMES,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
    box_size: BoxSizePolicy | None = None,
) -> list[BoxTrack]:
    box_size = box_size or BoxSizePolicy()
    w, h = canvas
    out = []
    for index, track in enumerate(tracks):
        raw = resample_centers(_clean_points(track), frame_count)
        raw = np.where(np.isfinite(raw), raw, 0.0)
        cx = np.clip(raw[:, 0], 0.0, w)
        cy = np.clip(raw[:, 1], 0.0, h)
        bw, bh = box_size.size(track.label, canvas)
        # translate (never shrink) boxes that would poke out of the canvas
        x0 = np.clip(cx - bw / 2, 0.0, w - bw)
        y0 = np.clip(cy - bh / 2, 0.0, h - bh)
        boxes = np.stack([x0, y0, x0 + bw, y0 + bh], axis=1)
        boxes[:, 2] = np.minimum(boxes[:, 2], w)
        boxes[:, 3] = np.minimum(boxes[:, 3], h)
        out.append(BoxTrack(track.label, index, boxes, (w, h), raw_centers=raw))
    return out


def order_by_prompt(prompt: str, labels) -> list[int]:
    """Indices of ``labels`` ordered by where they are mentioned in ``prompt``.

    Each label is located by its longest word (or the label itself) found
    case-insensitively in the prompt; labels never found keep their relative
    order after the matched ones.
    """
    lowered = prompt.lower()
    matched, unmatched = [], []
    for i, label in enumerate(labels):
        candidates = [label.lower()] + sorted(
            (w for w in label.lower().split() if not w.isdigit()), key=len, reverse=True
        )
        pos = next((lowered.find(c) for c in candidates if c and c in lowered), -1)
        (matched if pos >= 0 else unmatched).append((pos, i))
    matched.sort(key=lambda pi: pi[0])
    return [i for _, i in matched] + [i for _, i in unmatched]


def make_plan(
    prompt: str,
    tracks,
    frame_count: int = DEFAULT_FRAMES,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
    box_size: BoxSizePolicy | None = None,
) -> ScenePlan:
    """Order parsed tracks by prompt mention and normalize them into a plan."""
    order = order_by_prompt(prompt, [t.label for t in tracks])
    boxes = normalize_tracks([tracks[i] for i in order], frame_count, canvas, box_size)
    return ScenePlan(prompt, boxes, frame_count, tuple(canvas))


# -- heuristic scoring -------------------------------------------------------


@dataclass(frozen=True)
class HeuristicWeights:
    """Penalty weights for :func:`score_trajectory_heuristic`.

    Each penalty is ``weight * severity`` with severity in [0, 1]:

    * speed: ``min(1, 5 * f)`` where f is the fraction of per-frame steps faster
      than ``canvas_diag * speed_limit``
    * jitter: fraction of (step, axis) pairs whose acceleration flips sign with
      both magnitudes above ``canvas_diag * jitter_threshold``
    * off_canvas: fraction of objects whose unclamped path is more than half
      outside the canvas
    * static: 1 when no object moves at all
    """

    speed: float = 3.0
    jitter: float = 2.0
    off_canvas: float = 2.0
    static: float = 5.0
    speed_limit: float = 0.25
    jitter_threshold: float = 0.01


def score_trajectory_heuristic(plan: ScenePlan, weights: HeuristicWeights = HeuristicWeights()) -> float:
    if not plan.tracks:
        return 10.0
    w, h = plan.canvas
    diag = math.hypot(w, h)
    paths = [t.raw_centers if t.raw_centers is not None else t.centers for t in plan.tracks]

    steps = [np.diff(p, axis=0) for p in paths]
    speeds = np.concatenate([np.hypot(s[:, 0], s[:, 1]) for s in steps])
    speed_sev = min(1.0, 5.0 * float(np.mean(speeds > diag * weights.speed_limit))) if speeds.size else 0.0

    flips, slots = 0, 0
    thr = diag * weights.jitter_threshold
    for p in paths:
        acc = np.diff(p, n=2, axis=0)
        if len(acc) < 2:
            continue
        a, b = acc[:-1], acc[1:]
        flips += int(np.sum((a * b < 0) & (np.abs(a) > thr) & (np.abs(b) > thr)))
        slots += a.size
    jitter_sev = flips / slots if slots else 0.0

    outside = [
        float(np.mean((p[:, 0] < 0) | (p[:, 0] > w) | (p[:, 1] < 0) | (p[:, 1] > h))) > 0.5 for p in paths
    ]
    off_sev = float(np.mean(outside))

    total_motion = sum(float(np.sum(np.hypot(s[:, 0], s[:, 1]))) for s in steps)
    static_sev = 1.0 if total_motion < 1e-9 else 0.0

    penalty = (
        weights.speed * speed_sev
        + weights.jitter * jitter_sev
        + weights.off_canvas * off_sev
        + weights.static * static_sev
    )
    return float(min(10.0, max(0.0, 10.0 - penalty)))


def smoothness(plan: ScenePlan) -> float:
    """Mean second-difference magnitude of box centers (0 for constant velocity)."""
    values = [np.hypot(*np.diff(t.centers, n=2, axis=0).T) for t in plan.tracks if t.frames >= 3]
    if not values:
        return 0.0
    return float(np.mean(np.concatenate(values)))
