"""Cross-attention with per-object, per-region token re-weighting.

A backend calls :func:`guided_cross_attention` at each cross-attention site.
For every object ``i`` the attention columns of tokens naming a *different*
object are multiplied by that object's scale ``c`` inside ``i``'s box; all
other entries are left alone. There is no renormalization by default, so
rows may stop summing to one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError, UnboundObjectError


@dataclass(frozen=True)
class ProjectionSet:
    w_q: np.ndarray  # (d, d_k)
    w_k: np.ndarray  # (d, d_k)
    w_v: np.ndarray  # (d, d_v)

    def __post_init__(self):
        d, d_k = self.w_q.shape
        if self.w_k.shape != (d, d_k) or self.w_v.ndim != 2 or self.w_v.shape[0] != d:
            raise ShapeError(
                f"inconsistent projections: W_Q {self.w_q.shape}, W_K {self.w_k.shape}, W_V {self.w_v.shape}"
            )

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_k(self) -> int:
        return self.w_q.shape[1]

    @property
    def d_v(self) -> int:
        return self.w_v.shape[1]

    @classmethod
    def random(cls, d: int, d_k: int, d_v: int, rng: np.random.Generator) -> "ProjectionSet":
        scale = 1.0 / np.sqrt(d)
        return cls(
            rng.standard_normal((d, d_k)) * scale,
            rng.standard_normal((d, d_k)) * scale,
            rng.standard_normal((d, d_v)) * scale,
        )


@dataclass(frozen=True)
class ObjectBinding:
    """Tokens owned by one object and where they get scaled.

    ``foreign`` lists the object indices whose boxes suppress (or amplify) this
    object's tokens by ``scale``. ``self_scale`` applies inside the object's own
    box and defaults to 1 (no change).
    """

    object_index: int
    label: str
    tokens: frozenset[int]
    foreign: tuple[int, ...] = ()
    scale: float = 0.0
    self_scale: float = 1.0

    def __post_init__(self):
        for c in (self.scale, self.self_scale):
            if not -2.0 <= c <= 2.0:
                raise ParameterError(f"attention scale must lie in [-2, 2], got {c}")


def _attention_probs(x: np.ndarray, e: np.ndarray, proj: ProjectionSet) -> np.ndarray:
    q = x.reshape(-1, x.shape[-1]) @ proj.w_q
    k = e @ proj.w_k
    logits = (q @ k.T) / np.sqrt(proj.d_k)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def _check_inputs(x, e, proj):
    if x.ndim != 4 or x.shape[-1] != proj.d:
        raise ShapeError(f"features must be (T, H, W, {proj.d}), got {x.shape}")
    if e.ndim != 2 or e.shape[1] != proj.d:
        raise ShapeError(f"embeddings must be (L, {proj.d}), got {e.shape}")


def cross_attention(x: np.ndarray, e: np.ndarray, proj: ProjectionSet) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(X', A)`` with ``A = softmax(Q K^T / sqrt(d_k))`` of shape ``(T*H*W, L)``."""
    x, e = np.asarray(x, dtype=np.float64), np.asarray(e, dtype=np.float64)
    _check_inputs(x, e, proj)
    a = _attention_probs(x, e, proj)
    v = e @ proj.w_v
    return (a @ v).reshape(*x.shape[:3], proj.d_v), a


_WORD_RE = re.compile(r"[a-z0-9]+")


def _token_matches(token: str, words: set[str]) -> bool:
    for tok in _WORD_RE.findall(token.lower()):
        if tok in words or any(tok in (w + "s", w + "es") for w in words):
            return True
    return False


def tokenize(prompt: str) -> list[tuple[int, str]]:
    """Whitespace tokenizer used by the toy backend; real backends pass their own spans."""
    return list(enumerate(prompt.split()))


def bind_tokens(
    prompt: str,
    objects,
    token_spans,
    scale: float = 0.0,
    self_scale: float = 1.0,
) -> list[ObjectBinding]:
    """Bind prompt tokens to objects by case-insensitive label/word match.

    Tokens that match several objects (e.g. "dogs" for "Dog 1" and "Dog 2") go
    to the first of them, and objects sharing a token are never treated as
    competitors of each other.
    """
    matched: list[set[int]] = []
    for label in objects:
        words = {w for w in _WORD_RE.findall(label.lower()) if not w.isdigit()}
        words.add(label.lower())
        hits = {idx for idx, text in token_spans if _token_matches(text, words)}
        if not hits:
            raise UnboundObjectError(f"object {label!r} matches no token of prompt {prompt!r}")
        matched.append(hits)

    bindings = []
    claimed: set[int] = set()
    for i, label in enumerate(objects):
        own = frozenset(matched[i] - claimed)
        claimed |= own
        foreign = tuple(k for k in range(len(objects)) if k != i and not (matched[k] & matched[i]))
        bindings.append(ObjectBinding(i, label, own, foreign, scale, self_scale))
    return bindings


def resample_mask_to_attention(mask: np.ndarray, attn_dims) -> np.ndarray:
    """Nearest-neighbour resize of a ``(T, H, W)`` mask; non-empty frames stay non-empty."""
    mask = np.asarray(mask)
    t, ha, wa = attn_dims
    if mask.ndim != 3 or mask.shape[0] != t:
        raise ShapeError(f"mask {mask.shape} cannot be resampled to {tuple(attn_dims)}")
    h, w = mask.shape[1:]
    if (h, w) == (ha, wa):
        return mask.copy()
    rows = np.minimum(((np.arange(ha) + 0.5) * h / ha).astype(int), h - 1)
    cols = np.minimum(((np.arange(wa) + 0.5) * w / wa).astype(int), w - 1)
    out = mask[:, rows[:, None], cols[None, :]].copy()
    for f in range(t):
        if mask[f].any() and not out[f].any():
            ri, ci = np.nonzero(mask[f])
            i = min(int((ri.mean() + 0.5) * ha / h), ha - 1)
            j = min(int((ci.mean() + 0.5) * wa / w), wa - 1)
            out[f, i, j] = 1
    return out


def reweight_map(
    a: np.ndarray,
    bindings,
    masks,
    attn_dims,
    renormalize: bool = False,
) -> np.ndarray:
    """Scale bound token columns inside foreign boxes.

    ``masks[k]`` is object ``k``'s mask at attention resolution ``attn_dims``
    ``(T, H_a, W_a)``; rows of ``a`` follow the same row-major cell order. A
    cell inside several foreign boxes is scaled once.
    """
    a = np.asarray(a)
    n_cells = int(np.prod(attn_dims))
    if a.ndim != 2 or a.shape[0] != n_cells:
        raise ShapeError(f"attention map {a.shape} does not cover {n_cells} cells")
    out = a.copy()
    if not bindings:
        return out
    flat = []
    for m in masks:
        m = np.asarray(m)
        if m.shape != tuple(attn_dims):
            raise ShapeError(f"mask {m.shape} does not match attention dims {tuple(attn_dims)}")
        flat.append(m.reshape(-1).astype(bool))

    for b in bindings:
        cols = sorted(b.tokens)
        if not cols:
            continue
        if b.scale != 1.0 and b.foreign:
            region = np.zeros(n_cells, dtype=bool)
            for k in b.foreign:
                region |= flat[k]
            if b.self_scale != 1.0:
                region &= ~flat[b.object_index]
            rows = np.nonzero(region)[0]
            out[np.ix_(rows, cols)] = b.scale * a[np.ix_(rows, cols)]
        if b.self_scale != 1.0:
            rows = np.nonzero(flat[b.object_index])[0]
            out[np.ix_(rows, cols)] = b.self_scale * a[np.ix_(rows, cols)]

    if renormalize:
        sums = out.sum(axis=1, keepdims=True)
        out = np.divide(out, sums, out=np.zeros_like(out), where=np.abs(sums) > 1e-12)
    return out


@dataclass
class AttentionGuidance:
    """Bindings and masks handed to a backend, plus when to apply them."""

    bindings: list[ObjectBinding] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)  # latent-resolution (T, H, W)
    step_range: tuple[int, int] | None = None  # [start, stop) sampling-step indices
    renormalize: bool = False

    def active(self, step: int) -> bool:
        if not self.bindings:
            return False
        if self.step_range is None:
            return True
        lo, hi = self.step_range
        return lo <= step < hi


def guided_cross_attention(
    x: np.ndarray,
    e: np.ndarray,
    proj: ProjectionSet,
    bindings=(),
    masks=(),
    renormalize: bool = False,
) -> np.ndarray:
    """Cross-attention whose map is re-weighted before multiplying the values.

    ``masks`` may be at any resolution with the right frame count; they are
    resampled to the feature grid.
    """
    x, e = np.asarray(x, dtype=np.float64), np.asarray(e, dtype=np.float64)
    _check_inputs(x, e, proj)
    a = _attention_probs(x, e, proj)
    if bindings:
        attn_dims = x.shape[:3]
        resized = [resample_mask_to_attention(m, attn_dims) for m in masks]
        a = reweight_map(a, bindings, resized, attn_dims, renormalize)
    v = e @ proj.w_v
    return (a @ v).reshape(*x.shape[:3], proj.d_v)
