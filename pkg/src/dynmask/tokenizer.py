"""Nearest-neighbour tokenization, embedding lookup, k-means codebooks and
synthetic motion corpora with per-frame complexity labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MASK,
    Codebook,
    DimMismatch,
    DynMaskError,
    MotionSequence,
    TextCondition,
    TokenState,
)


class TokenOutOfRange(DynMaskError):
    pass


class TooFewSamples(DynMaskError):
    pass


class BadSpec(DynMaskError):
    pass


STATIC, PERIODIC, IRREGULAR = 0, 1, 2
_LABELS = {"static": STATIC, "sine": PERIODIC, "chirp": PERIODIC, "noise": IRREGULAR}


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # direct differences rather than the |x|^2 - 2xc + |c|^2 expansion: exact ties stay exact
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1)


def quantize(features, codebook: Codebook) -> np.ndarray:
    """Token ids (1-based) of the nearest codebook entry; ties go to the lower index."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != codebook.D:
        raise DimMismatch(f"features have dim {x.shape[1]}, codebook has {codebook.D}")
    # argmin returns the first minimum, which is the lowest index
    return np.argmin(_sq_dists(x, codebook.entries), axis=1).astype(np.int64) + 1


def lookup_embeddings(tokens, codebook: Codebook, mask_fill=None) -> np.ndarray:
    """Rows ``e_{z_t}``; MASK positions get ``mask_fill`` (codebook centroid by default)."""
    toks = tokens.tokens if isinstance(tokens, TokenState) else np.asarray(tokens, np.int64)
    if np.any((toks < 0) | (toks > codebook.V)):
        raise TokenOutOfRange(f"token ids must lie in 1..{codebook.V} or be MASK")
    fill = codebook.centroid() if mask_fill is None else np.asarray(mask_fill, np.float64)
    if fill.shape != (codebook.D,):
        raise DimMismatch("mask_fill must have codebook dimension")
    out = np.empty((len(toks), codebook.D))
    masked = toks == MASK
    out[~masked] = codebook.entries[toks[~masked] - 1]
    out[masked] = fill
    return out


def _farthest_point_init(x: np.ndarray, V: int, rng: np.random.Generator) -> np.ndarray:
    idx = [int(rng.integers(len(x)))]
    d = ((x - x[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, V):
        nxt = int(np.argmax(d))
        idx.append(nxt)
        d = np.minimum(d, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[idx].copy()


def quantization_error(features, codebook: Codebook) -> float:
    x = np.asarray(features, dtype=np.float64)
    return float(_sq_dists(x, codebook.entries).min(axis=1).sum())


def fit_codebook(features, V: int, iters: int = 25, seed: int = 0, history: list | None = None) -> Codebook:
    """Lloyd k-means with farthest-point initialisation.

    Empty clusters are reseeded to the point currently farthest from its centroid.
    If ``history`` is given, the total squared quantization error after every
    iteration is appended to it.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < V:
        raise TooFewSamples(f"need at least V={V} samples, got {len(x)}")
    if V < 2 or iters < 1:
        raise BadSpec("fit_codebook needs V >= 2 and iters >= 1")
    rng = np.random.default_rng(seed)
    centers = _farthest_point_init(x, V, rng)
    for _ in range(iters):
        d = _sq_dists(x, centers)
        assign = np.argmin(d, axis=1)
        new = centers.copy()
        taken = np.zeros(len(x), bool)
        for v in range(V):
            members = assign == v
            if members.any():
                new[v] = x[members].mean(axis=0)
            else:
                own = d[np.arange(len(x)), assign]
                own[taken] = -1.0
                far = int(np.argmax(own))
                taken[far] = True
                new[v] = x[far]
        centers = new
        if history is not None:
            history.append(float(_sq_dists(x, centers).min(axis=1).sum()))
    return Codebook(centers)


@dataclass(frozen=True)
class Segment:
    kind: str
    length: int
    m: float = 1.0
    m_end: float | None = None

    @property
    def label(self) -> int:
        return _LABELS[self.kind]


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic sequence.

    ``kind`` is static, sine, chirp, noise or composite. ``m`` is the DCT bin
    of a sine (or the start bin of a chirp, ending at ``m_end``) relative to a
    window of ``W`` frames.
    """

    kind: str
    T: int
    D_m: int = 4
    amplitude: float = 1.0
    seed: int = 0
    m: float = 2.0
    m_end: float | None = None
    W: int = 8
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def resolved_segments(self) -> tuple[Segment, ...]:
        if self.kind == "composite":
            return self.segments
        return (Segment(self.kind, self.T, self.m, self.m_end),)


def _check_spec(spec: SynthSpec) -> None:
    if spec.T < 1 or spec.D_m < 1 or not spec.amplitude > 0 or spec.W < 2:
        raise BadSpec("T, D_m, W and amplitude must be positive")
    if spec.kind not in (*_LABELS, "composite"):
        raise BadSpec(f"unknown synth kind {spec.kind!r}")
    segs = spec.resolved_segments()
    if not segs:
        raise BadSpec("composite needs at least one segment")
    if sum(s.length for s in segs) != spec.T:
        raise BadSpec("segment lengths must sum to T")
    for s in segs:
        if s.kind not in _LABELS or s.length < 1:
            raise BadSpec(f"bad segment {s}")
        if s.kind in ("sine", "chirp"):
            end = s.m if s.m_end is None else s.m_end
            if not (1 <= s.m <= spec.W - 1 and 1 <= end <= spec.W - 1):
                raise BadSpec(f"frequency bin must lie in 1..{spec.W - 1}")


def synth_motion(spec: SynthSpec) -> tuple[MotionSequence, np.ndarray]:
    """Generate a sequence and its per-frame complexity labels.

    Periodic segments have first differences ``cos(pi (t + 1/2) m / W)`` along
    a fixed unit direction (phase counted from the sequence start), so a window
    starting at a multiple of ``W / m`` sees exactly DCT basis vector ``m``.
    Static and periodic segments continue from the last frame of the previous
    segment; noise rows are i.i.d. standard normal. Everything is multiplied by
    ``amplitude`` last, so amplitude scaling is exact.
    """
    _check_spec(spec)
    rng = np.random.default_rng(spec.seed)
    D, W = spec.D_m, spec.W
    direction = rng.standard_normal(D)
    direction /= np.linalg.norm(direction)
    rows, labels = [], []
    last = direction.copy()
    t0 = 0
    for seg in spec.resolved_segments():
        n = seg.length
        t = np.arange(t0, t0 + n)
        if seg.kind == "static":
            block = np.repeat(last[None, :], n, axis=0)
        elif seg.kind == "noise":
            block = rng.standard_normal((n, D))
        else:
            if seg.kind == "sine" or seg.m_end is None:
                phase = math.pi * (t + 0.5) * seg.m / W
            else:
                # instantaneous bin moves linearly from m to m_end across the segment
                frac = np.arange(n) / max(n - 1, 1)
                bins = seg.m + (seg.m_end - seg.m) * frac
                phase = math.pi * (t0 + 0.5) * seg.m / W + np.concatenate(([0.0], np.cumsum(math.pi * bins[1:] / W)))
            vel = np.cos(phase)[:, None] * direction[None, :]
            block = last[None, :] + np.cumsum(vel, axis=0)
        rows.append(block)
        labels.extend([seg.label] * n)
        last = block[-1]
        t0 += n
    frames = spec.amplitude * np.concatenate(rows, axis=0)
    return MotionSequence.from_frames(frames), np.asarray(labels, dtype=np.int64)


def parse_recipe(text: str) -> tuple[Segment, ...]:
    """Parse ``"static:32,sine@2:32,chirp@1-3:16,noise:32"`` into segments."""
    segs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            head, length = part.rsplit(":", 1)
            kind, _, freq = head.partition("@")
            kind = kind.strip()
            m, m_end = 2.0, None
            if freq:
                lo, _, hi = freq.partition("-")
                m = float(lo)
                m_end = float(hi) if hi else None
            segs.append(Segment(kind, int(length), m, m_end))
        except ValueError as exc:
            raise BadSpec(f"cannot parse segment {part!r}") from exc
    if not segs:
        raise BadSpec("empty recipe")
    return tuple(segs)


@dataclass(frozen=True)
class LabeledCorpus:
    sequences: list[MotionSequence]
    complexity_labels: list[np.ndarray]
    text_conditions: list[TextCondition]

    def __len__(self) -> int:
        return len(self.sequences)


def synth_corpus(recipe: str | tuple[Segment, ...], n: int, D_m: int = 4, seed: int = 0,
                 W: int = 8, amplitude: float = 1.0) -> LabeledCorpus:
    """``n`` composite sequences sharing one recipe, each with its own seed.

    Text conditions are random unit vectors in feature space (E = D_m).
    """
    segs = parse_recipe(recipe) if isinstance(recipe, str) else tuple(recipe)
    T = sum(s.length for s in segs)
    seeds = np.random.SeedSequence(seed).spawn(n)
    seqs, labels, conds = [], [], []
    for ss in seeds:
        child, cond_seed = ss.generate_state(2)
        spec = SynthSpec("composite", T, D_m, amplitude, int(child), W=W, segments=segs)
        seq, lab = synth_motion(spec)
        c = np.random.default_rng(int(cond_seed)).standard_normal(D_m)
        seqs.append(seq)
        labels.append(lab)
        conds.append(TextCondition(c / np.linalg.norm(c)))
    return LabeledCorpus(seqs, labels, conds)
