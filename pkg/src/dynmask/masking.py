"""Cosine schedule, frame scores, Content-Focused Selection and BERT-style
corruption for building training examples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    MASK,
    Config,
    DimMismatch,
    OutOfRange,
    SpectralProfile,
    TextCondition,
    TokenState,
    schedule_count,
    zscore,
)
from .spectral import msd_sequence

DYNAMIC, SEMANTIC, EXPANSION, FILL = "dynamic", "semantic", "expansion", "fill"


@dataclass(frozen=True)
class MaskPlan:
    positions: tuple[int, ...]
    provenance: tuple[str, ...]
    K: int

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class TrainingExample:
    corrupted: TokenState
    targets: np.ndarray
    loss_mask: np.ndarray
    condition: TextCondition | None = None
    profile: SpectralProfile | None = None
    plan: MaskPlan | None = None


def cosine_ratio(r: float) -> float:
    if not 0.0 <= r <= 1.0:
        raise OutOfRange(f"schedule position {r} outside [0, 1]")
    return math.cos(math.pi * r / 2.0)


def dynamic_scores(profile: SpectralProfile, valid=None) -> np.ndarray:
    valid = profile.valid if valid is None else valid
    return zscore(profile.omega, valid)


def semantic_scores(embeddings, condition: TextCondition, valid=None) -> np.ndarray:
    x = np.asarray(embeddings, dtype=np.float64)
    c = condition.vector
    if x.shape[1] != c.shape[0]:
        raise DimMismatch(f"embedding dim {x.shape[1]} != condition dim {c.shape[0]}")
    denom = np.linalg.norm(x, axis=1) * np.linalg.norm(c)
    safe = denom > 0
    cos = np.zeros(len(x))
    cos[safe] = (x[safe] @ c) / denom[safe]
    return zscore(cos, valid)


def _ranked(scores: np.ndarray, candidates: np.ndarray) -> list[int]:
    # descending score, ties to the lower index
    idx = np.flatnonzero(candidates)
    order = np.lexsort((idx, -scores[idx]))
    return [int(i) for i in idx[order]]


def cfs_select(s_dyn, s_sem, K: int, config: Config, valid=None) -> MaskPlan:
    """Dual-quota selection with temporal expansion; always returns min(K, #valid) positions."""
    s_dyn = np.asarray(s_dyn, dtype=np.float64)
    s_sem = np.asarray(s_sem, dtype=np.float64)
    T = len(s_dyn)
    valid = np.ones(T, bool) if valid is None else np.asarray(valid, bool)
    K = max(int(K), 0)
    n_sem = int(math.floor(config.lambda_sem * K + 0.5))  # half-up, not banker's
    n_dyn = K - n_sem

    picked = np.zeros(T, bool)
    seeds: list[tuple[int, str]] = []
    for i in _ranked(s_dyn, valid)[:n_dyn]:
        picked[i] = True
        seeds.append((i, DYNAMIC))
    for i in _ranked(s_sem, valid & ~picked)[:n_sem]:
        seeds.append((i, SEMANTIC))

    # each seed is followed by its neighbours +1, -1, +2, -2, ... before the next seed
    chosen = np.zeros(T, bool)
    order: list[int] = []
    tags: list[str] = []
    for i, tag in seeds:
        for j, t in [(i, tag)] + [(i + s * r, EXPANSION) for r in range(1, config.r_exp + 1) for s in (1, -1)]:
            if 0 <= j < T and valid[j] and not chosen[j]:
                chosen[j] = True
                order.append(j)
                tags.append(t)

    order, tags = order[:K], tags[:K]
    if len(order) < K:
        chosen[:] = False
        chosen[order] = True
        for i in _ranked(s_dyn, valid & ~chosen)[: K - len(order)]:
            order.append(i)
            tags.append(FILL)
    return MaskPlan(tuple(order), tuple(tags), K)


def uniform_select(K: int, valid, rng: np.random.Generator) -> MaskPlan:
    """Baseline: K valid positions uniformly at random."""
    idx = np.flatnonzero(np.asarray(valid, bool))
    K = min(max(int(K), 0), len(idx))
    pos = rng.permutation(idx)[:K]
    return MaskPlan(tuple(int(i) for i in pos), ("uniform",) * K, K)


def apply_masking(tokens, plan: MaskPlan, bert_ratios, V: int, rng: np.random.Generator,
                  valid=None) -> TrainingExample:
    """Corrupt the planned positions: MASK / random token / unchanged."""
    targets = np.asarray(tokens, dtype=np.int64).copy()
    corrupted = targets.copy()
    loss_mask = np.zeros(len(targets), bool)
    p_mask, p_rand, _ = bert_ratios
    for i in plan.positions:
        loss_mask[i] = True
        u = rng.random()
        if u < p_mask:
            corrupted[i] = MASK
        elif u < p_mask + p_rand:
            corrupted[i] = int(rng.integers(1, V + 1))
    state = TokenState(corrupted, valid=valid)
    return TrainingExample(state, targets, loss_mask, plan=plan)


def build_training_example(tokens, embeddings, condition: TextCondition, config: Config,
                           rng: np.random.Generator, V: int, valid=None, r: float | None = None,
                           strategy: str = "cfs") -> TrainingExample:
    """One pass of the training-time masking pipeline.

    ``r`` overrides the uniform draw of the schedule position. ``strategy`` is
    ``"cfs"`` or ``"uniform"`` (random positions, same budget).
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    T = len(tokens)
    valid = np.ones(T, bool) if valid is None else np.asarray(valid, bool)
    r = rng.random() if r is None else r
    n_valid = int(valid.sum())
    K = min(schedule_count(n_valid, cosine_ratio(r)), n_valid)
    profile = msd_sequence(embeddings, valid, config)
    if strategy == "cfs":
        plan = cfs_select(dynamic_scores(profile, valid), semantic_scores(embeddings, condition, valid),
                          K, config, valid)
    elif strategy == "uniform":
        plan = uniform_select(K, valid, rng)
    else:
        raise ValueError(f"unknown masking strategy {strategy!r}")
    ex = apply_masking(tokens, plan, config.bert_ratios, V, rng, valid)
    return TrainingExample(ex.corrupted, ex.targets, ex.loss_mask, condition, profile, plan)
