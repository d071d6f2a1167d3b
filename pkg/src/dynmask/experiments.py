"""Synthetic-corpus studies: complexity separation, signal comparison, and
CFS-vs-uniform training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .attention import ToyModel, token_accuracy, train
from .core import MASK, Config, DynMaskError, TokenState
from .masking import TrainingExample
from .spectral import msd_sequence, velocity, window_indices
from .tokenizer import (
    IRREGULAR,
    PERIODIC,
    STATIC,
    LabeledCorpus,
    fit_codebook,
    lookup_embeddings,
    quantize,
    synth_corpus,
)

DEFAULT_RECIPE = "static:32,sine@2:32,noise:32"
TRAIN_RECIPE = "static:6,sine@2:6,chirp@1-3:6,static:6"


class DegenerateLabels(DynMaskError):
    pass


def interior_mask(labels: np.ndarray, margin: int) -> np.ndarray:
    """Frames at least ``margin`` frames away from any segment boundary."""
    labels = np.asarray(labels)
    T = len(labels)
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    keep = np.ones(T, bool)
    for c in change:
        keep[max(c - margin, 0): c + margin] = False
    return keep


def label_means(omega: np.ndarray, labels: np.ndarray, margin: int) -> dict[int, float]:
    keep = interior_mask(labels, margin)
    return {int(k): float(omega[keep & (labels == k)].mean())
            for k in np.unique(labels) if np.any(keep & (labels == k))}


def complexity_separation(seed: int, config: Config, recipe: str = DEFAULT_RECIPE, D_m: int = 4) -> dict[int, float]:
    """Mean interior omega per complexity label on one composite sequence."""
    corpus = synth_corpus(recipe, 1, D_m=D_m, seed=seed, W=config.W)
    seq, labels = corpus.sequences[0], corpus.complexity_labels[0]
    prof = msd_sequence(seq.frames, seq.valid, config)
    return label_means(prof.omega, labels, config.W // 2 + 1)


def velocity_window_mean(frames, W: int) -> np.ndarray:
    """Mean velocity magnitude over the same window the MSD uses."""
    speed = np.linalg.norm(velocity(frames), axis=1)
    return speed[window_indices(len(speed), W)].mean(axis=1)


def signal_correlations(corpus: LabeledCorpus, config: Config) -> list[tuple[str, int, float]]:
    """Spearman correlation of each complexity signal with the ordinal labels."""
    rows = []
    for i, (seq, labels) in enumerate(zip(corpus.sequences, corpus.complexity_labels)):
        if len(np.unique(labels[seq.valid])) < 2:
            raise DegenerateLabels(f"sequence {i} has a single complexity label")
        prof = msd_sequence(seq.frames, seq.valid, config)
        signals = {
            "omega": prof.omega,
            "velocity": velocity_window_mean(seq.frames, config.W),
        }
        for name, values in signals.items():
            rho = spearmanr(values[seq.valid], labels[seq.valid]).statistic
            rows.append((name, i, float(rho)))
    return rows


@dataclass
class TokenizedCorpus:
    tokens: list[np.ndarray]
    embeddings: list[np.ndarray]
    corpus: LabeledCorpus


def tokenize(corpus: LabeledCorpus, codebook) -> TokenizedCorpus:
    toks, embs = [], []
    for seq in corpus.sequences:
        z = quantize(seq.frames, codebook)
        toks.append(z)
        embs.append(lookup_embeddings(z, codebook))
    return TokenizedCorpus(toks, embs, corpus)


def heldout_accuracy(model: ToyModel, data: TokenizedCorpus, config: Config, seed: int,
                     draws: int = 32, ratio: float = 0.5, quantile: float = 0.75) -> tuple[float, float]:
    """Masked-token accuracy on (top-quartile-omega frames, all frames).

    Each draw masks ``ratio`` of the frames uniformly at random with MASK;
    both models see the same draws for a given seed.
    """
    rng = np.random.default_rng(seed)
    hit_q = tot_q = hit_all = tot_all = 0
    for z, emb, cond, seq in zip(data.tokens, data.embeddings, data.corpus.text_conditions,
                                 data.corpus.sequences):
        prof = msd_sequence(emb, seq.valid, config)
        top = prof.omega >= np.quantile(prof.omega, quantile)
        T = len(z)
        for _ in range(draws):
            masked = np.zeros(T, bool)
            masked[rng.permutation(T)[: max(1, int(round(ratio * T)))]] = True
            ex = TrainingExample(TokenState(np.where(masked, MASK, z)), z, masked, cond, prof)
            c, n = token_accuracy(model, ex, config, np.flatnonzero(masked & top))
            hit_q, tot_q = hit_q + c, tot_q + n
            c, n = token_accuracy(model, ex, config)
            hit_all, tot_all = hit_all + c, tot_all + n
    return hit_q / max(tot_q, 1), hit_all / max(tot_all, 1)


@dataclass
class StrategyResult:
    strategy: str
    seed: int
    top_quartile_acc: float
    overall_acc: float
    curve: list[float]


def cfs_vs_uniform(seed: int, config: Config, recipe: str = TRAIN_RECIPE, n_train: int = 8,
                   n_test: int = 4, V: int = 16, D_m: int = 4) -> list[StrategyResult]:
    """Train the same initial model with CFS and with uniform masking; evaluate on held-out sequences."""
    train_c = synth_corpus(recipe, n_train, D_m=D_m, seed=seed, W=config.W)
    test_c = synth_corpus(recipe, n_test, D_m=D_m, seed=seed + 10_000, W=config.W)
    feats = np.concatenate([s.frames for s in train_c.sequences])
    codebook = fit_codebook(feats, V, iters=25, seed=seed)
    tr, te = tokenize(train_c, codebook), tokenize(test_c, codebook)
    init = ToyModel.init(V, D_m, config, np.random.default_rng([seed, 1]))
    out = []
    for strategy in ("cfs", "uniform"):
        model, curve = train(init, tr.tokens, tr.embeddings, train_c.text_conditions, config,
                             np.random.default_rng([seed, 2]), strategy=strategy)
        q, a = heldout_accuracy(model, te, config, seed=seed + 20_000)
        out.append(StrategyResult(strategy, seed, q, a, curve))
    return out


__all__ = [
    "DEFAULT_RECIPE", "TRAIN_RECIPE", "STATIC", "PERIODIC", "IRREGULAR",
    "complexity_separation", "signal_correlations", "cfs_vs_uniform", "heldout_accuracy",
    "velocity_window_mean", "interior_mask", "label_means", "tokenize", "DegenerateLabels",
]
