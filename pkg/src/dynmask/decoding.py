"""Complexity-aware iterative decoding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import ToyModel, attention_forward
from .core import (
    MASK,
    Codebook,
    Config,
    DynMaskError,
    NonFinite,
    OutOfRange,
    SpectralProfile,
    TextCondition,
    TokenState,
    schedule_count,
    sigmoid,
    zscore,
)
from .masking import cosine_ratio
from .spectral import msd_sequence
from .tokenizer import lookup_embeddings


class BadProbabilities(DynMaskError):
    pass


@dataclass
class StepRecord:
    step: int
    b: np.ndarray
    temperature: np.ndarray
    sigma: np.ndarray
    tokens: np.ndarray
    confidences: np.ndarray
    frozen_positions: list[int]

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "frozen_positions": [int(i) for i in self.frozen_positions],
            "b": [float(x) for x in self.b],
            "T": [float(x) for x in self.temperature],
            "sigma": [float(x) for x in self.sigma],
            "tokens": [int(x) for x in self.tokens],
            "confidences": [float(x) for x in self.confidences],
        }


@dataclass
class DecodeTrace:
    steps: list[StepRecord] = field(default_factory=list)
    final: TokenState | None = None


def _softmax(x):
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def exploration_scores(profile: SpectralProfile | None, probs, lambda_d: float, valid=None) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise BadProbabilities("rows must be probability vectors")
    valid = np.ones(len(probs), bool) if valid is None else np.asarray(valid, bool)
    k_hat = np.zeros(len(probs)) if profile is None else zscore(profile.omega, valid)
    u_hat = zscore(1.0 - probs.max(axis=1), valid)
    return sigmoid(lambda_d * k_hat + (1.0 - lambda_d) * u_hat)


def adaptive_temperature(t_global: float, beta: float, b) -> np.ndarray:
    return t_global * (1.0 + beta * np.asarray(b, dtype=np.float64))


def adaptive_noise(sigma_max: float, b) -> np.ndarray:
    return sigma_max * np.asarray(b, dtype=np.float64)


def masked_after(n_valid: int, s: int, S: int) -> int:
    """Positions still masked after step ``s`` (``s = 0`` is the start)."""
    if not 0 <= s <= S:
        raise OutOfRange(f"step {s} outside 0..{S}")
    if s == S:
        return 0
    return min(schedule_count(n_valid, cosine_ratio(s / S)), n_valid)


def keep_count(n_valid: int, s: int, S: int) -> int:
    """Number of positions newly frozen at step ``s`` (1-based)."""
    if not 1 <= s <= S:
        raise OutOfRange(f"step {s} outside 1..{S}")
    return masked_after(n_valid, s - 1, S) - masked_after(n_valid, s, S)


def sample_step(logits, temps, noises, frozen, rng: np.random.Generator, current=None):
    """Gumbel-perturbed argmax per position at temperature ``temps``.

    Confidence is the noise-free probability of the chosen token. Frozen
    positions keep ``current`` and report confidence 1. Tokens are 1-based.
    """
    logits = np.asarray(logits, dtype=np.float64)
    T, V = logits.shape
    temps = np.asarray(temps, np.float64)[:, None]
    noises = np.asarray(noises, np.float64)[:, None]
    scaled = logits / temps
    g = rng.gumbel(size=(T, V))
    perturbed = scaled + noises * g
    if not np.all(np.isfinite(perturbed)):
        raise NonFinite("non-finite perturbed logits")
    choice = perturbed.argmax(axis=1)
    conf = _softmax(scaled)[np.arange(T), choice]
    tokens = choice + 1
    frozen = np.asarray(frozen, bool)
    if frozen.any():
        tokens[frozen] = np.asarray(current)[frozen]
        conf[frozen] = 1.0
    return tokens, conf


def decode(model: ToyModel, condition: TextCondition, T: int, config: Config,
           rng: np.random.Generator, codebook: Codebook) -> tuple[TokenState, DecodeTrace]:
    """Iterative confidence decoding with complexity-aware temperature and noise."""
    if T < 1:
        raise OutOfRange("decode length must be >= 1")
    S = config.steps
    valid = np.ones(T, bool)
    tokens = np.full(T, MASK, dtype=np.int64)
    frozen = np.zeros(T, bool)
    guess = np.full(T, MASK, dtype=np.int64)
    trace = DecodeTrace()
    for s in range(1, S + 1):
        profile = None
        if T >= 2:
            emb = lookup_embeddings(np.where(frozen, tokens, guess), codebook)
            profile = msd_sequence(emb, valid, config)
        state = TokenState(tokens, frozen, valid)
        logits, _ = attention_forward(model, state, condition, profile, config)
        probs = _softmax(logits)
        b = exploration_scores(profile, probs, config.lambda_d, valid)
        temps = adaptive_temperature(config.t_global, config.beta, b)
        noises = adaptive_noise(config.sigma_max, b)
        sampled, conf = sample_step(logits, temps, noises, frozen, rng, tokens)

        n_new = keep_count(T, s, S)
        open_ = np.flatnonzero(~frozen)
        order = open_[np.lexsort((open_, -conf[open_]))]
        newly = np.sort(order[:n_new])
        frozen[newly] = True
        tokens[newly] = sampled[newly]
        guess = np.where(frozen, tokens, sampled)
        tokens = np.where(frozen, tokens, MASK)
        trace.steps.append(StepRecord(s, b, temps, noises, sampled.copy(), conf, newly.tolist()))
    final = TokenState(tokens, frozen, valid)
    trace.final = final
    return final, trace
