"""Shared types, configuration and the z-score primitive."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

MASK = 0
"""Token id reserved for the mask sentinel. Real tokens are 1..V."""


class DynMaskError(ValueError):
    """Base class for every error raised by this package."""


class RangeError(DynMaskError):
    def __init__(self, key: str, value=None, why: str = ""):
        self.key = key
        super().__init__(f"{key}={value!r} out of range{': ' + why if why else ''}")


class UnknownKey(DynMaskError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"unknown config key {key!r}")


class EmptyInput(DynMaskError):
    pass


class DimMismatch(DynMaskError):
    pass


class ShapeMismatch(DynMaskError):
    pass


class NonFinite(DynMaskError):
    pass


class OutOfRange(DynMaskError):
    pass


def _finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class MotionSequence:
    frames: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ShapeMismatch(f"frames must be T x D with T >= 1, got {frames.shape}")
        _finite("frames", frames)
        valid = np.array(self.valid, dtype=bool)
        if valid.shape != (frames.shape[0],):
            raise ShapeMismatch("valid mask length must equal T")
        if not valid.any():
            raise EmptyInput("motion sequence has no valid frame")
        frames.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_frames(cls, frames) -> "MotionSequence":
        frames = np.asarray(frames, dtype=np.float64)
        return cls(frames, np.ones(len(frames), dtype=bool))

    @property
    def T(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class Codebook:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] < 2:
            raise ShapeMismatch(f"codebook must be V x D with V >= 2, got {entries.shape}")
        _finite("codebook", entries)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def V(self) -> int:
        return self.entries.shape[0]

    @property
    def D(self) -> int:
        return self.entries.shape[1]

    def centroid(self) -> np.ndarray:
        return self.entries.mean(axis=0)


@dataclass(frozen=True)
class TokenState:
    """Token ids in 1..V, or MASK (0). ``frozen`` marks decoded positions."""

    tokens: np.ndarray
    frozen: np.ndarray | None = None
    valid: np.ndarray | None = None

    def __post_init__(self):
        tokens = np.array(self.tokens, dtype=np.int64)
        if tokens.ndim != 1:
            raise ShapeMismatch("tokens must be 1-D")
        T = len(tokens)
        frozen = np.zeros(T, bool) if self.frozen is None else np.array(self.frozen, bool)
        valid = np.ones(T, bool) if self.valid is None else np.array(self.valid, bool)
        if frozen.shape != (T,) or valid.shape != (T,):
            raise ShapeMismatch("frozen/valid must match token length")
        if np.any(tokens < 0):
            raise OutOfRange("negative token id")
        if np.any(frozen & valid & (tokens == MASK)):
            raise DynMaskError("frozen position holds MASK")
        for a in (tokens, frozen, valid):
            a.setflags(write=False)
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "frozen", frozen)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class TextCondition:
    vector: np.ndarray

    def __post_init__(self):
        vec = np.array(self.vector, dtype=np.float64).reshape(-1)
        _finite("condition", vec)
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def E(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class SpectralProfile:
    phi: np.ndarray
    omega: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.float64)
        omega = np.array(self.omega, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if phi.ndim != 2 or omega.shape != (phi.shape[0],) or valid.shape != omega.shape:
            raise ShapeMismatch("inconsistent spectral profile shapes")
        _finite("phi", phi)
        for a in (phi, omega, valid):
            a.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "valid", valid)

    @property
    def W(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class Config:
    W: int = 8
    epsilon: float = 1e-8
    tau: float = 1.0
    alpha0: float = 0.2
    lambda_sem: float = 0.3
    r_exp: int = 1
    lambda_d: float = 0.5
    beta: float = 0.5
    sigma_max: float = 0.1
    steps: int = 10
    bert_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    t_global: float = 1.0
    seed: int = 0
    layers: int = 2
    heads: int = 2
    dim: int = 16
    epochs: int = 30
    lr: float = 0.1
    max_len: int = 128

    def as_dict(self) -> dict:
        d = asdict(self)
        d["bert_ratios"] = list(self.bert_ratios)
        return d

    def replace(self, **kw) -> "Config":
        return validate_config({**self.as_dict(), **kw})


_INT_KEYS = {"W", "r_exp", "steps", "seed", "layers", "heads", "dim", "epochs", "max_len"}


def _check(cfg: Config) -> None:
    def req(key, ok, why=""):
        if not ok:
            raise RangeError(key, getattr(cfg, key), why)

    req("W", cfg.W >= 4 and cfg.W % 2 == 0, "even and >= 4")
    req("epsilon", cfg.epsilon > 0)
    req("tau", cfg.tau > 0)
    req("alpha0", 0.0 <= cfg.alpha0 <= 1.0)
    req("lambda_sem", 0.0 <= cfg.lambda_sem <= 1.0)
    req("r_exp", cfg.r_exp >= 0)
    req("lambda_d", 0.0 <= cfg.lambda_d <= 1.0)
    req("beta", cfg.beta >= 0)
    req("sigma_max", cfg.sigma_max >= 0)
    req("steps", cfg.steps >= 1)
    r = cfg.bert_ratios
    req("bert_ratios", len(r) == 3 and min(r) >= 0 and abs(sum(r) - 1.0) <= 1e-9, "nonnegative, sum to 1")
    req("t_global", cfg.t_global > 0)
    req("seed", cfg.seed >= 0)
    req("layers", cfg.layers >= 1)
    req("heads", cfg.heads >= 1)
    req("dim", cfg.dim >= 1 and cfg.dim % cfg.heads == 0, "heads must divide dim")
    req("epochs", cfg.epochs >= 0)
    req("lr", cfg.lr >= 0)
    req("max_len", cfg.max_len >= 1)


def _coerce(key: str, value):
    if key == "bert_ratios":
        if isinstance(value, str):
            value = [v for v in value.replace("/", ",").split(",") if v.strip()]
        try:
            return tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise RangeError(key, value, "expected three numbers")
    try:
        if key in _INT_KEYS:
            f = float(value)
            if not f.is_integer():
                raise RangeError(key, value, "expected an integer")
            return int(f)
        out = float(value)
    except (TypeError, ValueError):
        raise RangeError(key, value, "not a number")
    if not math.isfinite(out):
        raise RangeError(key, value, "not finite")
    return out


def validate_config(raw: dict | None = None) -> Config:
    """Build a defaulted, range-checked Config from a partial key/value map."""
    raw = dict(raw or {})
    known = {f.name for f in fields(Config)}
    for key in raw:
        if key not in known:
            raise UnknownKey(key)
    cfg = replace(Config(), **{k: _coerce(k, v) for k, v in raw.items()})
    _check(cfg)
    return cfg


def read_config_file(path: str | Path) -> dict:
    """Parse a flat ``key=value`` file with ``#`` comments into a raw map."""
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DynMaskError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value
    return raw


def zscore(values, valid=None) -> np.ndarray:
    """Population z-score over valid entries; invalid entries come back as 0."""
    x = np.asarray(values, dtype=np.float64)
    valid = np.ones(x.shape, bool) if valid is None else np.asarray(valid, bool)
    if not valid.any():
        raise EmptyInput("zscore needs at least one valid entry")
    out = np.zeros_like(x)
    sel = x[valid]
    mu = sel.mean()
    sd = np.sqrt(np.mean((sel - mu) ** 2))
    if sd < 1e-12:
        return out
    out[valid] = (sel - mu) / sd
    return out


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def schedule_count(n: int, ratio: float) -> int:
    """``ceil(n * ratio)`` that ignores float dust (cos(pi/2) is ~6e-17, not 0)."""
    return int(math.ceil(n * ratio - 1e-9))
