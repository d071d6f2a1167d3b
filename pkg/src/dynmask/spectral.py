"""Motion Spectral Descriptor: velocity, sliding-window DCT-II, magnitude,
normalisation, mean activation, and the weighted spectral similarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Config,
    DynMaskError,
    ShapeMismatch,
    SpectralProfile,
    _finite,
)


class TooShort(DynMaskError):
    pass


class NegativeInput(DynMaskError):
    pass


@dataclass(frozen=True)
class SimilarityMatrix:
    s: np.ndarray
    valid: np.ndarray


def velocity(embeddings) -> np.ndarray:
    """First differences along time, with ``v[0] = v[1]``."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooShort("velocity needs at least two frames")
    v = np.empty_like(x)
    v[1:] = x[1:] - x[:-1]
    v[0] = v[1]
    return v


def dct_basis(W: int) -> np.ndarray:
    """``B[k, n] = cos(pi/W * (n + 1/2) * k)``; unnormalised DCT-II."""
    n = np.arange(W)
    k = np.arange(W)[:, None]
    return np.cos(np.pi / W * (n + 0.5) * k)


def dct_window(window, W: int | None = None) -> np.ndarray:
    """Unnormalised DCT-II of each column of a W x D window."""
    v = np.asarray(window, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if W is not None and v.shape[0] != W:
        raise ShapeMismatch(f"window has {v.shape[0]} rows, expected {W}")
    return dct_basis(v.shape[0]) @ v


def spectrum_magnitude(F) -> np.ndarray:
    F = _finite("spectrum", np.asarray(F, dtype=np.float64))
    return np.sqrt((F**2).sum(axis=-1))


def normalize_msd(f, epsilon: float = 1e-8) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise NegativeInput("spectral magnitudes must be nonnegative")
    norm = np.linalg.norm(f, axis=-1, keepdims=True)
    return f / (norm + epsilon)


def omega(phi) -> np.ndarray | float:
    """Mean spectral activation of one descriptor (or of each row)."""
    phi = np.asarray(phi, dtype=np.float64)
    return phi.mean(axis=-1)


def window_indices(T: int, W: int) -> np.ndarray:
    """Row t holds the clamped frame indices t - W//2 .. t + ceil(W/2) - 1."""
    offsets = np.arange(-(W // 2), W - W // 2)
    return np.clip(np.arange(T)[:, None] + offsets[None, :], 0, T - 1)


def msd_sequence(embeddings, valid=None, config: Config | None = None) -> SpectralProfile:
    """Per-frame descriptor ``phi`` and scalar summary ``omega`` for a sequence."""
    cfg = config or Config()
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooShort("MSD needs at least two frames")
    T = x.shape[0]
    valid = np.ones(T, bool) if valid is None else np.asarray(valid, bool)
    v = velocity(x)
    windows = v[window_indices(T, cfg.W)]  # T x W x D
    F = np.einsum("kn,tnd->tkd", dct_basis(cfg.W), windows)
    phi = normalize_msd(spectrum_magnitude(F), cfg.epsilon)
    phi[~valid] = 0.0
    return SpectralProfile(phi, omega(phi), valid)


def frequency_weights(W: int) -> np.ndarray:
    e = np.exp(-np.arange(W) / 3.0)
    return e / e.sum()


def spectral_similarity(phi_i, phi_j, w=None, tau: float = 1.0) -> float:
    phi_i = np.asarray(phi_i, dtype=np.float64)
    phi_j = np.asarray(phi_j, dtype=np.float64)
    w = frequency_weights(len(phi_i)) if w is None else np.asarray(w)
    return float(-np.sum(w * (phi_i - phi_j) ** 2) / tau)


def similarity_matrix(profile: SpectralProfile, config: Config | None = None) -> SimilarityMatrix:
    """Pairwise spectral similarity; invalid rows and columns hold ``min - 1``."""
    tau = (config or Config()).tau
    phi = profile.phi
    w = frequency_weights(phi.shape[1])
    diff = phi[:, None, :] - phi[None, :, :]
    s = -np.einsum("ijk,k->ij", diff**2, w) / tau
    valid = profile.valid
    pair = valid[:, None] & valid[None, :]
    if not pair.all():
        s[~pair] = s[pair].min() - 1.0
    return SimilarityMatrix(s, valid.copy())
