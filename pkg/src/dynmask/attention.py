"""Motion-aware attention inside a small masked-token transformer.

Everything is plain numpy with hand-written gradients. One sequence at a
time; slot 0 of every layer is the projected text condition, slots 1..T are
motion frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MASK,
    Config,
    DimMismatch,
    DynMaskError,
    NonFinite,
    ShapeMismatch,
    SpectralProfile,
    TextCondition,
    TokenState,
)
from .spectral import SimilarityMatrix, similarity_matrix

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


class EmptyMask(DynMaskError):
    pass


@dataclass
class ToyModel:
    V: int
    E: int
    dim: int
    heads: int
    layers: int
    max_len: int
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, V: int, E: int, config: Config, rng: np.random.Generator) -> "ToyModel":
        d, L = config.dim, config.layers
        if d % config.heads:
            raise DimMismatch("heads must divide dim")

        def normal(*shape, scale):
            return rng.standard_normal(shape) * scale

        p = {
            "tok_emb": normal(V + 1, d, scale=0.5),
            "pos_emb": normal(config.max_len, d, scale=0.1),
            "cond_w": normal(E, d, scale=1.0 / math.sqrt(E)),
            "cond_b": np.zeros(d),
        }
        for l in range(L):
            for name in ("wq", "wk", "wv", "wo"):
                p[f"l{l}.{name}"] = normal(d, d, scale=1.0 / math.sqrt(d))
            p[f"l{l}.ln1_g"] = np.ones(d)
            p[f"l{l}.ln1_b"] = np.zeros(d)
            p[f"l{l}.ln2_g"] = np.ones(d)
            p[f"l{l}.ln2_b"] = np.zeros(d)
            p[f"l{l}.w1"] = normal(d, 4 * d, scale=1.0 / math.sqrt(d))
            p[f"l{l}.b1"] = np.zeros(4 * d)
            p[f"l{l}.w2"] = normal(4 * d, d, scale=1.0 / math.sqrt(4 * d))
            p[f"l{l}.b2"] = np.zeros(d)
        p["out_w"] = normal(d, V, scale=1.0 / math.sqrt(d))
        p["out_b"] = np.zeros(V)
        return cls(V, E, d, config.heads, L, config.max_len, p)

    def copy(self) -> "ToyModel":
        return ToyModel(self.V, self.E, self.dim, self.heads, self.layers, self.max_len,
                        {k: v.copy() for k, v in self.params.items()})

    def param_names(self) -> list[str]:
        return list(self.params)


@dataclass
class AttentionRecord:
    maps: list[list[np.ndarray]]     # [layer][head] -> T' x T' attention probabilities
    fused: list[list[np.ndarray]]    # [layer][head] -> T' x T' logits fed to softmax
    key_valid: np.ndarray


def alpha_schedule(alpha0: float, layer: int) -> float:
    return alpha0 * math.exp(-layer / 3.0)


def _row_zscore(x: np.ndarray, mask: np.ndarray):
    """z-score each row over ``mask`` columns; returns (z, 1/std per row)."""
    n = mask.sum()
    xm = np.where(mask, x, 0.0)
    mu = xm.sum(axis=-1, keepdims=True) / n
    dev = np.where(mask, x - mu, 0.0)
    sd = np.sqrt((dev**2).sum(axis=-1, keepdims=True) / n)
    inv = np.where(sd < 1e-12, 0.0, 1.0 / np.where(sd < 1e-12, 1.0, sd))
    return dev * inv, inv


def _row_zscore_backward(dz: np.ndarray, z: np.ndarray, inv: np.ndarray, mask: np.ndarray) -> np.ndarray:
    n = mask.sum()
    dz = np.where(mask, dz, 0.0)
    mean_dz = dz.sum(axis=-1, keepdims=True) / n
    mean_dzz = (dz * z).sum(axis=-1, keepdims=True) / n
    return np.where(mask, (dz - mean_dz - z * mean_dzz) * inv, 0.0)


def fuse_logits(A, S_freq: SimilarityMatrix | np.ndarray, alpha_l: float, valid) -> np.ndarray:
    """Blend row-z-scored attention logits with the row-z-scored spectral prior.

    ``A`` is (T+1) x (T+1) with slot 0 the condition; ``S_freq`` covers the
    T motion frames. Entries touching the condition slot use the z-scored
    logits alone. Invalid keys become -inf.
    """
    A = np.asarray(A, dtype=np.float64)
    if alpha_l < 1e-12:
        return A
    return _fuse(A, S_freq, alpha_l, valid)[0]


def _fuse(A, S_freq, alpha_l, valid):
    S = S_freq.s if isinstance(S_freq, SimilarityMatrix) else np.asarray(S_freq, np.float64)
    valid = np.asarray(valid, bool)
    Tp = A.shape[-1]
    if A.shape[-2:] != (Tp, Tp) or S.shape != (Tp - 1, Tp - 1) or valid.shape != (Tp - 1,):
        raise ShapeMismatch(f"logits {A.shape} vs similarity {S.shape}")
    key_valid = np.concatenate(([True], valid))
    A_hat, A_inv = _row_zscore(A, key_valid)
    S_hat, _ = _row_zscore(S, valid)
    out = A_hat.copy()
    out[..., 1:, 1:] = (1.0 - alpha_l) * A_hat[..., 1:, 1:] + alpha_l * S_hat
    out = np.where(key_valid, out, -np.inf)
    return out, (A_hat, A_inv, key_valid)


def _masked_softmax(logits: np.ndarray, key_valid: np.ndarray) -> np.ndarray:
    x = np.where(key_valid, logits, -np.inf)
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


def _gelu(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * x * (1.0 + t), t


def _gelu_backward(dy, x, t):
    dt = (1.0 - t**2) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)


def _check(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"non-finite values in {name}")


def _forward(model: ToyModel, tokens, valid, cond, S, alphas):
    """Shared forward; ``S is None`` runs the fusion-free path."""
    p = model.params
    T = len(tokens)
    if T > model.max_len:
        raise DimMismatch(f"sequence length {T} exceeds positional table {model.max_len}")
    if cond.shape != (model.E,):
        raise DimMismatch(f"condition dim {cond.shape[0]} != model E {model.E}")
    if np.any((tokens < 0) | (tokens > model.V)):
        raise DimMismatch("token id outside model vocabulary")
    H, dh = model.heads, model.dim // model.heads
    scale = 1.0 / math.sqrt(dh)
    key_valid = np.concatenate(([True], valid))

    h = np.concatenate([(cond @ p["cond_w"] + p["cond_b"])[None, :],
                        p["tok_emb"][tokens] + p["pos_emb"][:T]], axis=0)
    record = AttentionRecord([], [], key_valid)
    caches = []
    for l in range(model.layers):
        c = {"h_in": h}
        u, c["ln1"] = _layer_norm(h, p[f"l{l}.ln1_g"], p[f"l{l}.ln1_b"])
        q = (u @ p[f"l{l}.wq"]).reshape(T + 1, H, dh).transpose(1, 0, 2)
        k = (u @ p[f"l{l}.wk"]).reshape(T + 1, H, dh).transpose(1, 0, 2)
        v = (u @ p[f"l{l}.wv"]).reshape(T + 1, H, dh).transpose(1, 0, 2)
        A = q @ k.transpose(0, 2, 1) * scale
        if S is not None and alphas[l] >= 1e-12:
            fused, c["fuse"] = _fuse(A, S, alphas[l], valid)
        else:
            fused, c["fuse"] = A, None
        P = _masked_softmax(fused, key_valid)
        o = (P @ v).transpose(1, 0, 2).reshape(T + 1, model.dim)
        h = h + o @ p[f"l{l}.wo"]
        c.update(u=u, q=q, k=k, v=v, P=P, o=o, h_mid=h)
        u2, c["ln2"] = _layer_norm(h, p[f"l{l}.ln2_g"], p[f"l{l}.ln2_b"])
        pre = u2 @ p[f"l{l}.w1"] + p[f"l{l}.b1"]
        act, t = _gelu(pre)
        h = h + act @ p[f"l{l}.w2"] + p[f"l{l}.b2"]
        c.update(u2=u2, pre=pre, act=act, t=t)
        _check(f"layer {l}", h)
        caches.append(c)
        record.maps.append(list(P))
        record.fused.append(list(fused))
    logits = h[1:] @ p["out_w"] + p["out_b"]
    _check("logits", logits)
    return logits, record, {"layers": caches, "h_out": h, "tokens": tokens, "T": T, "cond": cond,
                            "alphas": alphas, "scale": scale}


def _prepare(model, corrupted, condition, profile, config):
    state = corrupted if isinstance(corrupted, TokenState) else TokenState(corrupted)
    cond = condition.vector if isinstance(condition, TextCondition) else np.asarray(condition, np.float64)
    alphas = [alpha_schedule(config.alpha0, l) for l in range(model.layers)]
    S = None
    if profile is not None:
        if len(profile.omega) != len(state):
            raise ShapeMismatch("profile length differs from token length")
        S = similarity_matrix(profile, config)
    return state.tokens, state.valid, cond, S, alphas


def attention_forward(model: ToyModel, corrupted, condition, profile: SpectralProfile | None,
                      config: Config):
    """Logits (T x V; column j is token j+1) and the per-layer attention record.

    Passing ``profile=None`` runs the plain transformer with no fusion code at all.
    """
    tokens, valid, cond, S, alphas = _prepare(model, corrupted, condition, profile, config)
    logits, record, _ = _forward(model, tokens, valid, cond, S, alphas)
    return logits, record


def _log_softmax(x):
    m = x.max(axis=-1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def masked_cross_entropy(logits, targets, loss_mask) -> float:
    """Mean negative log-likelihood of 1-based targets over the masked rows."""
    loss_mask = np.asarray(loss_mask, bool)
    if not loss_mask.any():
        raise EmptyMask("loss mask selects no position")
    lp = _log_softmax(np.asarray(logits, np.float64)[loss_mask])
    tgt = np.asarray(targets)[loss_mask] - 1
    return float(-lp[np.arange(len(tgt)), tgt].mean())


def loss_and_grads(model: ToyModel, example, config: Config, use_profile: bool = True):
    """Forward + backward for one training example; returns (loss, grads, logits)."""
    tokens, valid, cond, S, alphas = _prepare(
        model, example.corrupted, example.condition,
        example.profile if use_profile else None, config)
    logits, _, cache = _forward(model, tokens, valid, cond, S, alphas)
    loss = masked_cross_entropy(logits, example.targets, example.loss_mask)
    return loss, _backward(model, logits, example.targets, example.loss_mask, cache, valid), logits


def backward(model: ToyModel, example, config: Config | None = None) -> dict[str, np.ndarray]:
    """Analytic gradient of the masked cross-entropy w.r.t. every parameter.

    The spectral prior is a constant; the z-score of the learned logits is
    differentiated exactly.
    """
    return loss_and_grads(model, example, config or Config())[1]


def _backward(model, logits, targets, loss_mask, cache, valid):
    p = model.params
    g = {k: np.zeros_like(v) for k, v in p.items()}
    T, H, dh = cache["T"], model.heads, model.dim // model.heads
    scale = cache["scale"]

    loss_mask = np.asarray(loss_mask, bool)
    n = loss_mask.sum()
    probs = np.exp(_log_softmax(logits))
    dlogits = np.zeros_like(logits)
    rows = np.flatnonzero(loss_mask)
    dlogits[rows] = probs[rows]
    dlogits[rows, np.asarray(targets)[rows] - 1] -= 1.0
    dlogits /= n

    h_out = cache["h_out"]
    g["out_w"] = h_out[1:].T @ dlogits
    g["out_b"] = dlogits.sum(axis=0)
    dh_ = np.zeros_like(h_out)
    dh_[1:] = dlogits @ p["out_w"].T

    for l in reversed(range(model.layers)):
        c = cache["layers"][l]
        # feed-forward block
        g[f"l{l}.b2"] = dh_.sum(axis=0)
        g[f"l{l}.w2"] = c["act"].T @ dh_
        dpre = _gelu_backward(dh_ @ p[f"l{l}.w2"].T, c["pre"], c["t"])
        g[f"l{l}.b1"] = dpre.sum(axis=0)
        g[f"l{l}.w1"] = c["u2"].T @ dpre
        du2 = dpre @ p[f"l{l}.w1"].T
        dx, g[f"l{l}.ln2_g"], g[f"l{l}.ln2_b"] = _layer_norm_backward(du2, p[f"l{l}.ln2_g"], c["ln2"])
        dh_ = dh_ + dx
        # attention block
        g[f"l{l}.wo"] = c["o"].T @ dh_
        do = (dh_ @ p[f"l{l}.wo"].T).reshape(T + 1, H, dh).transpose(1, 0, 2)
        P, q, k, v = c["P"], c["q"], c["k"], c["v"]
        dv = P.transpose(0, 2, 1) @ do
        dP = do @ v.transpose(0, 2, 1)
        dfused = P * (dP - (dP * P).sum(axis=-1, keepdims=True))
        if c["fuse"] is None:
            dA = dfused
        else:
            A_hat, A_inv, key_valid = c["fuse"]
            dA_hat = dfused.copy()
            dA_hat[..., 1:, 1:] *= 1.0 - cache["alphas"][l]
            dA = _row_zscore_backward(dA_hat, A_hat, A_inv, key_valid)
        dq = dA @ k * scale
        dk = dA.transpose(0, 2, 1) @ q * scale
        merge = lambda x: x.transpose(1, 0, 2).reshape(T + 1, model.dim)
        dq, dk, dv = merge(dq), merge(dk), merge(dv)
        u = c["u"]
        g[f"l{l}.wq"] = u.T @ dq
        g[f"l{l}.wk"] = u.T @ dk
        g[f"l{l}.wv"] = u.T @ dv
        du = dq @ p[f"l{l}.wq"].T + dk @ p[f"l{l}.wk"].T + dv @ p[f"l{l}.wv"].T
        dx, g[f"l{l}.ln1_g"], g[f"l{l}.ln1_b"] = _layer_norm_backward(du, p[f"l{l}.ln1_g"], c["ln1"])
        dh_ = dh_ + dx

    g["cond_b"] = dh_[0].copy()
    g["cond_w"] = np.outer(cache["cond"], dh_[0])
    np.add.at(g["tok_emb"], cache["tokens"], dh_[1:])
    g["pos_emb"][:T] = dh_[1:]
    for name, arr in g.items():
        _check(f"gradient {name}", arr)
    return g


def sgd_step(model: ToyModel, grads: dict[str, np.ndarray], lr: float, clip: float | None = None) -> None:
    """In-place SGD; ``clip`` rescales the global gradient norm down to at most that value."""
    if lr == 0:
        return
    scale = 1.0
    if clip is not None:
        norm = math.sqrt(sum(float((gk**2).sum()) for gk in grads.values()))
        if norm > clip:
            scale = clip / norm
    for k, gk in grads.items():
        model.params[k] -= (lr * scale) * gk


def train(model: ToyModel, tokens_list, embeddings_list, conditions, config: Config,
          rng: np.random.Generator, strategy: str = "cfs", valid_list=None, clip: float | None = 1.0):
    """Fixed-step SGD over the corpus, one example per sequence per epoch.

    Returns the trained model (a copy) and the per-epoch mean loss. Examples
    whose sampled budget is zero contribute no loss and no update.
    """
    from .masking import build_training_example

    model = model.copy()
    curve = []
    n = len(tokens_list)
    if n == 0:
        raise DynMaskError("empty training corpus")
    for _ in range(config.epochs):
        losses = []
        for i in rng.permutation(n):
            valid = None if valid_list is None else valid_list[i]
            ex = build_training_example(tokens_list[i], embeddings_list[i], conditions[i], config,
                                        rng, model.V, valid=valid, strategy=strategy)
            if not ex.loss_mask.any():
                continue
            loss, grads, _ = loss_and_grads(model, ex, config)
            sgd_step(model, grads, config.lr, clip)
            losses.append(loss)
        curve.append(float(np.mean(losses)) if losses else float("nan"))
    return model, curve


def token_accuracy(model: ToyModel, example, config: Config, positions=None) -> tuple[int, int]:
    """(correct, total) argmax predictions over ``positions`` (default: the loss mask)."""
    logits, _ = attention_forward(model, example.corrupted, example.condition, example.profile, config)
    pos = np.flatnonzero(example.loss_mask) if positions is None else np.asarray(positions, int)
    if len(pos) == 0:
        return 0, 0
    pred = logits[pos].argmax(axis=1) + 1
    return int((pred == np.asarray(example.targets)[pos]).sum()), len(pos)
