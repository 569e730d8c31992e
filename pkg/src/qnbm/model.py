"""Quantile neural basis model.

A single two-layer ReLU network maps every scalar input feature to ``n_z``
shared basis values. A (possibly low-rank) projection ``W`` mixes the bases
into one shape function per feature, and a second projection ``V`` combines
the shape functions into every (hour, quantile) output:

    z(x)      = relu(w2 @ relu(w1 * x) + b2)            (n_z,)
    f_i(x)    = W[:, i] . z(x)
    q[h, g]   = beta[h, g] + sum_i V[(h, g), i] * f_i(x_i)

The first layer has no bias. Dropout acts on the basis outputs ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import ContractError, ShapeError
from .layers import dropout_mask
from .params import (
    ModelParams,
    NormState,
    check_inputs,
    denormalize_backward,
    denormalize_outputs,
    input_statistics,
    normalize_backward,
    normalize_inputs,
)

FACTOR_STD = 0.05
DENSE_STD = 0.01


def initial_beta(params: ModelParams, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Unconditional training quantiles per (hour, level) in head space."""
    Y = np.asarray(Y, dtype=float)[:, : params.horizon]
    if params.config.revin and len(params.price_columns):
        layer = params.revin_layer()
        mean, std = layer.statistics(X[:, params.price_columns])
        Y = (Y - mean) / std * layer.scale + layer.shift
    return np.quantile(Y, params.quantiles, axis=0).T.copy()


def init_qnbm(
    config: ModelConfig,
    X: np.ndarray,
    Y: np.ndarray,
    feature_names: list[str],
    price_columns,
    rng: np.random.Generator,
    dropout_rate: float = 0.0,
) -> ModelParams:
    X = np.asarray(X, dtype=float)
    n_f = X.shape[1]
    if len(feature_names) != n_f:
        raise ShapeError(f"{len(feature_names)} feature names for {n_f} columns")
    H = np.asarray(Y).shape[1]
    G = len(config.quantiles)
    n_u, n_z = config.n_u, config.n_z

    t: dict[str, np.ndarray] = {
        "w1": rng.normal(0.0, np.sqrt(2.0), size=n_u),
        "w2": rng.normal(0.0, np.sqrt(2.0 / n_u), size=(n_z, n_u)),
        "b2": np.zeros(n_z),
    }
    if config.factorize_w:
        r = min(config.rank, n_z, n_f)
        t["W_A"] = rng.normal(0.0, FACTOR_STD, size=(n_z, r))
        t["W_B"] = rng.normal(0.0, FACTOR_STD, size=(n_f, r))
    else:
        t["W"] = rng.normal(0.0, DENSE_STD, size=(n_z, n_f))
    if config.factorize_v:
        r = min(config.rank, H * G, n_f)
        t["V_A"] = rng.normal(0.0, FACTOR_STD, size=(H * G, r))
        t["V_B"] = rng.normal(0.0, FACTOR_STD, size=(n_f, r))
    else:
        t["V"] = rng.normal(0.0, DENSE_STD, size=(H * G, n_f))
    t["beta"] = np.zeros((H, G))
    t["revin_scale"] = np.ones(1)
    t["revin_shift"] = np.zeros(1)

    params = ModelParams(
        kind="qnbm",
        config=config,
        dropout_rate=float(dropout_rate),
        horizon=H,
        feature_names=list(feature_names),
        tensors=t,
        stats=input_statistics(X, price_columns, config.revin),
    )
    t["beta"] = initial_beta(params, X, Y)
    return params


def w_matrix(params: ModelParams) -> np.ndarray:
    t = params.tensors
    return t["W_A"] @ t["W_B"].T if "W_A" in t else t["W"]


def v_matrix(params: ModelParams) -> np.ndarray:
    """Head weights as a ((H * |levels|), n_f) matrix, row index h * |levels| + g."""
    t = params.tensors
    return t["V_A"] @ t["V_B"].T if "V_A" in t else t["V"]


def v_tensor(params: ModelParams) -> np.ndarray:
    return v_matrix(params).reshape(params.horizon, len(params.config.quantiles), -1)


def basis(params: ModelParams, xn: np.ndarray) -> np.ndarray:
    """Shared basis values z(x) for normalised scalar inputs, shape (..., n_z)."""
    t = params.tensors
    a1 = np.maximum(np.asarray(xn, dtype=float)[..., None] * t["w1"], 0.0)
    return np.maximum(a1 @ t["w2"].T + t["b2"], 0.0)


def shape_function(params: ModelParams, feature: int, xn: np.ndarray) -> np.ndarray:
    """f_i evaluated at normalised values of feature ``feature``."""
    return basis(params, xn) @ w_matrix(params)[:, feature]


@dataclass
class QnbmCache:
    generation: int
    X: np.ndarray
    Xn: np.ndarray
    norm: NormState
    h1: np.ndarray
    a1: np.ndarray
    h2: np.ndarray
    zd: np.ndarray
    mask: np.ndarray | None
    f: np.ndarray
    head: np.ndarray


def forward(
    params: ModelParams,
    X: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, QnbmCache]:
    """Raw (unsorted) quantile outputs of shape (rows, H, |levels|)."""
    X = check_inputs(params, X)
    t = params.tensors
    Xn, norm = normalize_inputs(params, X)

    h1 = Xn[:, :, None] * t["w1"]
    a1 = np.maximum(h1, 0.0)
    h2 = a1 @ t["w2"].T + t["b2"]
    z = np.maximum(h2, 0.0)
    mask = dropout_mask(rng, z.shape, params.dropout_rate) if train else None
    zd = z * mask if mask is not None else z

    W = w_matrix(params)
    f = np.einsum("bik,ki->bi", zd, W)
    if "V_A" in t:
        head = (f @ t["V_B"]) @ t["V_A"].T
    else:
        head = f @ t["V"].T
    head = head + t["beta"].ravel()
    out = denormalize_outputs(params, head, norm)
    cache = QnbmCache(params.generation, X, Xn, norm, h1, a1, h2, zd, mask, f, head)
    return out.reshape(X.shape[0], params.horizon, -1), cache


def backward(params: ModelParams, cache: QnbmCache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    if cache.generation != params.generation:
        raise ContractError(
            f"stale cache: computed at generation {cache.generation}, "
            f"parameters are at {params.generation}"
        )
    t = params.tensors
    B = cache.X.shape[0]
    g = np.asarray(grad_out, dtype=float).reshape(B, -1)
    grads: dict[str, np.ndarray] = {}
    g_head = denormalize_backward(params, cache.head, cache.norm, g, grads)

    grads["beta"] = g_head.sum(axis=0).reshape(t["beta"].shape)
    if "V_A" in t:
        fB = cache.f @ t["V_B"]
        gA = g_head @ t["V_A"]
        grads["V_A"] = g_head.T @ fB
        grads["V_B"] = cache.f.T @ gA
        g_f = gA @ t["V_B"].T
    else:
        grads["V"] = g_head.T @ cache.f
        g_f = g_head @ t["V"]

    W = w_matrix(params)
    g_W = np.einsum("bi,bik->ki", g_f, cache.zd)
    if "W_A" in t:
        grads["W_A"] = g_W @ t["W_B"]
        grads["W_B"] = g_W.T @ t["W_A"]
    else:
        grads["W"] = g_W

    g_z = g_f[:, :, None] * W.T[None, :, :]
    if cache.mask is not None:
        g_z = g_z * cache.mask
    g_h2 = g_z * (cache.h2 > 0)
    n_z, n_u = t["w2"].shape
    grads["w2"] = g_h2.reshape(-1, n_z).T @ cache.a1.reshape(-1, n_u)
    grads["b2"] = g_h2.sum(axis=(0, 1))
    g_h1 = (g_h2 @ t["w2"]) * (cache.h1 > 0)
    grads["w1"] = np.einsum("bij,bi->j", g_h1, cache.Xn)
    if cache.norm.mean is not None:
        normalize_backward(cache.norm, g_h1 @ t["w1"], grads)
    return grads
