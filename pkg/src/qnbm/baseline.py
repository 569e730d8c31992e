"""Dense quantile-regression network: two ReLU hidden layers with dropout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import ContractError
from .layers import dropout_mask
from .model import initial_beta
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

OUTPUT_STD = 0.01


def init_qrdnn(
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
    H = np.asarray(Y).shape[1]
    G = len(config.quantiles)
    n_u = config.n_u
    t = {
        "L1_W": rng.normal(0.0, np.sqrt(2.0 / n_f), size=(n_u, n_f)),
        "L1_b": np.zeros(n_u),
        "L2_W": rng.normal(0.0, np.sqrt(2.0 / n_u), size=(n_u, n_u)),
        "L2_b": np.zeros(n_u),
        "out_W": rng.normal(0.0, OUTPUT_STD, size=(H * G, n_u)),
        "beta": np.zeros((H, G)),
        "revin_scale": np.ones(1),
        "revin_shift": np.zeros(1),
    }
    params = ModelParams(
        kind="qrdnn",
        config=config,
        dropout_rate=float(dropout_rate),
        horizon=H,
        feature_names=list(feature_names),
        tensors=t,
        stats=input_statistics(X, price_columns, config.revin),
    )
    t["beta"] = initial_beta(params, X, Y)
    return params


@dataclass
class QrdnnCache:
    generation: int
    X: np.ndarray
    Xn: np.ndarray
    norm: NormState
    h1: np.ndarray
    d1: np.ndarray
    m1: np.ndarray | None
    h2: np.ndarray
    d2: np.ndarray
    m2: np.ndarray | None
    head: np.ndarray


def forward(
    params: ModelParams,
    X: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, QrdnnCache]:
    X = check_inputs(params, X)
    t = params.tensors
    Xn, norm = normalize_inputs(params, X)
    rate = params.dropout_rate

    h1 = Xn @ t["L1_W"].T + t["L1_b"]
    m1 = dropout_mask(rng, h1.shape, rate) if train else None
    d1 = np.maximum(h1, 0.0)
    if m1 is not None:
        d1 = d1 * m1
    h2 = d1 @ t["L2_W"].T + t["L2_b"]
    m2 = dropout_mask(rng, h2.shape, rate) if train else None
    d2 = np.maximum(h2, 0.0)
    if m2 is not None:
        d2 = d2 * m2
    head = d2 @ t["out_W"].T + t["beta"].ravel()
    out = denormalize_outputs(params, head, norm)
    cache = QrdnnCache(params.generation, X, Xn, norm, h1, d1, m1, h2, d2, m2, head)
    return out.reshape(X.shape[0], params.horizon, -1), cache


def backward(params: ModelParams, cache: QrdnnCache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    if cache.generation != params.generation:
        raise ContractError(
            f"stale cache: computed at generation {cache.generation}, "
            f"parameters are at {params.generation}"
        )
    t = params.tensors
    B = cache.X.shape[0]
    grads: dict[str, np.ndarray] = {}
    g_head = denormalize_backward(
        params, cache.head, cache.norm, np.asarray(grad_out, dtype=float).reshape(B, -1), grads
    )
    grads["beta"] = g_head.sum(axis=0).reshape(t["beta"].shape)
    grads["out_W"] = g_head.T @ cache.d2

    g_d2 = g_head @ t["out_W"]
    if cache.m2 is not None:
        g_d2 = g_d2 * cache.m2
    g_h2 = g_d2 * (cache.h2 > 0)
    grads["L2_W"] = g_h2.T @ cache.d1
    grads["L2_b"] = g_h2.sum(axis=0)

    g_d1 = g_h2 @ t["L2_W"]
    if cache.m1 is not None:
        g_d1 = g_d1 * cache.m1
    g_h1 = g_d1 * (cache.h1 > 0)
    grads["L1_W"] = g_h1.T @ cache.Xn
    grads["L1_b"] = g_h1.sum(axis=0)
    if cache.norm.mean is not None:
        normalize_backward(cache.norm, g_h1 @ t["L1_W"], grads)
    return grads
