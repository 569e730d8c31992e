"""Parameter container and the input/output normalisation shared by models."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .errors import DataError, ShapeError
from .layers import RevinLayer


@dataclass
class ModelParams:
    """Trainable tensors plus the frozen statistics a model needs at inference.

    ``generation`` is bumped by every optimiser step; activation caches record
    it so that a backward pass against updated parameters is detected.
    """

    kind: str
    config: ModelConfig
    dropout_rate: float
    horizon: int
    feature_names: list[str]
    tensors: dict[str, np.ndarray]
    stats: dict[str, np.ndarray]
    generation: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def quantiles(self) -> np.ndarray:
        return np.asarray(self.config.quantiles)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_outputs(self) -> int:
        return self.horizon * len(self.config.quantiles)

    @property
    def price_columns(self) -> np.ndarray:
        return np.flatnonzero(self.stats["price_mask"] > 0)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.kind,
            self.config,
            self.dropout_rate,
            self.horizon,
            list(self.feature_names),
            {k: v.copy() for k, v in self.tensors.items()},
            {k: v.copy() for k, v in self.stats.items()},
            self.generation,
            dict(self.meta),
        )

    def revin_layer(self) -> RevinLayer:
        return RevinLayer(
            float(self.tensors["revin_scale"][0]),
            float(self.tensors["revin_shift"][0]),
            self.config.revin_eps,
        )


def features_hash(names) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()


def input_statistics(X: np.ndarray, price_columns, revin: bool) -> dict[str, np.ndarray]:
    """Column statistics of the training inputs used for z-scoring."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std < 1e-12] = 1.0
    mask = np.zeros(X.shape[1])
    mask[np.asarray(price_columns, dtype=int)] = 1.0
    return {
        "input_mean": mean,
        "input_std": std,
        "feature_min": X.min(axis=0),
        "feature_max": X.max(axis=0),
        "price_mask": mask,
    }


def check_inputs(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.n_features:
        raise ShapeError(
            f"input has {X.shape[1]} columns, model expects {params.n_features}"
        )
    bad = ~np.isfinite(X)
    if bad.any():
        col = int(np.flatnonzero(bad.any(axis=0))[0])
        raise DataError(f"non-finite input in feature {params.feature_names[col]!r}")
    return X


@dataclass
class NormState:
    price_cols: np.ndarray
    mean: np.ndarray | None = None  # (B, 1) instance means of the price group
    std: np.ndarray | None = None
    xhat: np.ndarray | None = None  # instance-normalised price block before the affine map


def normalize_inputs(params: ModelParams, X: np.ndarray) -> tuple[np.ndarray, NormState]:
    """z-score every column with training statistics, except that with RevIN
    the price-lag group is normalised per instance instead."""
    Xn = (X - params.stats["input_mean"]) / params.stats["input_std"]
    pc = params.price_columns
    state = NormState(pc)
    if params.config.revin and len(pc):
        layer = params.revin_layer()
        block = X[:, pc]
        state.mean, state.std = layer.statistics(block)
        state.xhat = (block - state.mean) / state.std
        Xn[:, pc] = state.xhat * layer.scale + layer.shift
    return Xn, state


def output_scale(params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Per-row factor mapping head-space deltas to price units."""
    X = np.atleast_2d(X)
    if not params.config.revin or not len(params.price_columns):
        return np.ones(X.shape[0])
    layer = params.revin_layer()
    _, std = layer.statistics(X[:, params.price_columns])
    return std[:, 0] / layer.scale


def denormalize_outputs(params: ModelParams, head: np.ndarray, state: NormState) -> np.ndarray:
    if state.mean is None:
        return head
    a = params.tensors["revin_scale"][0]
    b = params.tensors["revin_shift"][0]
    return (head - b) / a * state.std + state.mean


def denormalize_backward(
    params: ModelParams, head: np.ndarray, state: NormState, g_out: np.ndarray, grads: dict
) -> np.ndarray:
    """Gradient wrt the head output; accumulates affine gradients into ``grads``."""
    grads.setdefault("revin_scale", np.zeros(1))
    grads.setdefault("revin_shift", np.zeros(1))
    if state.mean is None:
        return g_out
    a = params.tensors["revin_scale"][0]
    b = params.tensors["revin_shift"][0]
    g_head = g_out * state.std / a
    grads["revin_scale"][0] += -np.sum(g_head * (head - b)) / a
    grads["revin_shift"][0] += -np.sum(g_head)
    return g_head


def normalize_backward(state: NormState, g_Xn: np.ndarray, grads: dict) -> None:
    """Affine gradients contributed by the RevIN-normalised inputs."""
    if state.mean is None:
        return
    g_block = g_Xn[:, state.price_cols]
    grads["revin_scale"][0] += np.sum(g_block * state.xhat)
    grads["revin_shift"][0] += np.sum(g_block)
