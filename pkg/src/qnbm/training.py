"""Pinball objective, Adam, early stopping, fitting and grid search."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import MODEL_GRID_KEYS, GridSpec, ModelConfig, TrainConfig
from .dataset import WindowedDataset
from .errors import NumericError, ParameterError, ShapeError
from .forecast import architecture
from .numkit import make_rng
from .params import ModelParams

log = logging.getLogger(__name__)


def _check_levels(quantiles) -> np.ndarray:
    g = np.asarray(quantiles, dtype=float)
    if np.any(g <= 0) or np.any(g >= 1):
        raise ParameterError(f"quantile levels must lie in (0, 1), got {g[(g <= 0) | (g >= 1)]}")
    return g


def pinball_loss(y: np.ndarray, q: np.ndarray, quantiles) -> tuple[float, np.ndarray]:
    """Mean pinball loss over (day, hour, level) and its gradient wrt ``q``.

    ``y`` is (days, H) and ``q`` is (days, H, |levels|). A tie y == q falls in
    the over-prediction branch: zero loss, gradient (1 - gamma) / N.
    """
    g = _check_levels(quantiles)
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    if q.shape != y.shape + (len(g),):
        raise ShapeError(f"targets {y.shape} and quantiles {q.shape} disagree for {len(g)} levels")
    diff = y[..., None] - q
    under = diff > 0
    loss = np.where(under, g * diff, (g - 1.0) * diff)
    n = loss.size
    grad = np.where(under, -g, 1.0 - g) / n
    return float(loss.sum() / n), grad


class Adam:
    """Adam with bias-corrected moments over a dict of named tensors."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient in tensor {name!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            tensors[name] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(params: ModelParams, grads, state: Adam, lr: float | None = None) -> None:
    if lr is not None:
        state.lr = lr
    state.step(params.tensors, grads)
    params.generation += 1


class EarlyStopping:
    """Track the best validation loss and signal a stop ``patience`` epochs after it."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.best_state = None

    def update(self, epoch: int, loss: float, snapshot=None) -> bool:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.best_state = snapshot() if snapshot is not None else None
        return epoch - self.best_epoch >= self.patience


@dataclass
class FitResult:
    params: ModelParams
    history: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = np.inf

    def history_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        lines += [f"{e},{tr!r},{va!r}" for e, tr, va in self.history]
        return "\n".join(lines) + "\n"


def validation_split(n: int, cfg: TrainConfig, rng: np.random.Generator):
    """(train rows, list of validation row groups), all sorted chronologically."""
    n_val = max(1, int(round(cfg.validation_fraction * n)))
    if n_val >= n:
        raise ParameterError(f"cannot hold out {n_val} of {n} rows for validation")
    if cfg.validation == "random":
        val = np.sort(rng.permutation(n)[:n_val])
        folds = [val]
    else:
        val = np.arange(n - n_val, n)
        folds = [f for f in np.array_split(val, min(cfg.n_folds, n_val)) if len(f)]
    train = np.setdiff1d(np.arange(n), val)
    return train, folds


def batches(rows: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    """Shuffle contiguous sub-blocks and group them into batches."""
    blocks = [rows[i : i + cfg.sub_block] for i in range(0, len(rows), cfg.sub_block)]
    order = rng.permutation(len(blocks))
    per_batch = max(1, cfg.batch_size // cfg.sub_block)
    for i in range(0, len(order), per_batch):
        yield np.concatenate([blocks[j] for j in order[i : i + per_batch]])


def validation_loss(params: ModelParams, X: np.ndarray, Y: np.ndarray, folds) -> float:
    fwd = architecture(params.kind).forward
    losses = []
    for rows in folds:
        out, _ = fwd(params, X[rows], train=False)
        losses.append(pinball_loss(Y[rows], out, params.quantiles)[0])
    return float(np.mean(losses))


def init_params(kind: str, model_cfg: ModelConfig, train_cfg: TrainConfig, data: WindowedDataset, rows, rng):
    return architecture(kind).init(
        model_cfg,
        data.inputs[rows],
        data.targets[rows],
        data.feature_names,
        data.price_columns,
        rng,
        dropout_rate=train_cfg.dropout_rate,
    )


def fit(
    kind: str,
    data: WindowedDataset,
    train_cfg: TrainConfig | None = None,
    model_cfg: ModelConfig | None = None,
    callback=None,
) -> FitResult:
    """Train with early stopping and return the best-validation parameters.

    ``callback(epoch, params)`` is invoked after every epoch.
    """
    train_cfg = train_cfg or TrainConfig()
    model_cfg = (model_cfg or ModelConfig()).model_copy(update={"kind": kind})
    if len(data) < 2:
        raise ParameterError("need at least two training rows")
    rng = make_rng(train_cfg.seed)
    train_rows, folds = validation_split(len(data), train_cfg, rng)
    params = init_params(kind, model_cfg, train_cfg, data, train_rows, rng)
    arch = architecture(kind)
    opt = Adam(train_cfg.learning_rate)
    X, Y = data.inputs, data.targets[:, : params.horizon]
    stopper = EarlyStopping(train_cfg.patience)
    result = FitResult(params)
    last_finite = 0

    for epoch in range(1, train_cfg.max_epochs + 1):
        total, count = 0.0, 0
        for rows in batches(train_rows, train_cfg, rng):
            out, cache = arch.forward(params, X[rows], train=True, rng=rng)
            loss, grad = pinball_loss(Y[rows], out, params.quantiles)
            if not np.isfinite(loss):
                raise NumericError(f"training loss diverged in epoch {epoch}; last finite epoch {last_finite}")
            try:
                adam_step(params, arch.backward(params, cache, grad), opt)
            except NumericError as exc:
                raise NumericError(f"{exc} in epoch {epoch}; last finite epoch {last_finite}") from None
            total += loss * len(rows)
            count += len(rows)
        val = validation_loss(params, X, Y, folds)
        if not np.isfinite(val):
            raise NumericError(f"validation loss diverged in epoch {epoch}; last finite epoch {last_finite}")
        last_finite = epoch
        result.history.append((epoch, total / count, val))
        if callback is not None:
            callback(epoch, params)
        if stopper.update(epoch, val, params.copy):
            break

    result.params = stopper.best_state
    result.best_epoch = stopper.best_epoch
    result.best_val_loss = stopper.best_loss
    log.debug("fit %s: best epoch %d, val %.6g", kind, stopper.best_epoch, stopper.best_loss)
    return result


def grid_cells(grid: GridSpec):
    keys = list(grid.candidates)
    for combo in itertools.product(*(grid.candidates[k] for k in keys)):
        yield dict(zip(keys, combo))


def apply_cell(cell: dict, model_cfg: ModelConfig, train_cfg: TrainConfig):
    m = {k: v for k, v in cell.items() if k in MODEL_GRID_KEYS}
    t = {k: v for k, v in cell.items() if k not in MODEL_GRID_KEYS}
    return model_cfg.model_copy(update=m), train_cfg.model_copy(update=t)


@dataclass
class GridResult:
    best_cell: dict
    model_config: ModelConfig
    train_config: TrainConfig
    scores: list[tuple[dict, float]]


def grid_search(
    kind: str,
    data: WindowedDataset,
    grid: GridSpec,
    train_cfg: TrainConfig | None = None,
    model_cfg: ModelConfig | None = None,
) -> GridResult:
    """Exhaustive search; diverging cells score +inf and ties keep the earlier cell."""
    train_cfg = train_cfg or TrainConfig()
    model_cfg = model_cfg or ModelConfig()
    scores = []
    best = None
    for cell in grid_cells(grid):
        m_cfg, t_cfg = apply_cell(cell, model_cfg, train_cfg)
        try:
            score = fit(kind, data, t_cfg, m_cfg).best_val_loss
        except NumericError as exc:
            log.warning("grid cell %s diverged: %s", cell, exc)
            score = np.inf
        scores.append((cell, score))
        if best is None or score < best[1]:
            best = (cell, score, m_cfg, t_cfg)
    return GridResult(best[0], best[2], best[3], scores)
