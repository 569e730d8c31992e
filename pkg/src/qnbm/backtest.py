"""Rolling-origin backtest with periodic recalibration."""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import BacktestPlan, EnsembleSpec, ModelConfig, TrainConfig, WindowConfig
from .dataset import TimeSeriesFrame, WindowedDataset, build_windows
from .ensemble import run_ensemble
from .errors import ConfigError, DataError
from .forecast import QuantileForecast, concat, predict
from .params import ModelParams
from .training import fit

log = logging.getLogger(__name__)


@dataclass
class BacktestResult:
    forecast: QuantileForecast
    targets: np.ndarray
    blocks: list[tuple[dt.date, dt.date]]
    models: list[list[ModelParams]]
    checkpoints: list[Path] = field(default_factory=list)


def backtest_windows(frame: TimeSeriesFrame, plan: BacktestPlan, window_cfg: WindowConfig) -> WindowedDataset:
    """Windows over the whole frame, with the age ramp scaled to the initial training span."""
    days = frame.days
    if plan.test_start not in days or plan.test_end not in days:
        raise ConfigError(
            f"test span {plan.test_start}..{plan.test_end} is not inside the frame "
            f"({days[0]}..{days[-1]})"
        )
    span = days.index(plan.test_start)
    if span < window_cfg.max_lag_days + 2:
        raise DataError(f"only {span} days before test start; not enough history to train")
    return build_windows(frame, window_cfg.model_copy(update={"age_span_days": span}))


def backtest(
    plan: BacktestPlan,
    frame: TimeSeriesFrame,
    window_cfg: WindowConfig | None = None,
    train_cfg: TrainConfig | None = None,
    model_cfg: ModelConfig | None = None,
    ensemble: EnsembleSpec | None = None,
    checkpoint_dir=None,
) -> BacktestResult:
    """Retrain before every block on all earlier days and forecast the block.

    Early stopping uses the last ``validation_fraction`` of each training
    span split into ``plan.n_folds`` chronological folds, averaged.
    """
    window_cfg = window_cfg or WindowConfig()
    model_cfg = model_cfg or ModelConfig()
    train_cfg = (train_cfg or TrainConfig()).model_copy(
        update={"validation": "sequential", "n_folds": plan.n_folds}
    )
    data = backtest_windows(frame, plan, window_cfg)
    kind = model_cfg.kind

    forecasts, blocks, models, paths = [], [], [], []
    for b, start in enumerate(plan.block_starts()):
        end = min(start + dt.timedelta(days=plan.cadence_days - 1), plan.test_end)
        train_rows = data.rows_before(start)
        if plan.lookback_days is not None:
            first = start - dt.timedelta(days=plan.lookback_days)
            train_rows = np.array([i for i in train_rows if data.days[i] >= first], dtype=int)
        test_rows = np.array([i for i, d in enumerate(data.days) if start <= d <= end], dtype=int)
        if len(train_rows) < 2 or not len(test_rows):
            raise DataError(f"block {start}: {len(train_rows)} training rows, {len(test_rows)} test rows")
        train, test = data.subset(train_rows), data.subset(test_rows)
        log.info("block %d %s..%s: %d training days", b, start, end, len(train))
        if ensemble is not None:
            res = run_ensemble(kind, train, test, train_cfg, model_cfg, ensemble)
            block_models, fc = res.members, res.forecast
        else:
            params = fit(kind, train, train_cfg, model_cfg).params
            block_models, fc = [params], predict(params, test.inputs, test.days)
        if checkpoint_dir is not None:
            for k, p in enumerate(block_models):
                suffix = f"_m{k:02d}" if ensemble is not None else ""
                paths.append(save_checkpoint(p, Path(checkpoint_dir) / f"block_{b:03d}_{start}{suffix}.ckpt"))
        forecasts.append(fc)
        blocks.append((start, end))
        models.append(block_models)

    fc = concat(forecasts)
    idx = [data.days.index(d) for d in fc.days]
    return BacktestResult(fc, data.targets[idx], blocks, models, paths)
