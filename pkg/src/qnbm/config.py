"""Validated configuration records.

Every record rejects unknown keys so that a typo in a JSON config file fails
loudly instead of silently falling back to a default.
"""

from __future__ import annotations

import datetime as dt
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def percentile_grid() -> list[float]:
    return [round(k / 100, 2) for k in range(1, 100)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class WindowConfig(_Strict):
    price_lag_days: tuple[int, ...] = (1, 2, 7)
    horizon: int = Field(24, ge=1, le=24)
    exogenous: tuple[str, ...] = ("load_fcst", "wind_fcst", "solar_fcst")
    dow_features: bool = True
    age_feature: bool = True
    # Days covered by the age ramp's [0, 1] range; None uses the whole frame.
    age_span_days: int | None = Field(None, ge=2)

    @field_validator("price_lag_days")
    @classmethod
    def _positive_lags(cls, v):
        if not v or any(k < 1 for k in v):
            raise ValueError("price lag offsets must be positive")
        if len(set(v)) != len(v):
            raise ValueError("duplicate price lag offsets")
        return tuple(sorted(v))

    @property
    def max_lag_days(self) -> int:
        return max(self.price_lag_days)

    @property
    def max_lag_hours(self) -> int:
        return 24 * self.max_lag_days


class SynthSpec(_Strict):
    """Coefficients of the synthetic price generator.

    price[h] = base(h) + a * load[h] + b * wind[h] + sigma[h] * eps
    """

    a: float = 1.0e-3
    b: float = -1.5e-3
    sigma: tuple[float, ...] = Field(
        default=tuple(3.0 + 2.0 * float(np.sin(np.pi * h / 23.0)) for h in range(24))
    )
    seed: int = 0
    start: dt.date = dt.date(2021, 1, 4)

    @field_validator("sigma")
    @classmethod
    def _sigma(cls, v):
        if len(v) != 24:
            raise ValueError(f"sigma needs 24 hourly values, got {len(v)}")
        if any(s < 0 for s in v):
            raise ValueError("sigma must be non-negative")
        return v


class ModelConfig(_Strict):
    kind: Literal["qnbm", "qrdnn"] = "qnbm"
    n_u: int = Field(64, ge=1)
    n_z: int = Field(32, ge=1)
    rank: int = Field(16, ge=1)
    factorize_w: bool = True
    factorize_v: bool = True
    revin: bool = False
    revin_eps: float = Field(1e-5, gt=0)
    sort_quantiles: bool = True
    quantiles: tuple[float, ...] = Field(default_factory=lambda: tuple(percentile_grid()))

    @field_validator("quantiles")
    @classmethod
    def _quantiles(cls, v):
        g = np.asarray(v, dtype=float)
        if g.size < 1:
            raise ValueError("at least one quantile level is required")
        if np.any(g <= 0) or np.any(g >= 1):
            raise ValueError("quantile levels must lie in (0, 1)")
        if np.any(np.diff(g) <= 0):
            raise ValueError("quantile levels must be strictly increasing")
        return tuple(float(x) for x in g)


class TrainConfig(_Strict):
    learning_rate: float = Field(5e-4, gt=0)
    dropout_rate: float = Field(0.1, ge=0, lt=1)
    max_epochs: int = Field(800, ge=1)
    patience: int = Field(20, ge=0)
    batch_size: int = Field(128, ge=1)
    sub_block: int = Field(32, ge=1)
    validation_fraction: float = Field(0.2, gt=0, lt=1)
    validation: Literal["random", "sequential"] = "random"
    n_folds: int = Field(4, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        return self


MODEL_GRID_KEYS = {"n_u", "n_z", "rank"}
TRAIN_GRID_KEYS = {"learning_rate", "dropout_rate"}


class GridSpec(_Strict):
    candidates: dict[str, tuple[float | int, ...]]

    @field_validator("candidates")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("grid needs at least one hyperparameter")
        for key, values in v.items():
            if key not in MODEL_GRID_KEYS | TRAIN_GRID_KEYS:
                raise ValueError(f"unknown grid hyperparameter {key!r}")
            if not values:
                raise ValueError(f"empty candidate list for {key!r}")
        return v


# Reference selections reported for the German market (not reproduced here).
QNBM_DE_REFERENCE = {"n_u": 64, "learning_rate": 5e-4, "dropout_rate": 0.1}
QRDNN_DE_REFERENCE = {"n_u": 640, "learning_rate": 1e-4, "dropout_rate": 0.1}
QRDNN_GRID = GridSpec(
    candidates={
        "n_u": (64, 128, 512, 640, 768),
        "dropout_rate": (0.0, 0.1, 0.3, 0.5),
        "learning_rate": (1e-3, 5e-4, 1e-4, 5e-5),
    }
)
QNBM_GRID = GridSpec(
    candidates={
        "n_u": (32, 64, 128),
        "n_z": (32, 64, 128),
        "dropout_rate": (0.0, 0.1, 0.3, 0.5),
        "learning_rate": (1e-3, 5e-4, 1e-4, 5e-5),
    }
)


class BacktestPlan(_Strict):
    test_start: dt.date
    test_end: dt.date
    cadence_days: int = Field(7, ge=1)
    lookback_days: int | None = Field(None, ge=1)
    n_folds: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _order(self):
        if self.test_end < self.test_start:
            raise ValueError("test_end precedes test_start")
        return self

    def block_starts(self) -> list[dt.date]:
        span = (self.test_end - self.test_start).days + 1
        return [
            self.test_start + dt.timedelta(days=k)
            for k in range(0, span, self.cadence_days)
        ]


class EnsembleSpec(_Strict):
    member_count: int = Field(5, ge=1)
    base_seed: int = 0
