"""Quantile forecast container, model dispatch, and forecast CSV I/O."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np
import pandas as pd

from . import baseline, model
from .errors import ConfigError, DataError, ShapeError
from .params import ModelParams

ARCHITECTURES = {
    "qnbm": SimpleNamespace(init=model.init_qnbm, forward=model.forward, backward=model.backward),
    "qrdnn": SimpleNamespace(
        init=baseline.init_qrdnn, forward=baseline.forward, backward=baseline.backward
    ),
}


def architecture(kind: str) -> SimpleNamespace:
    try:
        return ARCHITECTURES[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}; choose from {sorted(ARCHITECTURES)}") from None


@dataclass(frozen=True)
class QuantileForecast:
    values: np.ndarray  # (days, H, |levels|)
    quantiles: np.ndarray
    days: tuple[dt.date, ...] | None = None

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[2] != len(self.quantiles):
            raise ShapeError(
                f"forecast shape {self.values.shape} does not match {len(self.quantiles)} levels"
            )
        if self.days is not None and len(self.days) != self.values.shape[0]:
            raise ShapeError(f"{len(self.days)} day labels for {self.values.shape[0]} rows")

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def level_index(self, gamma: float) -> int:
        hit = np.flatnonzero(np.isclose(self.quantiles, gamma, atol=1e-9, rtol=0))
        if not len(hit):
            raise KeyError(gamma)
        return int(hit[0])

    def sorted(self) -> "QuantileForecast":
        return QuantileForecast(np.sort(self.values, axis=2), self.quantiles, self.days)

    def crossing_count(self) -> int:
        return int(np.sum(np.diff(self.values, axis=2) < 0))


def predict(params: ModelParams, X: np.ndarray, days=None, sort: bool | None = None) -> QuantileForecast:
    out, _ = architecture(params.kind).forward(params, X, train=False)
    fc = QuantileForecast(out, params.quantiles, tuple(days) if days is not None else None)
    if params.config.sort_quantiles if sort is None else sort:
        fc = fc.sorted()
    return fc


def concat(forecasts: list[QuantileForecast]) -> QuantileForecast:
    days = None
    if all(f.days is not None for f in forecasts):
        days = tuple(d for f in forecasts for d in f.days)
    return QuantileForecast(
        np.concatenate([f.values for f in forecasts]), forecasts[0].quantiles, days
    )


def to_long_frame(fc: QuantileForecast) -> pd.DataFrame:
    n, H, G = fc.values.shape
    days = fc.days if fc.days is not None else range(n)
    day_col = np.repeat([str(d) for d in days], H * G)
    return pd.DataFrame(
        {
            "day": day_col,
            "hour": np.tile(np.repeat(np.arange(H), G), n),
            "gamma": np.tile(fc.quantiles, n * H),
            "value": fc.values.ravel(),
        }
    )


def write_csv(fc: QuantileForecast, path, wide: bool = False) -> None:
    df = to_long_frame(fc)
    if wide:
        df = df.pivot_table(index=["day", "hour"], columns="gamma", values="value", sort=True)
        df.columns = [f"q{g:g}" for g in df.columns]
        df = df.reset_index()
    df.to_csv(path, index=False, float_format="%.17g")


def read_csv(path) -> QuantileForecast:
    df = pd.read_csv(path, float_precision="round_trip")
    if {"day", "hour", "gamma", "value"} <= set(df.columns):
        wide = df.pivot_table(index=["day", "hour"], columns="gamma", values="value", sort=True)
    elif {"day", "hour"} <= set(df.columns):
        wide = df.set_index(["day", "hour"]).sort_index()
        wide.columns = [float(c.lstrip("q")) for c in wide.columns]
    else:
        raise DataError(f"{path}: not a forecast CSV (need day, hour columns)")
    days = sorted(wide.index.get_level_values(0).unique())
    H = wide.index.get_level_values(1).nunique()
    if len(wide) != len(days) * H:
        raise DataError(f"{path}: ragged forecast, expected {len(days)}x{H} rows")
    quantiles = np.asarray(wide.columns, dtype=float)
    values = wide.to_numpy(dtype=float).reshape(len(days), H, len(quantiles))
    return QuantileForecast(values, quantiles, tuple(dt.date.fromisoformat(d) for d in days))
