"""Hourly market data: ingestion, sliding windows, and a synthetic generator.

A frame always holds whole days of 24 hourly values. For delivery day ``d``
the conditioning vector concatenates the 24 prices of each lag day, the 24
day-ahead forecasts of each exogenous series for day ``d`` itself, and the
calendar features of ``d``.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import norm

from .config import SynthSpec, WindowConfig
from .errors import ConfigError, DataError, SchemaError

DEFAULT_COLUMNS = ("timestamp", "price", "load_fcst", "wind_fcst", "solar_fcst")
MAX_FILL_HOURS = 3


@dataclass(frozen=True)
class TimeSeriesFrame:
    timestamps: pd.DatetimeIndex
    price: np.ndarray
    exogenous: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.timestamps)
        if self.price.shape != (n,):
            raise DataError(f"price length {self.price.shape} != {n} timestamps")
        for name, values in self.exogenous.items():
            if values.shape != (n,):
                raise DataError(f"series {name!r} length {values.shape} != {n}")
        if n % 24:
            raise DataError(f"frame length {n} is not a whole number of days")

    @property
    def n_days(self) -> int:
        return len(self.timestamps) // 24

    @property
    def days(self) -> list[dt.date]:
        return [ts.date() for ts in self.timestamps[::24]]

    def daily(self, name: str) -> np.ndarray:
        """Series reshaped to (days, 24)."""
        values = self.price if name == "price" else self.exogenous[name]
        return values.reshape(self.n_days, 24)

    def day_index(self, day: dt.date) -> int:
        try:
            return self.days.index(day)
        except ValueError:
            raise ConfigError(f"{day} is not a day of the frame") from None

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"timestamp": self.timestamps, "price": self.price})
        for name, values in self.exogenous.items():
            df[name] = values
        return df

    def to_csv(self, path) -> None:
        df = self.to_frame()
        df["timestamp"] = df["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%S")
        df.to_csv(path, index=False, float_format="%.17g")


def load_csv(
    path,
    columns: tuple[str, ...] = DEFAULT_COLUMNS,
    fill_limit: int = MAX_FILL_HOURS,
) -> TimeSeriesFrame:
    """Read an hourly CSV, validate its clock, and fill short gaps linearly.

    Gaps of at most ``fill_limit`` consecutive hours (missing rows or empty
    cells) are interpolated; anything longer is rejected.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    df = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise SchemaError(f"{path.name}: missing column(s) {missing}")

    raw = df["timestamp"].astype(str)
    offsets = {m.group(0) for s in raw if (m := re.search(r"([+-]\d\d:?\d\d|Z)$", s))}
    if len(offsets) > 1:
        raise DataError(
            f"mixed UTC offsets {sorted(offsets)}: convert to a fixed-offset clock "
            "(DST days are not supported)"
        )
    try:
        ts = pd.DatetimeIndex(pd.to_datetime(raw, format="ISO8601"))
    except (ValueError, TypeError) as exc:
        raise DataError(f"unparseable timestamp: {exc}") from None
    if ts.tz is not None:
        ts = ts.tz_localize(None)

    dup = ts[ts.duplicated()]
    if len(dup):
        raise DataError(f"duplicate timestamp(s): {[str(t) for t in dup]}")
    back = np.flatnonzero(np.diff(ts.asi8) < 0)
    if len(back):
        rows = [int(i) + 1 for i in back]
        raise DataError(f"timestamps not increasing at data row(s) {rows}")
    if len(ts) and np.any((ts.minute != 0) | (ts.second != 0)):
        raise DataError("timestamps must fall on whole hours")

    value_cols = [c for c in df.columns if c != "timestamp"]
    values = df[value_cols].apply(pd.to_numeric, errors="coerce")
    values.index = ts
    full = pd.date_range(ts[0], ts[-1], freq="h")
    values = values.reindex(full)

    for col in value_cols:
        isna = values[col].isna().to_numpy()
        if not isna.any():
            continue
        runs = _runs(isna)
        too_long = [(s, e) for s, e in runs if e - s > fill_limit]
        if too_long:
            s, e = too_long[0]
            raise DataError(
                f"{col}: gap of {e - s} hour(s) starting {full[s]} exceeds fill limit "
                f"{fill_limit}"
            )
        if isna[0] or isna[-1]:
            raise DataError(f"{col}: cannot interpolate a gap at the series boundary")
        values[col] = values[col].interpolate(method="linear")

    # Keep whole days only.
    first = int(np.argmax(full.hour == 0)) if (full.hour == 0).any() else len(full)
    n_days = (len(full) - first) // 24
    if n_days < 1:
        raise DataError("file does not contain a single whole day")
    sl = slice(first, first + 24 * n_days)
    exo = {c: values[c].to_numpy(dtype=float)[sl] for c in value_cols if c != "price"}
    return TimeSeriesFrame(full[sl], values["price"].to_numpy(dtype=float)[sl], exo)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate([[False], mask, [False]]).astype(int)
    edges = np.diff(padded)
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def calendar_features(
    days,
    origin: dt.date | None = None,
    span_days: int | None = None,
    dow: bool = True,
    age: bool = True,
) -> tuple[np.ndarray, list[str]]:
    """Day-of-week sine/cosine and a linear age ramp, one row per day.

    The age ramp is 0 on ``origin`` and 1 after ``span_days - 1`` days; later
    days extrapolate beyond 1.
    """
    days = [d.date() if isinstance(d, (pd.Timestamp, dt.datetime)) else d for d in days]
    cols, names = [], []
    if dow:
        angle = 2 * np.pi * np.array([d.weekday() for d in days], dtype=float) / 7
        cols += [np.sin(angle), np.cos(angle)]
        names += ["dow_sin", "dow_cos"]
    if age:
        origin = origin or days[0]
        span = span_days or max(len(days), 2)
        offset = np.array([(d - origin).days for d in days], dtype=float)
        cols.append(offset / (span - 1))
        names.append("age")
    if not cols:
        return np.zeros((len(days), 0)), []
    return np.column_stack(cols), names


@dataclass(frozen=True)
class WindowedDataset:
    inputs: np.ndarray
    targets: np.ndarray
    feature_names: list[str]
    days: list[dt.date]
    price_columns: np.ndarray

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, rows) -> "WindowedDataset":
        rows = np.asarray(rows)
        return WindowedDataset(
            self.inputs[rows],
            self.targets[rows],
            self.feature_names,
            [self.days[i] for i in rows],
            self.price_columns,
        )

    def rows_before(self, day: dt.date) -> np.ndarray:
        return np.array([i for i, d in enumerate(self.days) if d < day], dtype=int)


def feature_names(cfg: WindowConfig) -> list[str]:
    names = [f"price_lag{k}_h{h:02d}" for k in cfg.price_lag_days for h in range(24)]
    names += [f"{e}_h{h:02d}" for e in cfg.exogenous for h in range(24)]
    if cfg.dow_features:
        names += ["dow_sin", "dow_cos"]
    if cfg.age_feature:
        names += ["age"]
    return names


_NAME = re.compile(r"^(?:price_lag(?P<lag>\d+)|(?P<series>.+?))_h(?P<hour>\d\d)$")


def decode_feature(name: str) -> tuple[str, int | None, int | None]:
    """Map a feature name back to (source series, lag days, hour)."""
    if name in ("dow_sin", "dow_cos", "age"):
        return name, None, None
    m = _NAME.match(name)
    if m is None:
        raise ValueError(f"unrecognised feature name {name!r}")
    if m.group("lag"):
        return "price", int(m.group("lag")), int(m.group("hour"))
    return m.group("series"), 0, int(m.group("hour"))


def build_windows(frame: TimeSeriesFrame, cfg: WindowConfig | None = None) -> WindowedDataset:
    cfg = cfg or WindowConfig()
    need = cfg.max_lag_days + 1
    if frame.n_days < need:
        raise DataError(
            f"insufficient history: lags {list(cfg.price_lag_days)} need {need} days, "
            f"frame has {frame.n_days}"
        )
    for name in cfg.exogenous:
        if name not in frame.exogenous:
            raise ConfigError(f"exogenous series {name!r} not in frame")

    prices = frame.daily("price")
    eligible = np.arange(cfg.max_lag_days, frame.n_days)
    blocks = [prices[eligible - k] for k in cfg.price_lag_days]
    blocks += [frame.daily(name)[eligible] for name in cfg.exogenous]
    days = frame.days
    cal, _ = calendar_features(
        days, span_days=cfg.age_span_days, dow=cfg.dow_features, age=cfg.age_feature
    )
    if cal.shape[1]:
        blocks.append(cal[eligible])
    inputs = np.ascontiguousarray(np.hstack(blocks))
    targets = np.ascontiguousarray(prices[eligible, : cfg.horizon])
    names = feature_names(cfg)
    price_cols = np.arange(24 * len(cfg.price_lag_days))
    return WindowedDataset(inputs, targets, names, [days[i] for i in eligible], price_cols)


# ---------------------------------------------------------------------------
# synthetic data


def _base_profile() -> np.ndarray:
    h = np.arange(24)
    return 20.0 + 10.0 * np.cos(2 * np.pi * (h - 19) / 24)


def _ar1(rng: np.random.Generator, n: int, phi: float, sd: float) -> np.ndarray:
    out = np.empty(n)
    out[0] = rng.normal(0, sd / np.sqrt(1 - phi**2))
    for t in range(1, n):
        out[t] = phi * out[t - 1] + rng.normal(0, sd)
    return out


def synth_generate(n_days: int, spec: SynthSpec | None = None) -> TimeSeriesFrame:
    """Hourly prices linear in load and wind plus heteroskedastic Gaussian noise."""
    spec = spec or SynthSpec()
    if n_days < 30:
        raise ConfigError(f"synthetic frames need at least 30 days, got {n_days}")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    h = np.arange(24)
    start = pd.Timestamp(spec.start)
    ts = pd.date_range(start, periods=24 * n_days, freq="h")
    weekday = np.array([(spec.start + dt.timedelta(days=d)).weekday() for d in range(n_days)])

    level = 55_000 + _ar1(rng, n_days, 0.8, 2_500) - 5_000 * (weekday >= 5)
    load = level[:, None] + 8_000 * np.sin(np.pi * np.clip(h - 5, 0, 18) / 18)[None, :]
    load = load + rng.normal(0, 500, size=(n_days, 24))

    wind_level = np.clip(12_000 + _ar1(rng, n_days, 0.7, 3_000), 500, None)
    wind = wind_level[:, None] * (1 + 0.2 * np.sin(2 * np.pi * h / 24))[None, :]
    wind = np.clip(wind + rng.normal(0, 400, size=(n_days, 24)), 0, None)

    solar_peak = 10_000 * rng.uniform(0.3, 1.0, size=n_days)
    solar = solar_peak[:, None] * np.clip(np.sin(np.pi * (h - 6) / 12), 0, None)[None, :]

    eps = rng.standard_normal((n_days, 24))
    det = _base_profile()[None, :] + spec.a * load + spec.b * wind
    price = det + np.asarray(spec.sigma)[None, :] * eps
    return TimeSeriesFrame(
        pd.DatetimeIndex(ts),
        price.ravel(),
        {"load_fcst": load.ravel(), "wind_fcst": wind.ravel(), "solar_fcst": solar.ravel()},
    )


def synth_deterministic(frame: TimeSeriesFrame, spec: SynthSpec) -> np.ndarray:
    """Noise-free price component, shape (days, 24)."""
    return (
        _base_profile()[None, :]
        + spec.a * frame.daily("load_fcst")
        + spec.b * frame.daily("wind_fcst")
    )


def synth_quantiles(
    frame: TimeSeriesFrame, spec: SynthSpec, quantiles, days=None, horizon: int = 24
) -> np.ndarray:
    """Exact conditional quantiles, shape (days, horizon, |quantiles|)."""
    det = synth_deterministic(frame, spec)
    if days is not None:
        det = det[[frame.day_index(d) for d in days]]
    z = norm.ppf(np.asarray(quantiles, dtype=float))
    sigma = np.asarray(spec.sigma)
    return det[:, :horizon, None] + sigma[None, :horizon, None] * z[None, None, :]
