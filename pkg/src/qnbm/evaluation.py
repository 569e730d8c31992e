"""Probabilistic scores and forecast-comparison tests.

``y`` is always (days, H) and a forecast is a :class:`QuantileForecast` with
values (days, H, |levels|).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.special import xlogy
from scipy.stats import norm

from .errors import ParameterError, ShapeError
from .forecast import QuantileForecast
from .training import pinball_loss

KUPIEC_CRITICAL_5PCT = 3.841458820694124  # chi-square(1) 95th percentile
PICP_LEVELS = (0.5, 0.9, 0.98)


def _check(y, fc: QuantileForecast) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != fc.values.shape[:2]:
        raise ShapeError(f"targets {y.shape} vs forecast {fc.values.shape[:2]}")
    return y


def pinball_grid(y, fc: QuantileForecast) -> np.ndarray:
    """Elementwise pinball losses, shape (days, H, |levels|)."""
    y = _check(y, fc)
    diff = y[..., None] - fc.values
    g = fc.quantiles
    return np.where(diff > 0, g * diff, (g - 1.0) * diff)


def crps_pinball(y, fc: QuantileForecast) -> float:
    """CRPS approximated by the mean pinball loss over all levels (no factor 2)."""
    y = _check(y, fc)
    if len(fc.quantiles) != 99:
        warnings.warn(f"CRPS approximation on {len(fc.quantiles)} levels instead of 99", stacklevel=2)
    return pinball_loss(y, fc.values, fc.quantiles)[0]


def mae(y, fc: QuantileForecast) -> float:
    y = _check(y, fc)
    try:
        k = fc.level_index(0.5)
    except KeyError:
        raise ParameterError("MAE needs the median among the forecast levels") from None
    return float(np.mean(np.abs(y - fc.values[:, :, k])))


def interval_bounds(fc: QuantileForecast, level: float) -> tuple[int, int]:
    lo, hi = (1 - level) / 2, (1 + level) / 2
    try:
        return fc.level_index(lo), fc.level_index(hi)
    except KeyError:
        raise ParameterError(
            f"{level:.0%} central interval needs levels {lo:g} and {hi:g}"
        ) from None


def coverage_hits(y, fc: QuantileForecast, level: float) -> np.ndarray:
    y = _check(y, fc)
    i, j = interval_bounds(fc, level)
    return (fc.values[:, :, i] <= y) & (y <= fc.values[:, :, j])


def picp(y, fc: QuantileForecast, level: float) -> float:
    """Percentage of (day, hour) targets inside the central interval, bounds inclusive."""
    return float(100.0 * np.mean(coverage_hits(y, fc, level)))


def kupiec_test(violations: int, n: int, p: float, alpha: float = 0.05) -> tuple[float, bool]:
    """Unconditional-coverage likelihood ratio and whether it rejects at ``alpha``."""
    if not (0 < p < 1):
        raise ParameterError(f"nominal violation rate must be in (0, 1), got {p}")
    if n < 1 or not (0 <= violations <= n):
        raise ParameterError(f"invalid counts: {violations} violations out of {n}")
    x, n = float(violations), float(n)
    pi = x / n
    ll_null = xlogy(n - x, 1 - p) + xlogy(x, p)
    ll_alt = xlogy(n - x, 1 - pi) + xlogy(x, pi)
    lr = max(0.0, -2.0 * ll_null + 2.0 * ll_alt)
    crit = KUPIEC_CRITICAL_5PCT if alpha == 0.05 else float(_chi2_1_ppf(1 - alpha))
    return float(lr), bool(lr > crit)


def _chi2_1_ppf(q: float) -> float:
    return norm.ppf((1 + q) / 2) ** 2


def calibration_curve(y, fc: QuantileForecast) -> np.ndarray:
    """Per level, the fraction of targets at or below the predicted quantile."""
    y = _check(y, fc)
    return np.mean(y[..., None] <= fc.values, axis=(0, 1))


def daily_loss(y, fc: QuantileForecast, norm_ord: int = 1) -> np.ndarray:
    """Per-day norm of the (H x |levels|) pinball grid."""
    grid = pinball_grid(y, fc).reshape(len(y), -1)
    return np.linalg.norm(grid, ord=norm_ord, axis=1)


@dataclass
class DmResult:
    statistic: float
    p_value: float
    direction: str  # "a", "b" or "equal": whose loss is smaller on average


def dm_test(loss_a, loss_b, alternative: str = "two-sided") -> DmResult:
    """Diebold-Mariano test on per-period losses, normal reference distribution.

    ``alternative="greater"`` tests whether model b is more accurate than a
    (positive mean differential).
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"loss vectors must be 1-D and equal length, got {a.shape} and {b.shape}")
    if len(a) < 30:
        warnings.warn(f"DM test on only {len(a)} observations", stacklevel=2)
    d = a - b
    mean = float(d.mean())
    direction = "b" if mean > 0 else "a" if mean < 0 else "equal"
    if np.all(d == d[0]):
        if mean == 0:
            return DmResult(0.0, 1.0, "equal")
        stat = math.copysign(math.inf, mean)
    else:
        stat = mean / (d.std(ddof=1) / math.sqrt(len(d)))
    if alternative == "two-sided":
        p = 2 * norm.sf(abs(stat))
    elif alternative == "greater":
        p = norm.sf(stat)
    elif alternative == "less":
        p = norm.cdf(stat)
    else:
        raise ParameterError(f"unknown alternative {alternative!r}")
    return DmResult(float(stat), float(p), direction)


def dm_matrix(losses: dict[str, np.ndarray], alternative: str = "greater") -> pd.DataFrame:
    """Pairwise DM p-values; cell (row, col) tests whether col beats row."""
    names = list(losses)
    out = pd.DataFrame(np.nan, index=names, columns=names)
    for r in names:
        for c in names:
            if r != c:
                out.loc[r, c] = dm_test(losses[r], losses[c], alternative).p_value
    return out


@dataclass
class EvalReport:
    mae: float
    crps: float
    picp: dict[str, float]
    kupiec: dict[str, dict]
    calibration: dict[str, float]
    n_days: int
    crps_lower_bound: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, allow_nan=True)

    def to_flat(self) -> dict[str, float]:
        row = {"mae": self.mae, "crps": self.crps, "n_days": self.n_days}
        for k, v in self.picp.items():
            row[f"picp_{k}"] = v
        for k, v in self.kupiec.items():
            row[f"kupiec_{k}_lr"] = v["lr"]
            row[f"kupiec_{k}_reject"] = v["reject"]
            row[f"kupiec_{k}_hours_passed"] = v["hours_passed"]
        if self.crps_lower_bound is not None:
            row["crps_lower_bound"] = self.crps_lower_bound
        return row


def _level_key(level: float) -> str:
    return f"{100 * level:g}"


def evaluate(y, fc: QuantileForecast, levels=PICP_LEVELS, truth: QuantileForecast | None = None) -> EvalReport:
    """Full metric bundle.

    Kupiec is reported on all (day, hour) pairs pooled and per delivery hour;
    ``hours_passed`` counts hours where coverage is not rejected at 5%.
    """
    y = _check(y, fc)
    picps, kup = {}, {}
    for level in levels:
        try:
            hits = coverage_hits(y, fc, level)
        except ParameterError:
            continue
        key = _level_key(level)
        picps[key] = float(100.0 * hits.mean())
        viol = int((~hits).sum())
        lr, reject = kupiec_test(viol, hits.size, 1 - level)
        per_hour = [kupiec_test(int((~hits[:, h]).sum()), hits.shape[0], 1 - level) for h in range(hits.shape[1])]
        kup[key] = {
            "violations": viol,
            "n": int(hits.size),
            "lr": lr,
            "reject": reject,
            "hours_passed": int(sum(not r for _, r in per_hour)),
        }
    cal = calibration_curve(y, fc)
    try:
        m = mae(y, fc)
    except ParameterError:
        m = float("nan")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        crps = crps_pinball(y, fc)
        lb = crps_pinball(y, truth) if truth is not None else None
    return EvalReport(
        mae=m,
        crps=crps,
        picp=picps,
        kupiec=kup,
        calibration={f"{g:g}": float(c) for g, c in zip(fc.quantiles, cal)},
        n_days=int(y.shape[0]),
        crps_lower_bound=lb,
    )
