"""Shape-function extraction from trained quantile basis models.

Because the model is additive, the contribution of feature ``i`` to the
output at (hour h, level gamma) is exactly ``V[(h, gamma), i] * f_i(x)``; no
baseline input or masking of the other features is needed.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, ParameterError
from .model import shape_function, v_tensor
from .params import ModelParams, features_hash

GRID_POINTS = 201


@dataclass
class ShapeFunctionReport:
    feature: str
    gamma: float
    hour: int
    x: np.ndarray
    contribution: np.ndarray
    shape: np.ndarray
    member: int = 0
    x_units: str = "raw"
    notes: list[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "x": self.x,
                "contribution": self.contribution,
                "shape": self.shape,
                "member": self.member,
                "feature": self.feature,
                "gamma": self.gamma,
                "hour": self.hour,
            }
        )


def _feature_index(params: ModelParams, feature) -> int:
    if isinstance(feature, str):
        try:
            return params.feature_names.index(feature)
        except ValueError:
            raise ParameterError(f"unknown feature {feature!r}") from None
    if not 0 <= int(feature) < params.n_features:
        raise ParameterError(f"feature index {feature} outside [0, {params.n_features})")
    return int(feature)


def _normalised_input(params: ModelParams, i: int) -> bool:
    return bool(params.config.revin and params.stats["price_mask"][i] > 0)


def training_range(params: ModelParams, feature) -> tuple[float, float]:
    i = _feature_index(params, feature)
    if _normalised_input(params, i):
        return -3.0, 3.0
    return float(params.stats["feature_min"][i]), float(params.stats["feature_max"][i])


def default_grid(params: ModelParams, feature, n_points: int = GRID_POINTS) -> np.ndarray:
    lo, hi = training_range(params, feature)
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n_points)


def extract_shape(
    params: ModelParams,
    feature,
    gamma: float,
    hour: int,
    grid=None,
    member: int = 0,
) -> ShapeFunctionReport:
    """Contribution curve of one feature to one (hour, level) output.

    ``x`` is in raw feature units, except for price-lag features of a RevIN
    model whose input is instance-normalised; those curves use normalised
    units. With RevIN on, contributions live in the head's normalised output
    space; multiply by ``qnbm.params.output_scale`` for price units.
    """
    if params.kind != "qnbm":
        raise ParameterError("shape functions exist only for the additive model")
    i = _feature_index(params, feature)
    levels = params.quantiles
    hit = np.flatnonzero(np.isclose(levels, gamma, atol=1e-9, rtol=0))
    if not len(hit):
        raise ParameterError(f"level {gamma} is not among the model's quantile levels")
    if not 0 <= hour < params.horizon:
        raise ParameterError(f"hour {hour} outside horizon {params.horizon}")

    x = default_grid(params, i) if grid is None else np.asarray(grid, dtype=float)
    if x.ndim != 1 or np.any(np.diff(x) <= 0):
        raise ParameterError("grid must be strictly increasing")
    notes = []
    lo, hi = training_range(params, i)
    if x[0] < lo or x[-1] > hi:
        notes.append(f"grid [{x[0]:.6g}, {x[-1]:.6g}] exceeds training range [{lo:.6g}, {hi:.6g}]")
        warnings.warn(notes[-1], stacklevel=2)

    normalised = _normalised_input(params, i)
    xn = x if normalised else (x - params.stats["input_mean"][i]) / params.stats["input_std"][i]
    f = shape_function(params, i, xn)
    weight = v_tensor(params)[hour, hit[0], i]
    return ShapeFunctionReport(
        feature=params.feature_names[i],
        gamma=float(levels[hit[0]]),
        hour=int(hour),
        x=x,
        contribution=weight * f,
        shape=f,
        member=member,
        x_units="revin-normalized" if normalised else "raw",
        notes=notes,
    )


def central_slope(report: ShapeFunctionReport, central: float = 0.8) -> float:
    """Least-squares slope of the curve over the central fraction of its grid."""
    n = len(report.x)
    cut = int(round(n * (1 - central) / 2))
    x, y = report.x[cut : n - cut], report.contribution[cut : n - cut]
    return float(np.polyfit(x, y, 1)[0])


def breakpoints(report: ShapeFunctionReport, tol: float = 1e-9) -> int:
    """Number of slope changes along the grid (kinks of the piecewise-linear curve)."""
    slopes = np.diff(report.contribution) / np.diff(report.x)
    scale = max(1.0, float(np.max(np.abs(slopes))))
    changes = np.abs(np.diff(slopes)) > tol * scale
    # One kink between grid nodes shows up as a single change; merge adjacent flags.
    return int(np.sum(changes & ~np.concatenate([[False], changes[:-1]])))


@dataclass
class ShapeBundle:
    reports: list[ShapeFunctionReport]
    features_hash: str

    def select(self, feature=None, gamma=None, hour=None, member=None):
        out = self.reports
        if feature is not None:
            out = [r for r in out if r.feature == feature]
        if gamma is not None:
            out = [r for r in out if np.isclose(r.gamma, gamma)]
        if hour is not None:
            out = [r for r in out if r.hour == hour]
        if member is not None:
            out = [r for r in out if r.member == member]
        return out


def extract_all(
    members: list[ModelParams],
    gammas,
    hours,
    features=None,
    n_points: int = GRID_POINTS,
) -> ShapeBundle:
    """Curves for every member on grids shared across members."""
    if not members:
        raise ParameterError("no ensemble members given")
    h0 = features_hash(members[0].feature_names)
    for k, p in enumerate(members):
        if features_hash(p.feature_names) != h0:
            raise ConfigError(f"member {k} was trained on a different feature set")
    names = features if features is not None else members[0].feature_names
    reports = []
    for name in names:
        ranges = [training_range(p, name) for p in members]
        lo = min(r[0] for r in ranges)
        hi = max(r[1] for r in ranges)
        grid = np.linspace(lo, hi if hi > lo else lo + 1.0, n_points)
        for k, p in enumerate(members):
            for gamma in gammas:
                for hour in hours:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        reports.append(extract_shape(p, name, gamma, hour, grid, member=k))
    return ShapeBundle(reports, h0)


def write_bundle(bundle: ShapeBundle, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for r in bundle.reports:
        name = f"shape_{r.feature}_g{r.gamma:g}_h{r.hour:02d}_m{r.member}.csv"
        r.to_frame().to_csv(out / name, index=False, float_format="%.17g")
        entries.append(
            {
                "file": name,
                "feature": r.feature,
                "gamma": r.gamma,
                "hour": r.hour,
                "member": r.member,
                "x_units": r.x_units,
                "notes": r.notes,
            }
        )
    manifest = out / "shapes_manifest.json"
    manifest.write_text(json.dumps({"features_hash": bundle.features_hash, "curves": entries}, indent=2))
    return manifest
