"""Multi-seed ensembles aggregated by quantile averaging."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import EnsembleSpec, ModelConfig, TrainConfig
from .dataset import WindowedDataset
from .errors import NumericError, ShapeError
from .forecast import QuantileForecast, predict
from .params import ModelParams
from .training import fit

log = logging.getLogger(__name__)


def aggregate(forecasts: list[QuantileForecast], sort: bool = True) -> QuantileForecast:
    """Equal-weight mean of member quantiles, cell by cell."""
    if not forecasts:
        raise ShapeError("nothing to aggregate")
    ref = forecasts[0]
    for k, fc in enumerate(forecasts[1:], start=1):
        if fc.values.shape != ref.values.shape or not np.array_equal(fc.quantiles, ref.quantiles):
            raise ShapeError(
                f"member {k} has shape {fc.values.shape}, member 0 has {ref.values.shape}"
            )
    out = QuantileForecast(np.mean([fc.values for fc in forecasts], axis=0), ref.quantiles, ref.days)
    return out.sorted() if sort else out


@dataclass
class EnsembleResult:
    forecast: QuantileForecast
    members: list[ModelParams]
    member_forecasts: list[QuantileForecast]
    seeds: list[int]


def run_ensemble(
    kind: str,
    train: WindowedDataset,
    target: WindowedDataset,
    train_cfg: TrainConfig | None = None,
    model_cfg: ModelConfig | None = None,
    spec: EnsembleSpec | None = None,
) -> EnsembleResult:
    """Fit one model per seed and average their forecasts for ``target``.

    Diverging members are skipped with a warning; if all diverge the last
    error is raised.
    """
    train_cfg = train_cfg or TrainConfig()
    spec = spec or EnsembleSpec()
    members, forecasts, seeds = [], [], []
    last_error = None
    for seed in range(spec.base_seed, spec.base_seed + spec.member_count):
        try:
            res = fit(kind, train, train_cfg.model_copy(update={"seed": seed}), model_cfg)
        except NumericError as exc:
            log.warning("ensemble member with seed %d diverged: %s", seed, exc)
            last_error = exc
            continue
        members.append(res.params)
        forecasts.append(predict(res.params, target.inputs, target.days))
        seeds.append(seed)
    if not members:
        raise NumericError(f"all {spec.member_count} ensemble members diverged: {last_error}")
    sort = members[0].config.sort_quantiles
    return EnsembleResult(aggregate(forecasts, sort=sort), members, forecasts, seeds)


def save_members(result: EnsembleResult, out_dir) -> Path:
    out = Path(out_dir)
    entries = []
    for k, (params, seed) in enumerate(zip(result.members, result.seeds)):
        path = save_checkpoint(params, out / f"member_{k:02d}.ckpt")
        entries.append({"index": k, "seed": seed, "checkpoint": path.name})
    manifest = out / "ensemble_manifest.json"
    manifest.write_text(json.dumps({"members": entries}, indent=2))
    return manifest
