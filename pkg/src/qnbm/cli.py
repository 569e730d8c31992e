"""Command-line entry point: ``qnbm {synth,train,backtest,evaluate,explain}``.

Each subcommand reads one JSON config, writes its artifacts under ``--out``
and a ``manifest.json`` recording the resolved config, its hash, and seeds.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import Field, ValidationError

from . import evaluation, forecast, interpret
from .backtest import backtest
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    BacktestPlan,
    EnsembleSpec,
    GridSpec,
    ModelConfig,
    SynthSpec,
    TrainConfig,
    WindowConfig,
    _Strict,
)
from .dataset import build_windows, load_csv, synth_generate, synth_quantiles
from .ensemble import run_ensemble, save_members
from .errors import CheckpointError, ConfigError, DataError, NumericError, ParameterError, ShapeError
from .training import fit, grid_search

log = logging.getLogger("qnbm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class SynthSection(_Strict):
    n_days: int = Field(500, ge=30)
    spec: SynthSpec = SynthSpec()


class EvaluateSection(_Strict):
    forecasts: dict[str, str]
    levels: tuple[float, ...] = evaluation.PICP_LEVELS
    dm_norm: int = Field(1, ge=1)


class ExplainSection(_Strict):
    checkpoints: tuple[str, ...]
    gammas: tuple[float, ...] = (0.05, 0.95)
    hours: tuple[int, ...] | None = None
    features: tuple[str, ...] | None = None


class RunConfig(_Strict):
    data: str | None = None
    synth_spec: str | None = None
    synth: SynthSection | None = None
    window: WindowConfig = WindowConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    grid: GridSpec | None = None
    backtest: BacktestPlan | None = None
    ensemble: EnsembleSpec | None = None
    test_days: int = Field(100, ge=0)
    wide_forecast: bool = False
    evaluate: EvaluateSection | None = None
    explain: ExplainSection | None = None


def code_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def load_config(args) -> tuple[RunConfig, Path]:
    base = Path(".")
    raw: dict = {}
    if args.config:
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        base = path.parent
    cfg = RunConfig.model_validate(raw)
    if args.model:
        cfg = cfg.model_copy(update={"model": cfg.model.model_copy(update={"kind": args.model})})
    if args.seed is not None:
        upd = {"train": cfg.train.model_copy(update={"seed": args.seed})}
        if cfg.synth is not None:
            upd["synth"] = cfg.synth.model_copy(
                update={"spec": cfg.synth.spec.model_copy(update={"seed": args.seed})}
            )
        if cfg.ensemble is not None:
            upd["ensemble"] = cfg.ensemble.model_copy(update={"base_seed": args.seed})
        cfg = cfg.model_copy(update=upd)
    return cfg, base


def _resolve(base: Path, p: str | None) -> Path | None:
    if p is None:
        return None
    q = Path(p)
    return q if q.is_absolute() else base / q


def _config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, outputs: list, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "code_version": code_version(),
        "config_hash": _config_hash(cfg),
        "config": cfg.model_dump(mode="json"),
        "seeds": {
            "train": cfg.train.seed,
            "synth": cfg.synth.spec.seed if cfg.synth else None,
            "ensemble_base": cfg.ensemble.base_seed if cfg.ensemble else None,
        },
        "outputs": sorted(str(Path(o).relative_to(out)) for o in outputs),
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _load_frame(cfg: RunConfig, base: Path):
    path = _resolve(base, cfg.data)
    if path is None:
        raise ConfigError("config needs a 'data' CSV path")
    return load_csv(path)


def _synth_truth(cfg: RunConfig, base: Path, frame, fc):
    path = _resolve(base, cfg.synth_spec)
    if path is None:
        return None
    spec = SynthSpec.model_validate_json(path.read_text())
    values = synth_quantiles(frame, spec, fc.quantiles, fc.days, fc.horizon)
    return forecast.QuantileForecast(values, fc.quantiles, fc.days)


def cmd_synth(cfg: RunConfig, base: Path, out: Path) -> list[Path]:
    section = cfg.synth or SynthSection()
    frame = synth_generate(section.n_days, section.spec)
    csv, side = out / "synth.csv", out / "synth_spec.json"
    frame.to_csv(csv)
    side.write_text(section.spec.model_dump_json(indent=2))
    return [csv, side]


def _targets_for(frame, days, horizon: int) -> np.ndarray:
    prices = frame.daily("price")
    return prices[[frame.day_index(d) for d in days], :horizon]


def _write_report(out: Path, name: str, report: evaluation.EvalReport) -> Path:
    path = out / f"report{name}.json"
    path.write_text(report.to_json())
    return path


def cmd_train(cfg: RunConfig, base: Path, out: Path) -> list[Path]:
    frame = _load_frame(cfg, base)
    data = build_windows(frame, cfg.window)
    n_test = min(cfg.test_days, len(data) - 2)
    train = data.subset(np.arange(len(data) - n_test))
    test = data.subset(np.arange(len(data) - n_test, len(data)))
    kind = cfg.model.kind
    model_cfg, train_cfg = cfg.model, cfg.train
    outputs: list[Path] = []

    if cfg.grid is not None:
        result = grid_search(kind, train, cfg.grid, train_cfg, model_cfg)
        model_cfg, train_cfg = result.model_config, result.train_config
        grid_csv = out / "grid.csv"
        pd.DataFrame([{**c, "val_loss": s} for c, s in result.scores]).to_csv(grid_csv, index=False)
        outputs.append(grid_csv)

    ckpt_dir = out / "checkpoints"
    if cfg.ensemble is not None:
        res = run_ensemble(kind, train, test, train_cfg, model_cfg, cfg.ensemble)
        outputs.append(save_members(res, ckpt_dir))
        outputs += sorted(ckpt_dir.glob("member_*.ckpt"))
        fc = res.forecast
    else:
        res = fit(kind, train, train_cfg, model_cfg)
        outputs.append(save_checkpoint(res.params, ckpt_dir / "model.ckpt"))
        hist = out / "history.csv"
        hist.write_text(res.history_csv())
        outputs.append(hist)
        fc = forecast.predict(res.params, test.inputs, test.days) if len(test) else None

    if fc is not None and len(test):
        path = out / "forecast.csv"
        forecast.write_csv(fc, path, wide=cfg.wide_forecast)
        truth = _synth_truth(cfg, base, frame, fc)
        report = evaluation.evaluate(test.targets[:, : fc.horizon], fc, truth=truth)
        outputs += [path, _write_report(out, "", report)]
    return outputs


def cmd_backtest(cfg: RunConfig, base: Path, out: Path) -> list[Path]:
    if cfg.backtest is None:
        raise ConfigError("backtest command needs a 'backtest' plan section")
    frame = _load_frame(cfg, base)
    ckpt_dir = out / "checkpoints"
    res = backtest(cfg.backtest, frame, cfg.window, cfg.train, cfg.model, cfg.ensemble, ckpt_dir)
    path = out / "forecast.csv"
    forecast.write_csv(res.forecast, path, wide=cfg.wide_forecast)
    truth = _synth_truth(cfg, base, frame, res.forecast)
    report = evaluation.evaluate(res.targets, res.forecast, truth=truth)
    return [path, _write_report(out, "", report), *res.checkpoints]


def cmd_evaluate(cfg: RunConfig, base: Path, out: Path) -> list[Path]:
    if cfg.evaluate is None:
        raise ConfigError("evaluate command needs an 'evaluate' section")
    frame = _load_frame(cfg, base)
    outputs, rows, losses = [], [], {}
    for name, p in cfg.evaluate.forecasts.items():
        fc = forecast.read_csv(_resolve(base, p))
        y = _targets_for(frame, fc.days, fc.horizon)
        truth = _synth_truth(cfg, base, frame, fc)
        report = evaluation.evaluate(y, fc, cfg.evaluate.levels, truth=truth)
        outputs.append(_write_report(out, f"_{name}", report))
        rows.append({"model": name, **report.to_flat()})
        losses[name] = evaluation.daily_loss(y, fc, cfg.evaluate.dm_norm)
    table = out / "reports.csv"
    pd.DataFrame(rows).to_csv(table, index=False)
    outputs.append(table)
    if len(losses) > 1:
        lengths = {len(v) for v in losses.values()}
        if len(lengths) > 1:
            raise DataError("forecasts cover different numbers of days; cannot run DM test")
        dm = out / "dm_matrix.csv"
        evaluation.dm_matrix(losses).to_csv(dm)
        outputs.append(dm)
    return outputs


def cmd_explain(cfg: RunConfig, base: Path, out: Path) -> list[Path]:
    if cfg.explain is None:
        raise ConfigError("explain command needs an 'explain' section")
    members = [load_checkpoint(_resolve(base, p)) for p in cfg.explain.checkpoints]
    hours = cfg.explain.hours if cfg.explain.hours is not None else range(members[0].horizon)
    features = cfg.explain.features
    if features is None:
        mask = members[0].stats["price_mask"]
        features = [n for n, m in zip(members[0].feature_names, mask) if m == 0]
    bundle = interpret.extract_all(members, cfg.explain.gammas, hours, features)
    manifest = interpret.write_bundle(bundle, out / "shapes")
    return [manifest, *sorted((out / "shapes").glob("shape_*.csv"))]


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "backtest": cmd_backtest,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnbm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--model", choices=["qnbm", "qrdnn"], help="override model kind")
    return parser


def _fail(code: int, exc: BaseException) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, base = load_config(args)
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory: {exc}") from None
        outputs = COMMANDS[args.command](cfg, base, out)
        write_manifest(out, args.command, cfg, outputs)
    except (ConfigError, ParameterError, ValidationError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (DataError, ShapeError, CheckpointError, OSError) as exc:
        return _fail(EXIT_DATA, exc)
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
