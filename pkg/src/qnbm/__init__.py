"""Quantile neural basis models for multi-horizon probabilistic forecasting."""

from .config import (
    BacktestPlan,
    EnsembleSpec,
    GridSpec,
    ModelConfig,
    SynthSpec,
    TrainConfig,
    WindowConfig,
)
from .dataset import TimeSeriesFrame, WindowedDataset, build_windows, load_csv, synth_generate
from .forecast import QuantileForecast, predict
from .params import ModelParams
from .training import fit

__version__ = "0.1.0"

__all__ = [
    "BacktestPlan",
    "EnsembleSpec",
    "GridSpec",
    "ModelConfig",
    "ModelParams",
    "QuantileForecast",
    "SynthSpec",
    "TimeSeriesFrame",
    "TrainConfig",
    "WindowConfig",
    "WindowedDataset",
    "build_windows",
    "fit",
    "load_csv",
    "predict",
    "synth_generate",
]
