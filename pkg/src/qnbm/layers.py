"""Building blocks shared by both architectures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class FactorizedMatrix:
    """Low-rank matrix stored as ``A @ B.T`` with A (m, r) and B (n, r)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        if self.A.ndim != 2 or self.B.ndim != 2 or self.A.shape[1] != self.B.shape[1]:
            raise ParameterError(f"factor shapes {self.A.shape} and {self.B.shape} disagree")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape[0], self.B.shape[0]

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def n_params(self) -> int:
        m, n = self.shape
        return (m + n) * self.rank


def effective(fm: FactorizedMatrix) -> np.ndarray:
    return fm.A @ fm.B.T


def factorized_param_count(m: int, n: int, rank: int) -> int:
    return (m + n) * rank


def dense_param_count(m: int, n: int) -> int:
    return m * n


class RevinLayer:
    """Reversible instance normalisation with a scalar affine map.

    Statistics are computed per row (instance) over all columns passed in;
    ``denormalize`` maps values from the normalised space back with the same
    statistics. ``eps`` keeps constant rows finite.
    """

    def __init__(self, scale: float = 1.0, shift: float = 0.0, eps: float = 1e-5):
        if scale == 0:
            raise ParameterError("RevIN scale must be non-zero to be invertible")
        self.scale = float(scale)
        self.shift = float(shift)
        self.eps = float(eps)

    def statistics(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean = x.mean(axis=1, keepdims=True)
        std = np.sqrt(x.var(axis=1, keepdims=True) + self.eps)
        return mean, std

    def normalize(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mean, std = self.statistics(x)
        return (x - mean) / std * self.scale + self.shift, (mean, std)

    def denormalize(self, y: np.ndarray, stats) -> np.ndarray:
        mean, std = stats
        return (np.atleast_2d(y) - self.shift) / self.scale * std + mean


def revin_roundtrip(layer: RevinLayer, x: np.ndarray) -> np.ndarray:
    xn, stats = layer.normalize(x)
    return layer.denormalize(xn, stats)


def dropout_mask(
    rng: np.random.Generator | None, shape: tuple[int, ...], rate: float
) -> np.ndarray | None:
    """Inverted-dropout multiplier, or None when dropout is inactive."""
    if rate <= 0:
        return None
    if rng is None:
        raise ParameterError("train-mode dropout needs an rng")
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)
