"""Dense numeric helpers on top of numpy.

Matrices are plain 2-D ``float64`` arrays. Randomness always flows through
``numpy.random.Generator`` backed by PCG64, whose stream is fixed across
platforms for a given seed.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

RNG_ALGORITHM = "numpy.PCG64"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    m = np.array(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    if rows is not None and cols is not None:
        m = m.reshape(rows, cols)
    if not np.all(np.isfinite(m)):
        raise ParameterError("matrix contains non-finite entries")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def relu(m: np.ndarray) -> np.ndarray:
    return np.maximum(m, 0.0)


def sample_normal(
    rng: np.random.Generator, rows: int, cols: int, mean: float = 0.0, std: float = 1.0
) -> np.ndarray:
    if std < 0:
        raise ParameterError(f"std must be non-negative, got {std}")
    return rng.normal(mean, std, size=(rows, cols))
