"""Input validation helpers shared by dataset types and estimators."""

from __future__ import annotations

import numpy as np

from .errors import DataError, ShapeError


def as_float_matrix(X, *, d: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a 2-d float64 array with finite entries."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise ShapeError(f"{name} has dimension {arr.shape[1]}, expected {d}")
    if arr.size and not np.isfinite(arr).all():
        raise DataError(f"{name} contains non-finite values")
    return arr


def as_feature_vector(x, *, d: int | None = None, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise ShapeError(f"{name} has dimension {arr.shape[0]}, expected {d}")
    if arr.size and not np.isfinite(arr).all():
        raise DataError(f"{name} contains non-finite values")
    return arr


def as_group_array(g, *, n: int | None = None, name: str = "groups") -> np.ndarray:
    arr = np.asarray(g)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        flo = np.asarray(g, dtype=np.float64)
        if not np.all(flo == np.floor(flo)):
            raise DataError(f"{name} must contain integers")
        arr = flo.astype(np.int64)
    else:
        arr = arr.astype(np.int64)
    if n is not None and arr.shape[0] != n:
        raise ShapeError(f"{name} has length {arr.shape[0]}, expected {n}")
    if arr.size and arr.min() < 0:
        raise DataError(f"{name} must be non-negative")
    return arr


def as_binary_labels(y, *, n: int | None = None, name: str = "labels") -> np.ndarray:
    arr = as_group_array(y, n=n, name=name)
    if arr.size and arr.max() > 1:
        raise DataError(f"{name} must lie in {{0, 1}}")
    return arr


def check_probability(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name}={p!r} is outside [0, 1]")
    return p


def check_fraction(f: float, name: str = "fraction") -> float:
    f = float(f)
    if not 0.0 < f < 1.0:
        raise ValueError(f"{name}={f!r} must lie in the open interval (0, 1)")
    return f


def freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr
