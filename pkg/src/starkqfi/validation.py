"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

from numbers import Integral, Real

import numpy as np

MODEL_FIELDS = ("L", "N", "J", "U", "h")
INT_FIELDS = ("L", "N")


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        if isinstance(value, Real) and float(value).is_integer():
            value = int(value)
        else:
            raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_fraction(value, name: str) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_columns(columns) -> tuple[str, ...]:
    if isinstance(columns, str):
        columns = (columns,)
    columns = tuple(columns)
    if not columns:
        raise ValueError("at least one parameter column is required")
    unknown = [c for c in columns if c not in MODEL_FIELDS]
    if unknown:
        raise ValueError(f"unknown model parameters {unknown}; choose from {MODEL_FIELDS}")
    if len(set(columns)) != len(columns):
        raise ValueError(f"duplicate columns in {columns}")
    return columns


def check_param_rows(X, n_columns: int) -> np.ndarray:
    """2-D float array with ``n_columns`` columns; 1-D input becomes one column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and n_columns == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != n_columns:
        raise ValueError(f"expected an array of shape (n, {n_columns}), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty parameter grid")
    if not np.all(np.isfinite(X)):
        raise ValueError("parameter grid contains non-finite values")
    return X


def check_grid(values, name: str, min_points: int = 1, positive: bool = False) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < min_points:
        raise ValueError(f"{name} needs at least {min_points} points, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if positive and np.any(arr <= 0):
        raise ValueError(f"{name} must be positive")
    return arr
