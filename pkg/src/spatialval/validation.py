"""Input validation helpers used by the public estimator and geometry APIs."""

from __future__ import annotations

import numpy as np

from .exceptions import InputError


def as_float_array(values, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a float64 ndarray and require finite entries."""
    try:
        arr = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} is not numeric: {exc}") from None
    if ndim is not None and arr.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def as_coordinates(points, name: str = "points") -> np.ndarray:
    """Coerce to an (n, d) coordinate matrix; 1-d input becomes a column."""
    arr = as_float_array(points, name)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError(f"{name} must be an (n, d) array, got shape {arr.shape}")
    return arr


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise InputError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_probability(value, name: str) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise InputError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_nonnegative(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise InputError(f"{name} must be a finite non-negative number, got {value}")
    return value


def check_positive(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise InputError(f"{name} must be a finite positive number, got {value}")
    return value
