"""Input checks shared by the estimator wrappers and the CLI."""
from __future__ import annotations

import numpy as np

from ._exact import as_number


def check_triple(value, name: str, allow_exact: bool = True) -> tuple:
    """Parse a 3-vector from a sequence or a comma-separated string."""
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        items = list(value)
    except TypeError:
        raise ValueError(f"{name}: expected three components, got {value!r}") from None
    if len(items) != 3:
        raise ValueError(f"{name}: expected three components, got {len(items)}")
    try:
        out = tuple(as_number(v) for v in items)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name}: {exc}") from None
    if any(not np.isfinite(float(v)) for v in out):
        raise ValueError(f"{name}: components must be finite")
    if not allow_exact:
        out = tuple(float(v) for v in out)
    return out


def check_index_triple(value, name: str) -> tuple:
    t = check_triple(value, name)
    if any(float(v) != int(float(v)) for v in t):
        raise ValueError(f"{name}: lattice indices must be integers")
    return tuple(int(v) for v in t)


def check_positive_int(value, name: str) -> int:
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name}: expected a positive integer, got {value!r}") from None
    if v != float(value) or v < 1:
        raise ValueError(f"{name}: expected a positive integer, got {value!r}")
    return v


def check_positive_float(value, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name}: expected a positive number, got {value!r}") from None
    if not (np.isfinite(v) and v > 0):
        raise ValueError(f"{name}: expected a positive number, got {value!r}")
    return v


def check_rows(X, width: int, name: str = "X") -> np.ndarray:
    """2-D float array with ``width`` columns and finite entries."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"{name}: expected shape (n, {width}), got {np.shape(X)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: entries must be finite")
    return arr
