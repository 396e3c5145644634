"""Input validation helpers shared across the package.

All helpers raise ValueError/TypeError naming the offending argument, so
callers can surface precise diagnostics without repeating boilerplate.
"""

from __future__ import annotations

import numbers

import numpy as np


def as_int(name: str, value, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def as_float(name: str, value, positive: bool = False,
             nonnegative: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if positive and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if nonnegative and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def as_vector(name: str, value, length: int | None = None,
              dtype=float) -> np.ndarray:
    arr = np.asarray(value, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D array, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(
            f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def as_square_matrix(name: str, value, size: int | None = None) -> np.ndarray:
    arr = np.asarray(value)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape "
                         f"{getattr(arr, 'shape', None)}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must be {size}x{size}, got {arr.shape}")
    return arr


def check_hermitian(name: str, matrix: np.ndarray, tol: float = 1e-10) -> None:
    dev = np.max(np.abs(matrix - matrix.conj().T))
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if dev > tol * scale:
        raise ValueError(f"{name} must be Hermitian; max asymmetry {dev:.3e}")
