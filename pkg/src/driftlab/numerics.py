"""Dense float64 primitives: init, matmul, percentile.

A Matrix is a 2-D C-contiguous float64 ndarray (rows = samples).
"""

from __future__ import annotations

import numpy as np

from .rng import RngStream

Matrix = np.ndarray


def as_matrix(x, name: str = "x") -> Matrix:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return np.ascontiguousarray(a)


def gaussian_init(rows: int, cols: int, std: float, rng: RngStream) -> Matrix:
    """I.i.d. Normal(0, std^2) matrix."""
    if rows < 1 or cols < 1:
        raise ValueError(f"dims must be positive, got {rows}x{cols}")
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    return rng.normal((rows, cols), std)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dims differ: {a.shape} @ {b.shape}")
    return a @ b


def percentile(values, q: float) -> float:
    """Linear-interpolation percentile: h = q*(n-1) on the sorted values."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("percentile of empty input")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    return float(np.percentile(v, q * 100.0, method="linear"))
