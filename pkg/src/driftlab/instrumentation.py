"""Training-time measurements: drift, sparsity, covariance diagnostics.

The Z-score drift of a weight matrix is mean(|w_t - w_0|) / std(w_0), i.e.
the average displacement measured in units of the init spread. cov_term is
the empirical batch covariance between per-sample pre-activation gradients
and input coordinates, averaged over (unit, coordinate) pairs; both the
signed mean and the mean of absolute values are recorded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPARSITY_EPS = 1e-7


@dataclass(frozen=True)
class MetricRecord:
    step: int
    layer: int
    metric: str
    value: float


@dataclass
class WeightSnapshot:
    step: int
    weights: dict
    stds: dict

    @classmethod
    def take(cls, net, step: int = 0) -> "WeightSnapshot":
        weights = {}
        stds = {}
        for l in net.linear_layers():
            w = net.weight(l)
            weights[l] = w.copy()
            stds[l] = float(np.std(w))
        return cls(step=step, weights=weights, stds=stds)


def zscore_drift(net, snap: WeightSnapshot) -> dict:
    """Per-layer mean |w_t - w_0| / std(w_0)."""
    out = {}
    for l, w0 in snap.weights.items():
        std0 = snap.stds[l]
        if std0 == 0.0:
            raise ValueError(f"degenerate snapshot: std(W{l}) == 0")
        w = net.weight(l)
        out[l] = float(np.mean(np.abs(w - w0)) / std0)
    return out


def neg_fraction(x) -> float:
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("neg_fraction of empty input")
    return float(np.count_nonzero(x < 0.0) / x.size)


def sparsity(x, eps: float = SPARSITY_EPS) -> float:
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("sparsity of empty input")
    return float(np.count_nonzero(np.abs(x) < eps) / x.size)


def input_range(x):
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("input_range of empty input")
    return float(np.max(x)), float(np.min(x))


def cov_term(grad_pre: np.ndarray, x_in: np.ndarray):
    """Batch covariance of (per-sample dl/dp_i, x_k), averaged over pairs.

    Returns (signed_mean, abs_mean). Gradients must be per-sample (undo any
    batch-mean scaling before calling).
    """
    g = np.asarray(grad_pre, dtype=np.float64)
    x = np.asarray(x_in, dtype=np.float64)
    if g.ndim != 2 or x.ndim != 2 or g.shape[0] != x.shape[0]:
        raise ValueError("cov_term expects 2-D inputs with matching batch")
    b = g.shape[0]
    if b < 2:
        raise ValueError("cov_term needs batch >= 2")
    gc = g - g.mean(axis=0)
    xc = x - x.mean(axis=0)
    cov = gc.T @ xc / (b - 1)
    return float(cov.mean()), float(np.abs(cov).mean())
