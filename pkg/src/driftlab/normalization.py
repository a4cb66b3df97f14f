"""Normalization layers and running-statistic machinery.

Variants: layer norm, RMS norm, batch norm, and percentile centering (PC),
which shifts by a batch percentile instead of the mean. BatchNorm and PC keep
per-channel running statistics via an EMA buffer; ``accumulation_stop``
freezes that buffer, after which forward passes skip the percentile/mean
computation entirely and normalize with the frozen statistics.

Backward contract: gradients flow through the shift and variance terms as for
a mean shift, except the percentile shift, which is stop-gradient by default
(``pc_grad_mode="passthrough"`` instead routes it to the two order statistics
that define the interpolated percentile).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import StateError

_VARIANTS = ("none", "ln", "rms", "bn", "pc")
_AFFINES = ("none", "scale", "scale_shift")

_EPS_DEFAULT = {"ln": 1e-5, "rms": 1e-6, "bn": 1e-5, "pc": 1e-5, "none": 0.0}
_AFFINE_DEFAULT = {"ln": "scale_shift", "rms": "scale", "bn": "scale_shift",
                   "pc": "scale_shift", "none": "none"}
_GAMMA_DEFAULT = {"bn": 0.9, "pc": 0.9999}


@dataclass(frozen=True)
class NormKind:
    variant: str = "none"
    eps: float | None = None
    affine: str | None = None
    pc_q: float = 0.5
    pc_grad_mode: str = "stop"  # or "passthrough"
    ema_gamma: float | None = None
    warm_steps: int = 100

    def resolved(self) -> "NormKind":
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown norm variant {self.variant!r}")
        if not 0.0 <= self.pc_q <= 1.0:
            raise ValueError(f"pc_q must be in [0, 1], got {self.pc_q}")
        if self.pc_grad_mode not in ("stop", "passthrough"):
            raise ValueError(f"unknown pc_grad_mode {self.pc_grad_mode!r}")
        eps = _EPS_DEFAULT[self.variant] if self.eps is None else self.eps
        affine = _AFFINE_DEFAULT[self.variant] if self.affine is None else self.affine
        if affine not in _AFFINES:
            raise ValueError(f"unknown affine mode {affine!r}")
        gamma = self.ema_gamma
        if gamma is None:
            gamma = _GAMMA_DEFAULT.get(self.variant, 0.9999)
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"ema_gamma must be in (0, 1), got {gamma}")
        if self.warm_steps < 0:
            raise ValueError("warm_steps must be non-negative")
        return replace(self, eps=eps, affine=affine, ema_gamma=gamma)


class RunningStats:
    """EMA buffer of per-channel (shift, variance) statistics."""

    def __init__(self, channels: int, gamma: float = 0.9999, warm_steps: int = 100):
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {gamma}")
        self.buffer = np.zeros((2, channels), dtype=np.float64)
        self.gamma = float(gamma)
        self.warm_steps = int(warm_steps)
        self.frozen = False
        self.updates = 0

    @property
    def shift(self):
        return self.buffer[0]

    @property
    def var(self):
        return self.buffer[1]


def ema_update(stats: RunningStats, observed: np.ndarray) -> RunningStats:
    """buffer <- gamma*buffer + (1-gamma)*observed, elementwise."""
    if stats.frozen:
        raise StateError("cannot update frozen running stats")
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape != stats.buffer.shape:
        raise ValueError(f"observed shape {observed.shape} != buffer {stats.buffer.shape}")
    stats.buffer *= stats.gamma
    stats.buffer += (1.0 - stats.gamma) * observed
    stats.updates += 1
    return stats


def accumulation_stop(stats: RunningStats, current_step: int) -> RunningStats:
    """Freeze the buffer once current_step reaches warm_steps. Idempotent."""
    if current_step >= stats.warm_steps:
        stats.frozen = True
    return stats


def _percentile_with_indices(x: np.ndarray, q: float):
    """Per-column interpolated percentile plus the defining order statistics."""
    n = x.shape[0]
    h = q * (n - 1)
    lo = int(np.floor(h))
    hi = int(np.ceil(h))
    frac = h - lo
    order = np.argsort(x, axis=0, kind="stable")
    lo_idx = order[lo]
    hi_idx = order[hi]
    vlo = np.take_along_axis(x, lo_idx[None, :], axis=0)[0]
    vhi = np.take_along_axis(x, hi_idx[None, :], axis=0)[0]
    return vlo + frac * (vhi - vlo), lo_idx, hi_idx, frac


def _stats_ready(stats: RunningStats | None, what: str):
    if stats is None or stats.updates == 0:
        raise StateError(f"{what} requires accumulated running stats")


def norm_forward(kind: NormKind, x: np.ndarray, stats: RunningStats | None,
                 mode: str = "train"):
    """Pre-affine normalization. Returns (xhat, cache) for backward."""
    kind = kind.resolved()
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("norm expects a 2-D batch (rows = samples)")
    eps = kind.eps
    v = kind.variant

    if v == "none":
        return x, {"v": "none"}

    if v == "ln":
        mu = x.mean(axis=1, keepdims=True)
        var = x.var(axis=1, keepdims=True)
        r = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * r
        return xhat, {"v": "ln", "xhat": xhat, "r": r}

    if v == "rms":
        ms = np.mean(x * x, axis=1, keepdims=True)
        r = 1.0 / np.sqrt(ms + eps)
        xhat = x * r
        return xhat, {"v": "rms", "xhat": xhat, "r": r}

    if v == "bn":
        if mode == "train" and not (stats is not None and stats.frozen):
            if x.shape[0] < 2:
                raise ValueError("batch norm needs batch >= 2 in train mode")
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            if stats is not None:
                ema_update(stats, np.stack([mu, var]))
            r = 1.0 / np.sqrt(var + eps)
            xhat = (x - mu) * r
            return xhat, {"v": "bn", "train": True, "xhat": xhat, "r": r}
        _stats_ready(stats, "bn eval/frozen forward")
        r = 1.0 / np.sqrt(stats.var + eps)
        xhat = (x - stats.shift) * r
        return xhat, {"v": "bn", "train": False, "xhat": xhat, "r": r}

    # percentile centering
    if mode == "train" and not (stats is not None and stats.frozen):
        if x.shape[0] < 2:
            raise ValueError("percentile centering needs batch >= 2 in train mode")
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        if kind.pc_grad_mode == "passthrough":
            q_shift, lo_idx, hi_idx, frac = _percentile_with_indices(x, kind.pc_q)
        else:
            q_shift = np.percentile(x, kind.pc_q * 100.0, axis=0, method="linear")
            lo_idx = hi_idx = None
            frac = 0.0
        if stats is not None:
            ema_update(stats, np.stack([q_shift, var]))
        r = 1.0 / np.sqrt(var + eps)
        xhat = (x - q_shift) * r
        return xhat, {"v": "pc", "train": True, "xhat": xhat, "r": r,
                      "dev_mu": x - mu, "grad_mode": kind.pc_grad_mode,
                      "lo_idx": lo_idx, "hi_idx": hi_idx, "frac": frac}
    _stats_ready(stats, "pc eval/frozen forward")
    r = 1.0 / np.sqrt(stats.var + eps)
    xhat = (x - stats.shift) * r
    return xhat, {"v": "pc", "train": False, "xhat": xhat, "r": r}


def norm_backward(cache: dict, g: np.ndarray) -> np.ndarray:
    """Gradient through the pre-affine normalization given its cache."""
    v = cache["v"]
    if v == "none":
        return g
    xhat = cache["xhat"]
    r = cache["r"]
    if v == "ln":
        return r * (g - g.mean(axis=1, keepdims=True)
                    - xhat * (g * xhat).mean(axis=1, keepdims=True))
    if v == "rms":
        return r * (g - xhat * (g * xhat).mean(axis=1, keepdims=True))
    if v == "bn":
        if not cache["train"]:
            return g * r
        return r * (g - g.mean(axis=0) - xhat * (g * xhat).mean(axis=0))
    # pc
    if not cache["train"]:
        return g * r
    dx = r * g - (r * r) * cache["dev_mu"] * (g * xhat).mean(axis=0)
    if cache["grad_mode"] == "passthrough":
        dq = -r * g.sum(axis=0)
        lo_idx, hi_idx, frac = cache["lo_idx"], cache["hi_idx"], cache["frac"]
        cols = np.arange(dx.shape[1])
        np.add.at(dx, (lo_idx, cols), dq * (1.0 - frac))
        if frac > 0.0:
            np.add.at(dx, (hi_idx, cols), dq * frac)
    return dx


def norm_apply(kind: NormKind, x, stats: RunningStats | None = None,
               mode: str = "train") -> np.ndarray:
    """Functional forward (pre-affine); updates stats as a side effect in train."""
    out, _ = norm_forward(kind, x, stats, mode)
    return out


class NormLayer:
    """A NormKind plus its affine parameters and running stats."""

    def __init__(self, kind: NormKind, channels: int):
        self.kind = kind.resolved()
        self.channels = channels
        self.stats = None
        if self.kind.variant in ("bn", "pc"):
            self.stats = RunningStats(channels, gamma=self.kind.ema_gamma,
                                      warm_steps=self.kind.warm_steps)
        self.gamma = np.ones(channels, dtype=np.float64)
        self.beta = np.zeros(channels, dtype=np.float64)

    def forward(self, x, mode="train"):
        xhat, cache = norm_forward(self.kind, x, self.stats, mode)
        affine = self.kind.affine
        if affine == "scale_shift":
            out = xhat * self.gamma + self.beta
        elif affine == "scale":
            out = xhat * self.gamma
        else:
            out = xhat
        cache["affine_in"] = xhat
        return out, cache

    def backward(self, g, cache):
        affine = self.kind.affine
        dparams = {}
        if affine in ("scale", "scale_shift"):
            dparams["g"] = (g * cache["affine_in"]).sum(axis=0)
            if affine == "scale_shift":
                dparams["b"] = g.sum(axis=0)
            g = g * self.gamma
        dx = norm_backward(cache, g)
        return dx, dparams

    def params(self) -> dict:
        affine = self.kind.affine
        if affine == "scale_shift":
            return {"g": self.gamma, "b": self.beta}
        if affine == "scale":
            return {"g": self.gamma}
        return {}
