"""Activation variants with explicit forward/backward, plus top-k masking.

Every activation is addressable by a config string ("relu", "gelu2_clip50",
...). Backward returns (dx, dparams); only NoisyReLU carries a learnable
parameter (the scalar v inside its noise envelope).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .rng import RngStream


class Activation:
    name = "base"
    has_params = False

    def forward(self, x, mode="train", rng=None, noise=None):
        """Returns (y, aux); aux is replay state for backward (or None)."""
        raise NotImplementedError

    def backward(self, x, g, mode="train", aux=None):
        """Returns (dx, dparams)."""
        raise NotImplementedError

    def params(self) -> dict:
        return {}


class ReLU(Activation):
    name = "relu"

    def forward(self, x, mode="train", rng=None, noise=None):
        return kernels.relu_fwd(x), None

    def backward(self, x, g, mode="train", aux=None):
        return kernels.relu_bwd(x, g), {}


class GELU(Activation):
    name = "gelu"

    def forward(self, x, mode="train", rng=None, noise=None):
        return kernels.gelu_fwd(x), None

    def backward(self, x, g, mode="train", aux=None):
        return kernels.gelu_bwd(x, g), {}


class SiLU(Activation):
    name = "silu"

    def forward(self, x, mode="train", rng=None, noise=None):
        return kernels.silu_fwd(x), None

    def backward(self, x, g, mode="train", aux=None):
        return kernels.silu_bwd(x, g), {}


class ReLUSquared(Activation):
    name = "relu2"

    def forward(self, x, mode="train", rng=None, noise=None):
        return kernels.relu2_fwd(x), None

    def backward(self, x, g, mode="train", aux=None):
        return kernels.relu2_bwd(x, g), {}


class GELUSquared(Activation):
    name = "gelu2"

    def forward(self, x, mode="train", rng=None, noise=None):
        return kernels.gelu2_fwd(x), None

    def backward(self, x, g, mode="train", aux=None):
        return kernels.gelu2_bwd(x, g), {}


class ClippedReLUSquared(Activation):
    """min(ReLU(x)^2, threshold); derivative 0 where the clamp is active."""

    def __init__(self, threshold: float):
        if threshold <= 0:
            raise ValueError(f"clip threshold must be positive, got {threshold}")
        self.threshold = float(threshold)
        self.name = f"relu2_clip{_fmt(threshold)}"

    def forward(self, x, mode="train", rng=None, noise=None):
        return kernels.relu2_clip_fwd(x, self.threshold), None

    def backward(self, x, g, mode="train", aux=None):
        return kernels.relu2_clip_bwd(x, g, self.threshold), {}


class ClippedGELUSquared(Activation):
    def __init__(self, threshold: float):
        if threshold <= 0:
            raise ValueError(f"clip threshold must be positive, got {threshold}")
        self.threshold = float(threshold)
        self.name = f"gelu2_clip{_fmt(threshold)}"

    def forward(self, x, mode="train", rng=None, noise=None):
        return kernels.gelu2_clip_fwd(x, self.threshold), None

    def backward(self, x, g, mode="train", aux=None):
        return kernels.gelu2_clip_bwd(x, g, self.threshold), {}


class NoisyReLU(Activation):
    """ReLU with a trainable half-normal noise floor on the negative side.

    Train: a*relu(x) + (1-a)*x + 1[x<0] * c*(sigmoid(v*max(0,-x)) - 0.5)^2 * |N(0,1)|
    Eval: plain ReLU. Backward treats the drawn noise as constant in x; v
    receives gradient through the noise envelope.
    """

    name = "noisy_relu"
    has_params = True

    def __init__(self, alpha: float = 1.0, c: float = 1.0, v_init: float | None = None,
                 rng: RngStream | None = None):
        self.alpha = float(alpha)
        self.c = float(c)
        if v_init is None:
            v_init = float(rng.normal(())) if rng is not None else 1.0
        self.v = np.array([float(v_init)], dtype=np.float64)

    def forward(self, x, mode="train", rng=None, noise=None):
        if mode == "eval":
            return kernels.relu_fwd(x), None
        if noise is None:
            if rng is None:
                raise ValueError("noisy_relu train forward needs an rng (or replay noise)")
            noise = np.abs(rng.normal(x.shape))
        y = kernels.noisy_relu_fwd(x, noise, self.alpha, self.c, float(self.v[0]))
        return y, noise

    def backward(self, x, g, mode="train", aux=None):
        if mode == "eval":
            return kernels.relu_bwd(x, g), {}
        dx = kernels.noisy_relu_bwd_x(x, g, self.alpha)
        if aux is None:
            raise ValueError("noisy_relu backward in train mode needs the forward noise")
        dv = kernels.noisy_relu_grad_v(x, aux, g, self.c, float(self.v[0]))
        return dx, {"v": np.array([dv])}

    def params(self) -> dict:
        return {"v": self.v}


class SugarBSiLU(Activation):
    """ReLU forward with a B-SiLU surrogate backward (straight-through style)."""

    name = "sugar_bsilu"

    def __init__(self, alpha: float = 1.67):
        self.alpha = float(alpha)

    def forward(self, x, mode="train", rng=None, noise=None):
        return kernels.relu_fwd(x), None

    def backward(self, x, g, mode="train", aux=None):
        return kernels.bsilu_bwd(x, g, self.alpha), {}


def _fmt(t: float) -> str:
    return f"{t:g}"


def make_activation(name: str, rng: RngStream | None = None) -> Activation:
    """Build an activation from its config string."""
    key = name.strip().lower()
    simple = {
        "relu": ReLU,
        "gelu": GELU,
        "silu": SiLU,
        "relu2": ReLUSquared,
        "gelu2": GELUSquared,
        "sugar_bsilu": SugarBSiLU,
    }
    if key in simple:
        return simple[key]()
    if key == "noisy_relu":
        return NoisyReLU(rng=rng)
    for prefix, cls in (("relu2_clip", ClippedReLUSquared), ("gelu2_clip", ClippedGELUSquared)):
        if key.startswith(prefix):
            try:
                return cls(float(key[len(prefix):]))
            except ValueError as e:
                raise ValueError(f"bad clip threshold in activation name {name!r}") from e
    raise ValueError(f"unknown activation {name!r}")


# ------------------------------------------------------------------ top-k --


@dataclass(frozen=True)
class TopKConfig:
    k: float
    granularity: str = "per_row"  # or "per_tensor"

    def __post_init__(self):
        if not 0.0 < self.k <= 1.0:
            raise ValueError(f"k must be in (0, 1], got {self.k}")
        if self.granularity not in ("per_row", "per_tensor"):
            raise ValueError(f"unknown granularity {self.granularity!r}")


def keep_count(k: float, n: int) -> int:
    return int(math.ceil(k * n))


def mask_sparsity(cfg: TopKConfig, n: int) -> float:
    """Fraction of entries forced to zero: 1 - ceil(k*n)/n."""
    return 1.0 - keep_count(cfg.k, n) / n


def topk_apply(y: np.ndarray, cfg: TopKConfig):
    """Keep the ceil(k*n) largest-|value| entries; ties keep the lower index.

    Returns (masked, mask). The mask is constant in backward: gradient flows
    only through kept entries.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("topk_apply expects a 2-D array")
    if cfg.granularity == "per_row":
        n = y.shape[1]
        kept = keep_count(cfg.k, n)
        # stable sort on -|y|: equal magnitudes stay in index order
        order = np.argsort(-np.abs(y), axis=1, kind="stable")
        mask = np.zeros_like(y)
        np.put_along_axis(mask, order[:, :kept], 1.0, axis=1)
    else:
        flat = np.abs(y).ravel()
        kept = keep_count(cfg.k, flat.size)
        order = np.argsort(-flat, kind="stable")
        mask = np.zeros(flat.size, dtype=np.float64)
        mask[order[:kept]] = 1.0
        mask = mask.reshape(y.shape)
    return y * mask, mask
