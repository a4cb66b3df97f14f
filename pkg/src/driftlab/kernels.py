"""Elementwise activation kernels, in two flavours.

``NUMPY_IMPL`` is the vectorized fallback; ``NUMBA_IMPL`` holds jitted
single-pass loops (fused, no temporaries). The active set is chosen once at
import from ``DRIFTLAB_BACKEND``. Both flavours implement the same contract
and are compared in the backend parity tests and in benchmarks/.

All kernels take and return 2-D float64 arrays; thresholds and scalars are
plain floats. ReLU's derivative at exactly 0 is 0, and clipped variants have
derivative 0 wherever the clamp is active.
"""

import math

import numpy as np
from scipy.special import erf as _erf
from scipy.special import expit as _expit

from . import backend
from .backend import njit

INV_SQRT2 = 1.0 / math.sqrt(2.0)
INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------- numpy ----


def _np_relu_fwd(x):
    return np.maximum(x, 0.0)


def _np_relu_bwd(x, g):
    return g * (x > 0.0)


def _np_relu2_fwd(x):
    r = np.maximum(x, 0.0)
    return r * r


def _np_relu2_bwd(x, g):
    return 2.0 * np.maximum(x, 0.0) * g


def _np_relu2_clip_fwd(x, t):
    r = np.maximum(x, 0.0)
    return np.minimum(r * r, t)


def _np_relu2_clip_bwd(x, g, t):
    r = np.maximum(x, 0.0)
    return np.where(r * r < t, 2.0 * r * g, 0.0)


def _np_gelu_fwd(x):
    return 0.5 * x * (1.0 + _erf(x * INV_SQRT2))


def _np_gelu_grad(x):
    cdf = 0.5 * (1.0 + _erf(x * INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * INV_SQRT2PI
    return cdf + x * pdf


def _np_gelu_bwd(x, g):
    return g * _np_gelu_grad(x)


def _np_gelu2_fwd(x):
    y = _np_gelu_fwd(x)
    return y * y


def _np_gelu2_bwd(x, g):
    return 2.0 * _np_gelu_fwd(x) * _np_gelu_grad(x) * g


def _np_gelu2_clip_fwd(x, t):
    y = _np_gelu_fwd(x)
    return np.minimum(y * y, t)


def _np_gelu2_clip_bwd(x, g, t):
    y = _np_gelu_fwd(x)
    return np.where(y * y < t, 2.0 * y * _np_gelu_grad(x) * g, 0.0)


def _np_silu_fwd(x):
    return x * _expit(x)


def _np_silu_bwd(x, g):
    s = _expit(x)
    return g * (s + x * s * (1.0 - s))


def _np_bsilu_bwd(x, g, alpha):
    # surrogate used under a ReLU forward: sig(x) + (x + alpha) sig'(x)
    s = _expit(x)
    return g * (s + (x + alpha) * s * (1.0 - s))


def _np_noisy_relu_fwd(x, noise_abs, alpha, c, v):
    base = alpha * np.maximum(x, 0.0) + (1.0 - alpha) * x
    sn = c * (_expit(v * np.maximum(0.0, -x)) - 0.5) ** 2
    return base + np.where(x < 0.0, sn * noise_abs, 0.0)


def _np_noisy_relu_bwd_x(x, g, alpha):
    return g * (alpha * (x > 0.0) + (1.0 - alpha))


def _np_noisy_relu_grad_v(x, noise_abs, g, c, v):
    delta = np.maximum(0.0, -x)
    s = _expit(v * delta)
    dsn = 2.0 * c * (s - 0.5) * s * (1.0 - s) * delta
    return float(np.sum(np.where(x < 0.0, g * noise_abs * dsn, 0.0)))


NUMPY_IMPL = {
    "relu_fwd": _np_relu_fwd,
    "relu_bwd": _np_relu_bwd,
    "relu2_fwd": _np_relu2_fwd,
    "relu2_bwd": _np_relu2_bwd,
    "relu2_clip_fwd": _np_relu2_clip_fwd,
    "relu2_clip_bwd": _np_relu2_clip_bwd,
    "gelu_fwd": _np_gelu_fwd,
    "gelu_bwd": _np_gelu_bwd,
    "gelu2_fwd": _np_gelu2_fwd,
    "gelu2_bwd": _np_gelu2_bwd,
    "gelu2_clip_fwd": _np_gelu2_clip_fwd,
    "gelu2_clip_bwd": _np_gelu2_clip_bwd,
    "silu_fwd": _np_silu_fwd,
    "silu_bwd": _np_silu_bwd,
    "bsilu_bwd": _np_bsilu_bwd,
    "noisy_relu_fwd": _np_noisy_relu_fwd,
    "noisy_relu_bwd_x": _np_noisy_relu_bwd_x,
    "noisy_relu_grad_v": _np_noisy_relu_grad_v,
}


# ---------------------------------------------------------------- numba ----

NUMBA_IMPL = None

if backend.HAS_NUMBA:

    @njit(cache=True)
    def _sig(z):
        if z >= 0.0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)

    # cores run on flat 1-D views; wrappers below restore the input shape

    @njit(cache=True)
    def _nb_relu_fwd(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            out[i] = v if v > 0.0 else 0.0
        return out

    @njit(cache=True)
    def _nb_relu_bwd(x, g):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            out[i] = g[i] if x[i] > 0.0 else 0.0
        return out

    @njit(cache=True)
    def _nb_relu2_fwd(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            r = v if v > 0.0 else 0.0
            out[i] = r * r
        return out

    @njit(cache=True)
    def _nb_relu2_bwd(x, g):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            r = v if v > 0.0 else 0.0
            out[i] = 2.0 * r * g[i]
        return out

    @njit(cache=True)
    def _nb_relu2_clip_fwd(x, t):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            r = v if v > 0.0 else 0.0
            y = r * r
            out[i] = y if y < t else t
        return out

    @njit(cache=True)
    def _nb_relu2_clip_bwd(x, g, t):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            r = v if v > 0.0 else 0.0
            out[i] = 2.0 * r * g[i] if r * r < t else 0.0
        return out

    @njit(cache=True)
    def _nb_gelu_fwd(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            out[i] = 0.5 * v * (1.0 + math.erf(v * INV_SQRT2))
        return out

    @njit(cache=True)
    def _nb_gelu_bwd(x, g):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            cdf = 0.5 * (1.0 + math.erf(v * INV_SQRT2))
            pdf = math.exp(-0.5 * v * v) * INV_SQRT2PI
            out[i] = g[i] * (cdf + v * pdf)
        return out

    @njit(cache=True)
    def _nb_gelu2_fwd(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            y = 0.5 * v * (1.0 + math.erf(v * INV_SQRT2))
            out[i] = y * y
        return out

    @njit(cache=True)
    def _nb_gelu2_bwd(x, g):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            cdf = 0.5 * (1.0 + math.erf(v * INV_SQRT2))
            pdf = math.exp(-0.5 * v * v) * INV_SQRT2PI
            y = v * cdf
            out[i] = 2.0 * y * (cdf + v * pdf) * g[i]
        return out

    @njit(cache=True)
    def _nb_gelu2_clip_fwd(x, t):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            y = 0.5 * v * (1.0 + math.erf(v * INV_SQRT2))
            y2 = y * y
            out[i] = y2 if y2 < t else t
        return out

    @njit(cache=True)
    def _nb_gelu2_clip_bwd(x, g, t):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            cdf = 0.5 * (1.0 + math.erf(v * INV_SQRT2))
            y = v * cdf
            if y * y < t:
                pdf = math.exp(-0.5 * v * v) * INV_SQRT2PI
                out[i] = 2.0 * y * (cdf + v * pdf) * g[i]
            else:
                out[i] = 0.0
        return out

    @njit(cache=True)
    def _nb_silu_fwd(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            out[i] = v * _sig(v)
        return out

    @njit(cache=True)
    def _nb_silu_bwd(x, g):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            s = _sig(v)
            out[i] = g[i] * (s + v * s * (1.0 - s))
        return out

    @njit(cache=True)
    def _nb_bsilu_bwd(x, g, alpha):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            s = _sig(v)
            out[i] = g[i] * (s + (v + alpha) * s * (1.0 - s))
        return out

    @njit(cache=True)
    def _nb_noisy_relu_fwd(x, noise_abs, alpha, c, v):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            z = x[i]
            r = z if z > 0.0 else 0.0
            y = alpha * r + (1.0 - alpha) * z
            if z < 0.0:
                d = _sig(v * (-z)) - 0.5
                y += c * d * d * noise_abs[i]
            out[i] = y
        return out

    @njit(cache=True)
    def _nb_noisy_relu_bwd_x(x, g, alpha):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            ind = 1.0 if x[i] > 0.0 else 0.0
            out[i] = g[i] * (alpha * ind + (1.0 - alpha))
        return out

    @njit(cache=True)
    def _nb_noisy_relu_grad_v(x, noise_abs, g, c, v):
        acc = 0.0
        for i in range(x.shape[0]):
            z = x[i]
            if z < 0.0:
                delta = -z
                s = _sig(v * delta)
                dsn = 2.0 * c * (s - 0.5) * s * (1.0 - s) * delta
                acc += g[i] * noise_abs[i] * dsn
        return acc

    def _flat(a):
        return np.ascontiguousarray(a, dtype=np.float64).reshape(-1)

    def _shaped(core, n_arrays):
        def fn(*args):
            arrays = args[:n_arrays]
            scalars = args[n_arrays:]
            shape = np.shape(arrays[0])
            out = core(*[_flat(a) for a in arrays], *scalars)
            return out.reshape(shape)
        return fn

    def _nb_grad_v(x, noise_abs, g, c, v):
        return _nb_noisy_relu_grad_v(_flat(x), _flat(noise_abs), _flat(g), c, v)

    NUMBA_IMPL = {
        "relu_fwd": _shaped(_nb_relu_fwd, 1),
        "relu_bwd": _shaped(_nb_relu_bwd, 2),
        "relu2_fwd": _shaped(_nb_relu2_fwd, 1),
        "relu2_bwd": _shaped(_nb_relu2_bwd, 2),
        "relu2_clip_fwd": _shaped(_nb_relu2_clip_fwd, 1),
        "relu2_clip_bwd": _shaped(_nb_relu2_clip_bwd, 2),
        "gelu_fwd": _shaped(_nb_gelu_fwd, 1),
        "gelu_bwd": _shaped(_nb_gelu_bwd, 2),
        "gelu2_fwd": _shaped(_nb_gelu2_fwd, 1),
        "gelu2_bwd": _shaped(_nb_gelu2_bwd, 2),
        "gelu2_clip_fwd": _shaped(_nb_gelu2_clip_fwd, 1),
        "gelu2_clip_bwd": _shaped(_nb_gelu2_clip_bwd, 2),
        "silu_fwd": _shaped(_nb_silu_fwd, 1),
        "silu_bwd": _shaped(_nb_silu_bwd, 2),
        "bsilu_bwd": _shaped(_nb_bsilu_bwd, 2),
        "noisy_relu_fwd": _shaped(_nb_noisy_relu_fwd, 2),
        "noisy_relu_bwd_x": _shaped(_nb_noisy_relu_bwd_x, 2),
        "noisy_relu_grad_v": _nb_grad_v,
    }


ACTIVE = NUMBA_IMPL if backend.USE_NUMBA else NUMPY_IMPL

relu_fwd = ACTIVE["relu_fwd"]
relu_bwd = ACTIVE["relu_bwd"]
relu2_fwd = ACTIVE["relu2_fwd"]
relu2_bwd = ACTIVE["relu2_bwd"]
relu2_clip_fwd = ACTIVE["relu2_clip_fwd"]
relu2_clip_bwd = ACTIVE["relu2_clip_bwd"]
gelu_fwd = ACTIVE["gelu_fwd"]
gelu_bwd = ACTIVE["gelu_bwd"]
gelu2_fwd = ACTIVE["gelu2_fwd"]
gelu2_bwd = ACTIVE["gelu2_bwd"]
gelu2_clip_fwd = ACTIVE["gelu2_clip_fwd"]
gelu2_clip_bwd = ACTIVE["gelu2_clip_bwd"]
silu_fwd = ACTIVE["silu_fwd"]
silu_bwd = ACTIVE["silu_bwd"]
bsilu_bwd = ACTIVE["bsilu_bwd"]
noisy_relu_fwd = ACTIVE["noisy_relu_fwd"]
noisy_relu_bwd_x = ACTIVE["noisy_relu_bwd_x"]
noisy_relu_grad_v = ACTIVE["noisy_relu_grad_v"]
