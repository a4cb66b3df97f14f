"""First-order optimizers over a named parameter dict.

All updates mutate parameter arrays in place so views held by layers stay
valid. Non-finite gradients raise NumericError before any parameter is
touched.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError


class Optimizer:
    def __init__(self, params: dict, lr: float):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.params = params
        self.lr = float(lr)
        self.t = 0

    def _check_grads(self, grads: dict):
        for name in self.params:
            g = grads.get(name)
            if g is None:
                raise ValueError(f"missing gradient for {name}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {name}")

    def step(self, grads: dict):
        raise NotImplementedError


class SGD(Optimizer):
    def step(self, grads: dict):
        self._check_grads(grads)
        self.t += 1
        for name, w in self.params.items():
            w -= self.lr * grads[name]


class SGDMomentum(Optimizer):
    def __init__(self, params: dict, lr: float, momentum: float = 0.9):
        super().__init__(params, lr)
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.mu = float(momentum)
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict):
        self._check_grads(grads)
        self.t += 1
        for name, w in self.params.items():
            v = self.velocity[name]
            v *= self.mu
            v += grads[name]
            w -= self.lr * v


class Adam(Optimizer):
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        super().__init__(params, lr)
        b1, b2 = betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ValueError(f"betas must be in [0, 1), got {betas}")
        self.b1, self.b2 = float(b1), float(b2)
        self.eps = float(eps)
        self.wd = float(weight_decay)
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def _adam_update(self, name: str, w: np.ndarray, g: np.ndarray):
        m, v = self.m[name], self.v[name]
        m *= self.b1
        m += (1.0 - self.b1) * g
        v *= self.b2
        v += (1.0 - self.b2) * g * g
        mhat = m / (1.0 - self.b1 ** self.t)
        vhat = v / (1.0 - self.b2 ** self.t)
        w -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def step(self, grads: dict):
        self._check_grads(grads)
        self.t += 1
        for name, w in self.params.items():
            g = grads[name]
            if self.wd != 0.0:
                g = g + self.wd * w  # coupled decay: added to the gradient
            self._adam_update(name, w, g)


class AdamW(Adam):
    def step(self, grads: dict):
        self._check_grads(grads)
        self.t += 1
        for name, w in self.params.items():
            if self.wd != 0.0:
                w -= self.lr * self.wd * w  # decoupled decay before the update
            self._adam_update(name, w, grads[name])


def make_optimizer(name: str, params: dict, lr: float, momentum: float = 0.9,
                   betas=(0.9, 0.999), eps: float = 1e-8,
                   weight_decay: float = 0.0) -> Optimizer:
    key = name.strip().lower()
    if key == "sgd":
        return SGD(params, lr)
    if key in ("sgd_momentum", "momentum"):
        return SGDMomentum(params, lr, momentum)
    if key == "adam":
        return Adam(params, lr, betas, eps, weight_decay)
    if key == "adamw":
        return AdamW(params, lr, betas, eps, weight_decay)
    raise ValueError(f"unknown optimizer {name!r}")
