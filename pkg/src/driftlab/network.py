"""MLP assembly, traced forward, and manual backprop.

A network with depth = D carries L = D + 1 weight matrices: an input
projection followed by D blocks. Blocks are pre-norm (Norm -> Linear -> Act);
the final block has no activation, so activations sit after layers 1..L-1.
With skip=True, equal-dim blocks compute x + block(x). Batch layout is one
row per sample; Linear computes x @ W.T (+ b), W shaped (out, in), init
Normal(0, 2/fan_in).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import Activation, TopKConfig, make_activation, topk_apply
from .normalization import NormKind, NormLayer
from .numerics import gaussian_init
from .rng import RngStream


@dataclass
class NetworkConfig:
    input_dim: int
    hidden_dim: int
    output_dim: int
    depth: int
    activation: str = "relu"
    norm: NormKind | str = "none"
    skip: bool = False
    bias: bool = False
    topk: TopKConfig | None = None

    def norm_kind(self) -> NormKind:
        k = self.norm
        if isinstance(k, str):
            k = NormKind(variant=k)
        return k.resolved()

    def validate(self):
        for name in ("input_dim", "hidden_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        self.norm_kind()


@dataclass
class Stage:
    index: int  # 1-based linear-layer index
    in_dim: int
    out_dim: int
    norm: NormLayer | None
    act: Activation | None
    topk: TopKConfig | None
    skip: bool


class Network:
    def __init__(self, cfg: NetworkConfig, stages: list[Stage], params: dict):
        self.cfg = cfg
        self.stages = stages
        self.params = params

    @property
    def n_layers(self) -> int:
        return len(self.stages)

    def weight(self, l: int) -> np.ndarray:
        return self.params[f"W{l}"]

    def linear_layers(self):
        return range(1, self.n_layers + 1)

    def activated_layers(self):
        return range(1, self.n_layers)


def build_network(cfg: NetworkConfig, rng: RngStream) -> Network:
    cfg.validate()
    kind = cfg.norm_kind()
    L = cfg.depth + 1
    stages = []
    params = {}
    for l in range(1, L + 1):
        in_dim = cfg.input_dim if l == 1 else cfg.hidden_dim
        out_dim = cfg.hidden_dim if l < L else cfg.output_dim
        W = gaussian_init(out_dim, in_dim, np.sqrt(2.0 / in_dim), rng)
        params[f"W{l}"] = W
        if cfg.bias:
            params[f"b{l}"] = np.zeros(out_dim, dtype=np.float64)
        norm = None
        if l >= 2 and kind.variant != "none":
            norm = NormLayer(kind, in_dim)
            for pname, arr in norm.params().items():
                params[f"norm{l}.{pname}"] = arr
        act = None
        topk = None
        if l < L:
            act = make_activation(cfg.activation, rng)
            for pname, arr in act.params().items():
                params[f"act{l}.{pname}"] = arr
            topk = cfg.topk
        skip = bool(cfg.skip and l >= 2 and in_dim == out_dim)
        stages.append(Stage(l, in_dim, out_dim, norm, act, topk, skip))
    return Network(cfg, stages, params)


@dataclass
class StageTrace:
    block_in: np.ndarray
    lin_in: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    gate: np.ndarray | None
    mask: np.ndarray | None
    aux: object
    norm_cache: dict | None


@dataclass
class TrainingTrace:
    mode: str
    x0: np.ndarray
    stages: list[StageTrace] = field(default_factory=list)
    output: np.ndarray | None = None

    def pre(self, l: int) -> np.ndarray:
        return self.stages[l - 1].pre

    def post(self, l: int) -> np.ndarray:
        return self.stages[l - 1].post


def forward_trace(net: Network, x, mode: str = "train",
                  rng: RngStream | None = None):
    """Run the network, recording everything backward and analysis need."""
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("input must be 2-D (rows = samples)")
    if x.shape[1] != net.cfg.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != config {net.cfg.input_dim}")
    trace = TrainingTrace(mode=mode, x0=x)
    cur = x
    for stage in net.stages:
        block_in = cur
        norm_cache = None
        if stage.norm is not None:
            cur, norm_cache = stage.norm.forward(cur, mode)
        lin_in = cur
        W = net.params[f"W{stage.index}"]
        pre = lin_in @ W.T
        if f"b{stage.index}" in net.params:
            pre = pre + net.params[f"b{stage.index}"]
        gate = None
        mask = None
        aux = None
        if stage.act is not None:
            post, aux = stage.act.forward(pre, mode=mode, rng=rng)
            gate = pre > 0.0
            if stage.topk is not None:
                post, mask = topk_apply(post, stage.topk)
        else:
            post = pre
        cur = block_in + post if stage.skip else post
        trace.stages.append(StageTrace(block_in, lin_in, pre, post, gate, mask,
                                       aux, norm_cache))
    trace.output = cur
    return cur, trace


@dataclass
class Gradients:
    params: dict
    pre: dict  # layer index -> dL/d(pre-activation), batch-mean convention

    def finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


def backward_trace(net: Network, trace: TrainingTrace, dout: np.ndarray) -> Gradients:
    """Chain rule through the trace; returns parameter and pre-activation grads."""
    grads = {}
    pre_grads = {}
    g = np.asarray(dout, dtype=np.float64)
    for stage, st in zip(reversed(net.stages), reversed(trace.stages)):
        g_skip = g if stage.skip else None
        if stage.act is not None:
            if st.mask is not None:
                g = g * st.mask
            g, dact = stage.act.backward(st.pre, g, mode=trace.mode, aux=st.aux)
            for pname, dval in dact.items():
                grads[f"act{stage.index}.{pname}"] = dval
        pre_grads[stage.index] = g
        W = net.params[f"W{stage.index}"]
        grads[f"W{stage.index}"] = g.T @ st.lin_in
        if f"b{stage.index}" in net.params:
            grads[f"b{stage.index}"] = g.sum(axis=0)
        g = g @ W
        if stage.norm is not None:
            g, dnorm = stage.norm.backward(g, st.norm_cache)
            for pname, dval in dnorm.items():
                grads[f"norm{stage.index}.{pname}"] = dval
        if g_skip is not None:
            g = g + g_skip
    return Gradients(params=grads, pre=pre_grads)


def compute_loss(pred: np.ndarray, target, kind: str = "mse"):
    """Batch-mean loss and its gradient w.r.t. pred.

    mse: 0.5*||pred-target||^2 / batch, grad (pred-target)/batch.
    ce: softmax cross-entropy; targets are class indices or one-hot rows.
    """
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 2:
        raise ValueError("pred must be 2-D")
    b = pred.shape[0]
    if kind == "mse":
        target = np.asarray(target, dtype=np.float64)
        if target.shape != pred.shape:
            raise ValueError(f"target shape {target.shape} != pred {pred.shape}")
        diff = pred - target
        loss = 0.5 * float(np.sum(diff * diff)) / b
        return loss, diff / b
    if kind == "ce":
        target = np.asarray(target)
        if target.ndim == 1:
            if target.shape[0] != b:
                raise ValueError("target length != batch")
            if target.size and (target.min() < 0 or target.max() >= pred.shape[1]):
                raise ValueError("class index out of range")
            onehot = np.zeros_like(pred)
            onehot[np.arange(b), target.astype(int)] = 1.0
        elif target.shape == pred.shape:
            onehot = target.astype(np.float64)
        else:
            raise ValueError(f"target shape {target.shape} incompatible with logits")
        z = pred - pred.max(axis=1, keepdims=True)
        ez = np.exp(z)
        sm = ez / ez.sum(axis=1, keepdims=True)
        logp = z - np.log(ez.sum(axis=1, keepdims=True))
        loss = -float(np.sum(onehot * logp)) / b
        return loss, (sm - onehot) / b
    raise ValueError(f"unknown loss kind {kind!r}")


def predict_classes(net: Network, x) -> np.ndarray:
    out, _ = forward_trace(net, x, mode="eval")
    return np.argmax(out, axis=1)
