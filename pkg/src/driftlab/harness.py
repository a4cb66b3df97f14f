"""Experiment harness: configs, deterministic runs, CSV/JSON emission.

Metrics go to a CSV with header ``step,seed,layer,metric,value`` plus a JSON
sidecar echoing the fully-resolved config (hashable for provenance), final
evaluations, timings, and any diverged seeds. A rerun with the same config
yields byte-identical files. Desk-scale defaults shrink the reference
configurations; every shrink is listed in the config echo under
``desk_scale_notes``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .activations import TopKConfig, make_activation, mask_sparsity
from .analysis import scale_metrics
from .datasets import ArrayClassification, RandomRegression, load_cifar10, synthetic_classes
from .errors import FormatError, NumericError
from .instrumentation import (WeightSnapshot, cov_term, input_range,
                              neg_fraction, sparsity, zscore_drift)
from .network import (NetworkConfig, build_network, compute_loss, forward_trace,
                      backward_trace, predict_classes)
from .normalization import NormKind, accumulation_stop
from .optim import make_optimizer
from .rng import RngStream
from . import theory

CSV_HEADER = ("step", "seed", "layer", "metric", "value")
SCHEMA = "driftlab-run-v1"

EXPERIMENTS = ("random_mse", "classification", "topk_sweep", "pc_sweep",
               "theorem_check", "relufication", "as_benchmark")


# ------------------------------------------------------------- configs ----


def default_config(experiment: str) -> dict:
    base = {
        "experiment": experiment,
        "steps": 500,
        "seeds": list(range(10)),
        "loss": "mse",
        "network": {
            "input_dim": 128, "hidden_dim": 128, "output_dim": 128, "depth": 5,
            "activation": "relu", "norm": "none", "skip": False, "bias": False,
        },
        "optimizer": {"kind": "sgd", "lr": 0.01, "momentum": 0.9,
                      "betas": [0.9, 0.999], "eps": 1e-8, "weight_decay": 0.0},
        "dataset": {"kind": "random", "batch": 128},
        "metrics": {"dense_until": 200, "every": 10},
        "desk_scale_notes": [],
    }
    if experiment == "random_mse":
        base["desk_scale_notes"] = [
            "500 steps of fresh random batches instead of 5 epochs",
        ]
    elif experiment == "classification":
        base.update(steps=300, seeds=list(range(5)), loss="ce")
        base["network"].update(input_dim=256, hidden_dim=128, output_dim=10, depth=3)
        base["optimizer"].update(kind="adam", lr=1e-3, weight_decay=1e-4)
        base["dataset"] = {"kind": "synthetic_classes", "batch": 128, "n": 2000,
                           "classes": 10, "margin": 3.0}
        base["desk_scale_notes"] = [
            "synthetic Gaussian classes stand in for CIFAR-10 (3072->1024 shrunk to 256->128)",
        ]
    elif experiment == "topk_sweep":
        base.update(steps=200, seeds=list(range(5)), loss="mse")
        base["network"].update(depth=3, activation="gelu")
        base["network"]["topk_k"] = 1.0
        base["network"]["topk_granularity"] = "per_row"
        base["optimizer"].update(kind="sgd", lr=1e-3)
        base["topk_grid"] = [0.10, 0.25, 0.75, 0.90]
        base["desk_scale_notes"] = ["200 steps, 5 seeds instead of 20 runs"]
    elif experiment == "pc_sweep":
        base.update(steps=100, seeds=list(range(3)), loss="mse")
        base["network"].update(depth=3, norm="pc")
        base["network"]["warm_steps"] = 100
        base["network"]["ema_gamma"] = 0.95
        base["dataset"]["batch"] = 512
        base["pc_grid"] = [0.25, 0.5, 0.75]
        base["desk_scale_notes"] = ["ema_gamma=0.95 (reference 0.9999 saturates only at 50k warm steps)"]
    elif experiment == "theorem_check":
        base.update(seeds=[2])
        base["theory_n"] = 10_000
    elif experiment == "relufication":
        base.update(steps=2000, seeds=list(range(3)), loss="ce")
        base["network"].update(input_dim=64, hidden_dim=64, output_dim=10, depth=3,
                               activation="gelu")
        base["optimizer"].update(kind="momentum", lr=1e-2, weight_decay=0.0)
        base["dataset"] = {"kind": "synthetic_classes", "batch": 128, "n": 8000,
                           "classes": 10, "margin": 0.8}
        base["relufy_to"] = "relu"
        base["ft_steps"] = 200
        base["desk_scale_notes"] = [
            "desk-scale MLP and data; 1-epoch fine-tune becomes ft_steps",
            "margin 0.8 keeps the task hard so the loss stays high and drift "
            "accumulates; easy margins converge and pull activations positive",
        ]
    elif experiment == "as_benchmark":
        base.update(steps=160, seeds=[0], loss="mse")
        base["network"].update(input_dim=64, hidden_dim=64, output_dim=64,
                               depth=3, norm="pc")
        base["network"]["warm_steps"] = 80
        base["network"]["ema_gamma"] = 0.95
        base["optimizer"].update(kind="sgd", lr=1e-3)
        base["dataset"]["batch"] = 4096
        base["metrics"] = {"dense_until": 1000, "every": 1}
        base["desk_scale_notes"] = [
            "warm_steps=80 instead of 50000; ema_gamma=0.95 instead of 0.9999",
        ]
    elif experiment != "random_mse":
        raise ValueError(f"unknown experiment {experiment!r}")
    return base


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        exp = d.get("experiment", "random_mse")
        if exp not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {exp!r}; known: {EXPERIMENTS}")
        merged = _deep_merge(default_config(exp), d)
        # a random dataset may pin dims; they flow into the network shape
        ds = merged["dataset"]
        if ds.get("kind") == "random" and "dims" in ds:
            merged["network"]["input_dim"] = ds["dims"]
            merged["network"]["output_dim"] = ds["dims"]
        if ds.get("kind") == "cifar10":
            merged["network"]["input_dim"] = 3072
        cfg = cls(raw=merged)
        cfg.network()  # validate eagerly
        if merged["steps"] < 0:
            raise ValueError("steps must be >= 0")
        if not merged["seeds"]:
            raise ValueError("need at least one seed")
        return cfg

    # -- typed views ------------------------------------------------------
    @property
    def experiment(self) -> str:
        return self.raw["experiment"]

    @property
    def steps(self) -> int:
        return int(self.raw["steps"])

    @property
    def seeds(self) -> list:
        return [int(s) for s in self.raw["seeds"]]

    @property
    def loss(self) -> str:
        return self.raw["loss"]

    def network(self) -> NetworkConfig:
        n = self.raw["network"]
        kind = NormKind(
            variant=n.get("norm", "none"),
            eps=n.get("norm_eps"),
            affine=n.get("norm_affine"),
            pc_q=n.get("pc_q", 0.5),
            pc_grad_mode=n.get("pc_grad_mode", "stop"),
            ema_gamma=n.get("ema_gamma"),
            warm_steps=n.get("warm_steps", 100),
        )
        topk = None
        if n.get("topk_k") is not None and float(n["topk_k"]) < 1.0:
            topk = TopKConfig(k=float(n["topk_k"]),
                              granularity=n.get("topk_granularity", "per_row"))
        cfg = NetworkConfig(
            input_dim=int(n["input_dim"]), hidden_dim=int(n["hidden_dim"]),
            output_dim=int(n["output_dim"]), depth=int(n["depth"]),
            activation=n.get("activation", "relu"), norm=kind,
            skip=bool(n.get("skip", False)), bias=bool(n.get("bias", False)),
            topk=topk,
        )
        cfg.validate()
        return cfg

    def with_updates(self, **sections) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(_deep_merge(self.raw, sections))

    def echo(self) -> dict:
        return copy.deepcopy(self.raw)

    def echo_hash(self) -> str:
        blob = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# -------------------------------------------------------------- run log ----


@dataclass
class RunLog:
    config: dict
    records: list = field(default_factory=list)  # (step, seed, layer, metric, value)
    final: dict = field(default_factory=dict)    # seed -> summary
    timings: dict = field(default_factory=dict)
    diverged: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    logs: list          # (label, RunLog); single-config experiments use label ""
    points: list | None = None   # (s, a) rows for cliff fitting
    report: dict | None = None   # theorem-check report


# ------------------------------------------------------------- datasets ----

_CIFAR_CACHE: dict = {}


def _make_dataset(cfg: ExperimentConfig, rng: RngStream):
    ds = cfg.raw["dataset"]
    kind = ds.get("kind", "random")
    net = cfg.network()
    batch = int(ds.get("batch", 128))
    if kind == "random":
        return RandomRegression(net.input_dim, net.output_dim, batch, rng)
    if kind == "synthetic_classes":
        data_rng = RngStream(int(ds.get("data_seed", 7)))
        x, y = synthetic_classes(int(ds["n"]), net.input_dim, int(ds["classes"]),
                                 data_rng, margin=float(ds.get("margin", 3.0)))
        return ArrayClassification(x, y, batch, rng)
    if kind == "cifar10":
        key = (ds["path"], ds.get("subset_size"), ds.get("data_seed", 0))
        if key not in _CIFAR_CACHE:
            _CIFAR_CACHE[key] = load_cifar10(ds["path"], ds.get("subset_size"),
                                             seed=int(ds.get("data_seed", 0)))
        x, y = _CIFAR_CACHE[key]
        return ArrayClassification(x, y, batch, rng)
    raise ValueError(f"unknown dataset kind {kind!r}")


# ------------------------------------------------------------- training ----


class _Trainer:
    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        root = RngStream(seed)
        self.rng_init = root.split()
        self.rng_data = root.split()
        self.rng_act = root.split()
        self.net = build_network(cfg.network(), self.rng_init)
        self.snap = WeightSnapshot.take(self.net)
        self.opt = self._make_opt()
        self.data = _make_dataset(cfg, self.rng_data)
        self.records: list = []
        self.step = 0
        self.diverged = False
        self.step_times: list = []
        self.last_loss = math.nan

    def _make_opt(self):
        o = self.cfg.raw["optimizer"]
        return make_optimizer(o["kind"], self.net.params, lr=float(o["lr"]),
                              momentum=float(o.get("momentum", 0.9)),
                              betas=tuple(o.get("betas", (0.9, 0.999))),
                              eps=float(o.get("eps", 1e-8)),
                              weight_decay=float(o.get("weight_decay", 0.0)))

    def _record_at(self, step: int, total: int) -> bool:
        m = self.cfg.raw["metrics"]
        return step <= int(m["dense_until"]) or step % int(m["every"]) == 0 \
            or step == total

    def _norm_stats(self):
        for stage in self.net.stages:
            if stage.norm is not None and stage.norm.stats is not None:
                yield stage.norm.stats

    def collect(self, trace, grads):
        rec = self.records
        step, seed = self.step, self.seed
        z = zscore_drift(self.net, self.snap)
        for l in self.net.linear_layers():
            w = self.net.weight(l)
            rec.append((step, seed, l, "weight_mean", float(w.mean())))
            rec.append((step, seed, l, "zscore_drift", z[l]))
            if grads is not None:
                dw = grads.params[f"W{l}"]
                rec.append((step, seed, l, "grad_mean", float(dw.mean())))
                rec.append((step, seed, l, "grad_std", float(dw.std())))
        if trace is None:
            return
        batch = trace.x0.shape[0]
        for stage, st in zip(self.net.stages, trace.stages):
            if stage.act is None:
                continue
            l = stage.index
            rec.append((step, seed, l, "neg_fraction", neg_fraction(st.pre)))
            rec.append((step, seed, l, "sparsity", sparsity(st.post)))
            mx, mn = input_range(st.post)
            rec.append((step, seed, l, "input_range_max", mx))
            rec.append((step, seed, l, "input_range_min", mn))
            if grads is not None:
                # per-sample pre-activation gradient mean (loss averages
                # over the batch; undo that so scale matches theory)
                rec.append((step, seed, l, "pre_grad_mean",
                            float((grads.pre[l] * batch).mean())))
            if grads is not None and batch >= 2:
                signed, absmean = cov_term(grads.pre[l] * batch, st.lin_in)
                rec.append((step, seed, l, "cov_term", signed))
                rec.append((step, seed, l, "cov_term_abs", absmean))

    def train(self, n_steps: int, as_enabled: bool = False, collect: bool = True,
              total_for_cadence: int | None = None):
        total = self.step + n_steps if total_for_cadence is None else total_for_cadence
        if collect and self.step == 0:
            self.collect(None, None)  # init-state row (weights only)
        for _ in range(n_steps):
            if self.diverged:
                break
            self.step += 1
            x, y = self.data.next_batch()
            t0 = time.perf_counter()
            out, trace = forward_trace(self.net, x, mode="train", rng=self.rng_act)
            loss, dout = compute_loss(out, y, self.cfg.loss)
            grads = backward_trace(self.net, trace, dout)
            if not math.isfinite(loss) or not grads.finite():
                self.diverged = True
                break
            try:
                self.opt.step(grads.params)
            except NumericError:
                self.diverged = True
                break
            if as_enabled:
                for stats in self._norm_stats():
                    accumulation_stop(stats, self.step)
            self.step_times.append(time.perf_counter() - t0)
            self.last_loss = loss
            if collect and self._record_at(self.step, total):
                self.collect(trace, grads)

    # -- evaluation -------------------------------------------------------
    def eval_batch(self):
        if isinstance(self.data, ArrayClassification):
            return self.data.x_eval, self.data.y_eval
        return self.data.next_batch()

    def evaluate(self) -> dict:
        x, y = self.eval_batch()
        out, _ = forward_trace(self.net, x, mode="eval")
        summary = {"steps_run": self.step, "diverged": self.diverged}
        if self.cfg.loss == "ce":
            loss, _ = compute_loss(out, y, "ce")
            acc = float(np.mean(np.argmax(out, axis=1) == y))
            summary.update(loss=loss, accuracy=acc)
        else:
            loss, _ = compute_loss(out, y, "mse")
            summary.update(loss=loss)
        return summary

    def activation_profile(self) -> dict:
        """Eval-mode sparsity / negativity over the activated layers."""
        x, _ = self.eval_batch()
        _, trace = forward_trace(self.net, x, mode="eval")
        sp, nf = [], []
        for stage, st in zip(self.net.stages, trace.stages):
            if stage.act is None:
                continue
            sp.append(sparsity(st.post))
            nf.append(neg_fraction(st.pre))
        return {"sparsity": float(np.mean(sp)), "neg_fraction": float(np.mean(nf))}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DRIFTLAB_THREADS", "1")))
    except ValueError:
        return 1


def _run_seeds(cfg: ExperimentConfig, seeds, worker) -> RunLog:
    """Run `worker(seed) -> (records, final, times)` over seeds, in order."""
    log = RunLog(config=cfg.echo())
    nthreads = min(_threads(), len(seeds))
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            results = list(pool.map(worker, seeds))
    else:
        results = [worker(s) for s in seeds]
    for seed, (records, final, times) in zip(seeds, results):
        log.records.extend(records)
        log.final[str(seed)] = final
        if times is not None:
            log.timings[str(seed)] = times
        if final.get("diverged"):
            log.diverged.append(seed)
    return log


# ----------------------------------------------------------- experiments ----


def _train_worker(cfg: ExperimentConfig, as_enabled: bool = False,
                  keep_times: bool = False):
    def worker(seed: int):
        tr = _Trainer(cfg, seed)
        tr.train(cfg.steps, as_enabled=as_enabled)
        final = tr.evaluate()
        times = tr.step_times if keep_times else None
        return tr.records, final, times
    return worker


def run_experiment(cfg: ExperimentConfig, seeds=None) -> ExperimentResult:
    """Dispatch an experiment; returns its labelled run logs."""
    if seeds is None:
        seeds = cfg.seeds
    seeds = [int(s) for s in seeds]
    exp = cfg.experiment

    if exp in ("random_mse", "classification"):
        log = _run_seeds(cfg, seeds, _train_worker(cfg))
        return ExperimentResult(logs=[("", log)])

    if exp == "topk_sweep":
        return _run_sweep(cfg, seeds, "topk_grid",
                          lambda v: {"network": {"topk_k": v}},
                          label_fmt=lambda v: f"k{v:g}",
                          s_of=lambda v, c: mask_sparsity(
                              TopKConfig(k=v), c.network().hidden_dim) if v < 1.0 else 0.0)

    if exp == "pc_sweep":
        return _run_sweep(cfg, seeds, "pc_grid",
                          lambda v: {"network": {"pc_q": v}},
                          label_fmt=lambda v: f"q{v:g}",
                          s_of=lambda v, c: v)

    if exp == "theorem_check":
        report = theory.verification_report(seed=seeds[0],
                                            n=int(cfg.raw.get("theory_n", 10_000)))
        log = RunLog(config=cfg.echo(), final={"all_pass": report["all_pass"]})
        return ExperimentResult(logs=[("", log)], report=report)

    if exp == "relufication":
        return _run_relufication(cfg, seeds)

    if exp == "as_benchmark":
        return _run_as_benchmark(cfg, seeds)

    raise ValueError(f"unknown experiment {exp!r}")


def _run_sweep(cfg, seeds, grid_key, overrides, label_fmt, s_of) -> ExperimentResult:
    grid = cfg.raw.get(grid_key) or []
    if not grid:
        raise ValueError(f"{cfg.experiment} needs a non-empty {grid_key}")
    logs = []
    perf = []
    for v in grid:
        sub = cfg.with_updates(**overrides(float(v)))
        log = _run_seeds(sub, seeds, _train_worker(sub))
        logs.append((label_fmt(float(v)), log))
        finals = [f for f in log.final.values() if not f.get("diverged")]
        metric_name = "accuracy" if cfg.loss == "ce" else "loss"
        vals = [f[metric_name] for f in finals if metric_name in f]
        perf.append((s_of(float(v), cfg),
                     float(np.mean(vals)) if vals else math.nan,
                     metric_name == "loss"))
    scaled = scale_metrics(
        [{"group": "sweep", "value": p[1], "loss": p[2]} for p in perf])
    points = [(p[0], sm.scaled) for p, sm in zip(perf, scaled)]
    return ExperimentResult(logs=logs, points=points)


def relufy_network(net, new_activation: str, rng: RngStream | None = None):
    """Swap every activation in place, keeping weights. Parameterized targets
    need an rng to initialize their parameters."""
    probe = make_activation(new_activation, rng)
    if probe.has_params and rng is None:
        raise ValueError(f"swapping to {new_activation!r} needs an rng to "
                         "initialize its parameters")
    for stage in net.stages:
        if stage.act is None:
            continue
        act = make_activation(new_activation, rng)
        prefix = f"act{stage.index}."
        for pname in [p for p in net.params if p.startswith(prefix)]:
            del net.params[pname]
        stage.act = act
        for pname, arr in act.params().items():
            net.params[prefix + pname] = arr
    net.cfg.activation = new_activation
    return net


def _run_relufication(cfg: ExperimentConfig, seeds) -> ExperimentResult:
    ft_steps = int(cfg.raw.get("ft_steps", 200))
    target = cfg.raw.get("relufy_to", "relu")

    def worker(seed: int):
        tr = _Trainer(cfg, seed)
        tr.train(cfg.steps, total_for_cadence=cfg.steps + ft_steps)
        base = tr.evaluate()
        base_prof = tr.activation_profile()
        relufy_network(tr.net, target)
        tr.opt = tr._make_opt()  # fresh optimizer state for fine-tuning
        conv = tr.evaluate()
        conv_prof = tr.activation_profile()
        tr.train(ft_steps, total_for_cadence=cfg.steps + ft_steps)
        tuned = tr.evaluate()
        tuned_prof = tr.activation_profile()
        final = {
            "steps_run": tr.step, "diverged": tr.diverged,
            "baseline": base, "baseline_profile": base_prof,
            "converted": conv, "converted_profile": conv_prof,
            "finetuned": tuned, "finetuned_profile": tuned_prof,
            "loss": tuned.get("loss"), "accuracy": tuned.get("accuracy"),
        }
        return tr.records, final, None

    log = _run_seeds(cfg, seeds, worker)
    return ExperimentResult(logs=[("", log)])


def _run_as_benchmark(cfg: ExperimentConfig, seeds) -> ExperimentResult:
    warm = int(cfg.raw["network"].get("warm_steps", 100))

    log_as = _run_seeds(cfg, seeds, _train_worker(cfg, as_enabled=True,
                                                  keep_times=True))
    log_plain = _run_seeds(cfg, seeds, _train_worker(cfg, as_enabled=False,
                                                     keep_times=True))
    summary = {}
    for seed in seeds:
        times = log_as.timings.get(str(seed), [])
        # first couple of steps pay cache/JIT warmup; skip them
        pre = times[2:warm]
        post = times[warm:]
        if pre and post:
            summary[str(seed)] = {
                "pre_freeze_median_s": float(np.median(pre)),
                "post_freeze_median_s": float(np.median(post)),
            }
    log_as.timings["summary"] = summary
    return ExperimentResult(logs=[("as", log_as), ("plain", log_plain)])


# ------------------------------------------------------------- emission ----


def emit_metrics(log: RunLog, csv_path: str) -> str:
    """Write the metrics CSV and its JSON sidecar; returns the sidecar path."""
    d = os.path.dirname(csv_path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for step, seed, layer, metric, value in log.records:
            w.writerow((step, seed, layer, metric, repr(float(value))))
    sidecar = os.path.splitext(csv_path)[0] + ".json"
    blob = json.dumps(log.config, sort_keys=True, separators=(",", ":"))
    payload = {
        "schema": SCHEMA,
        "config": log.config,
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "final": log.final,
        "timings": log.timings,
        "diverged": log.diverged,
    }
    with open(sidecar, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return sidecar


def emit_points(points, path: str):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("s", "a"))
        for s, a in points:
            w.writerow((repr(float(s)), repr(float(a))))


def read_metrics_csv(path: str):
    """Rows back as (step, seed, layer, metric, value) tuples."""
    out = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise FormatError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row in r:
            out.append((int(row[0]), int(row[1]), int(row[2]), row[3], float(row[4])))
    return out


def aggregate_metrics(rows):
    """Seed-mean/std per (step, layer, metric), sorted for stable output."""
    groups: dict = {}
    for step, seed, layer, metric, value in rows:
        groups.setdefault((metric, layer, step), []).append(value)
    out = []
    for (metric, layer, step) in sorted(groups, key=lambda k: (k[0], k[1], k[2])):
        vals = np.array(groups[(metric, layer, step)])
        out.append((step, layer, metric, float(vals.mean()),
                    float(vals.std()), len(vals)))
    return out
