"""Compare the numba kernel path against the pure-numpy fallback.

Times every paired elementwise kernel on one large batch, checks that the
two flavours agree numerically, then times full training steps in fresh
subprocesses (the backend binds at import, so each flavour needs its own
interpreter). Run from the repo root:

    python3 benchmarks/bench_backends.py [--rows N] [--cols N] [--steps N]
"""

import argparse
import json
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from driftlab import kernels
from driftlab.rng import RngStream

_CLIP = 15.0
_ALPHA = 1.67


def _kernel_args(key, x, g, noise):
    if key.endswith("_fwd") and "clip" not in key and "noisy" not in key:
        return (x,)
    if key.endswith("_bwd") and "clip" not in key and key != "bsilu_bwd" \
            and "noisy" not in key:
        return (x, g)
    if key.endswith("clip_fwd"):
        return (x, _CLIP)
    if key.endswith("clip_bwd"):
        return (x, g, _CLIP)
    if key == "bsilu_bwd":
        return (x, g, _ALPHA)
    if key == "noisy_relu_fwd":
        return (x, noise, 1.0, 1.0, 1.0)
    if key == "noisy_relu_bwd_x":
        return (x, g, 1.0)
    if key == "noisy_relu_grad_v":
        return (x, noise, g, 1.0, 1.0)
    raise KeyError(key)


def _time(fn, args, repeats):
    fn(*args)  # warm-up (and jit compile on the numba path)
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best.append(time.perf_counter() - t0)
    return statistics.median(best)


def bench_kernels(rows, cols, repeats):
    if kernels.NUMBA_IMPL is None:
        print("numba not importable; nothing to compare")
        return
    rng = RngStream(0)
    x = rng.normal((rows, cols))
    g = rng.normal((rows, cols))
    noise = np.abs(rng.normal((rows, cols)))
    print(f"elementwise kernels on ({rows}, {cols}) float64, "
          f"median of {repeats} calls")
    print(f"{'kernel':<20}{'numpy':>10}{'numba':>10}{'speedup':>9}{'max|diff|':>12}")
    for key in kernels.NUMPY_IMPL:
        args = _kernel_args(key, x, g, noise)
        t_np = _time(kernels.NUMPY_IMPL[key], args, repeats)
        t_nb = _time(kernels.NUMBA_IMPL[key], args, repeats)
        diff = np.max(np.abs(np.asarray(kernels.NUMPY_IMPL[key](*args))
                             - np.asarray(kernels.NUMBA_IMPL[key](*args))))
        print(f"{key:<20}{t_np * 1e3:>8.2f}ms{t_nb * 1e3:>8.2f}ms"
              f"{t_np / t_nb:>8.2f}x{diff:>12.1e}")


_TRAIN_SNIPPET = """
import json, statistics, sys
from driftlab.harness import ExperimentConfig, _Trainer
cfg = ExperimentConfig.from_dict({
    "experiment": "random_mse", "steps": %(steps)d, "seeds": [0],
    "network": {"input_dim": 256, "hidden_dim": 256, "output_dim": 256,
                "depth": 3, "activation": "gelu"},
    "dataset": {"kind": "random", "batch": 1024},
    "metrics": {"dense_until": 0, "every": 10**9}})
tr = _Trainer(cfg, 0)
tr.train(%(steps)d, collect=False)
print(json.dumps({"median_ms": statistics.median(tr.step_times[5:]) * 1e3}))
"""


def bench_train_step(steps):
    print(f"\ntraining step (gelu d=256 depth-3, batch 1024, {steps} steps)")
    for which in ("numpy", "numba"):
        env = dict(os.environ, DRIFTLAB_BACKEND=which, DRIFTLAB_THREADS="1")
        out = subprocess.run(
            [sys.executable, "-c", _TRAIN_SNIPPET % {"steps": steps}],
            env=env, capture_output=True, text=True)
        if out.returncode != 0:
            print(f"{which:<8} failed:\n{out.stderr}")
            continue
        ms = json.loads(out.stdout)["median_ms"]
        print(f"{which:<8} median step {ms:.2f}ms")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--cols", type=int, default=512)
    ap.add_argument("--repeats", type=int, default=9)
    ap.add_argument("--steps", type=int, default=40)
    args = ap.parse_args(argv)
    bench_kernels(args.rows, args.cols, args.repeats)
    bench_train_step(args.steps)


if __name__ == "__main__":
    main()
