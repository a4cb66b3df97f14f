"""Data sources for the experiment harness.

CIFAR-10 is read from the binary batch format: 3073-byte records, one label
byte (0..9) followed by 3072 pixel bytes in channel planes (R, G, B), each a
row-major 32x32 image. Pixels are scaled to [0, 1] and normalized with the
usual per-channel statistics.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import FormatError
from .rng import RngStream

CIFAR10_MEAN = np.array([0.4914, 0.4822, 0.4465])
CIFAR10_STD = np.array([0.2470, 0.2435, 0.2616])
_RECORD = 3073


class RandomRegression:
    """Fresh N(0,1) input/target pairs every batch."""

    def __init__(self, input_dim: int, output_dim: int, batch: int, rng: RngStream):
        if batch < 1:
            raise ValueError("batch must be >= 1")
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.batch = batch
        self.rng = rng

    def next_batch(self):
        x = self.rng.normal((self.batch, self.input_dim))
        y = self.rng.normal((self.batch, self.output_dim))
        return x, y


class ArrayClassification:
    """Finite labelled set served in shuffled minibatches, with a held-out split."""

    def __init__(self, x: np.ndarray, y: np.ndarray, batch: int, rng: RngStream,
                 eval_fraction: float = 0.2):
        if len(x) != len(y):
            raise ValueError("x and y length mismatch")
        if batch < 1:
            raise ValueError("batch must be >= 1")
        n_eval = int(round(len(x) * eval_fraction))
        perm = rng.permutation(len(x))
        self.x_eval = x[perm[:n_eval]]
        self.y_eval = y[perm[:n_eval]]
        self.x_train = x[perm[n_eval:]]
        self.y_train = y[perm[n_eval:]]
        self.batch = batch
        self.rng = rng
        self._order = None
        self._pos = 0

    def next_batch(self):
        n = len(self.x_train)
        if self._order is None or self._pos + self.batch > n:
            self._order = self.rng.permutation(n)
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch]
        self._pos += self.batch
        return self.x_train[idx], self.y_train[idx]


def synthetic_classes(n: int, d: int, classes: int, rng: RngStream,
                      margin: float = 3.0):
    """Gaussian blobs: class means margin apart, unit within-class spread."""
    if n < 1 or d < 1 or classes < 2:
        raise ValueError("need n >= 1, d >= 1, classes >= 2")
    means = rng.normal((classes, d))
    means *= margin / np.linalg.norm(means, axis=1, keepdims=True)
    y = rng.integers(0, classes, size=n)
    x = means[y] + rng.normal((n, d))
    return x, y.astype(np.int64)


def load_cifar10(path: str, subset_size: int | None = None, seed: int = 0):
    """Parse CIFAR-10 binary batches; returns (x, y) with x flat length 3072.

    `path` may be one .bin file or a directory of data_batch_*.bin files.
    Subset selection is a seeded permutation, so a given (path, subset_size,
    seed) triple always yields the same rows.
    """
    if os.path.isdir(path):
        files = sorted(f for f in os.listdir(path)
                       if f.startswith("data_batch") and f.endswith(".bin"))
        if not files:
            raise FormatError(f"no data_batch_*.bin files under {path}")
        files = [os.path.join(path, f) for f in files]
    elif os.path.isfile(path):
        files = [path]
    else:
        raise FileNotFoundError(path)

    records = []
    for f in files:
        raw = np.fromfile(f, dtype=np.uint8)
        if raw.size == 0 or raw.size % _RECORD != 0:
            raise FormatError(f"{f}: size {raw.size} is not a multiple of {_RECORD}")
        records.append(raw.reshape(-1, _RECORD))
    data = np.concatenate(records, axis=0)
    labels = data[:, 0]
    if labels.max(initial=0) > 9:
        raise FormatError(f"label byte out of range (max {labels.max()})")
    pixels = data[:, 1:].astype(np.float64) / 255.0
    pixels = pixels.reshape(-1, 3, 1024)
    pixels = (pixels - CIFAR10_MEAN[None, :, None]) / CIFAR10_STD[None, :, None]
    x = pixels.reshape(-1, 3072)
    y = labels.astype(np.int64)

    if subset_size is not None:
        if subset_size < 0 or subset_size > len(x):
            raise ValueError(f"subset_size {subset_size} out of range for {len(x)} rows")
        idx = RngStream(seed).permutation(len(x))[:subset_size]
        x, y = x[idx], y[idx]
    return x, y
