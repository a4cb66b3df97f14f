"""Counter-based random streams.

Philox is counter-based, so a given seed yields the same sequence on every
platform, and ``split`` derives independent child streams deterministically.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    def __init__(self, seed=None, _seq: np.random.SeedSequence | None = None):
        self.seq = _seq if _seq is not None else np.random.SeedSequence(seed)
        self.gen = np.random.Generator(np.random.Philox(self.seq))

    def split(self) -> "RngStream":
        """Next child stream; successive calls give distinct streams."""
        return RngStream(_seq=self.seq.spawn(1)[0])

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self.gen.normal(0.0, std, size=shape)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)
