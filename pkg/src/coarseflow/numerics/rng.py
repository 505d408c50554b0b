"""Seedable, splittable random streams on a counter-based (Philox) generator.

Every stochastic operation in the package takes an explicit stream handle.
Child streams are derived from integer labels via SeedSequence spawn keys, so
stream identity depends only on (seed, label path), never on draw order.
"""

from __future__ import annotations

import numpy as np


class Rng:
    def __init__(self, seed):
        if isinstance(seed, np.random.SeedSequence):
            self._ss = seed
        else:
            self._ss = np.random.SeedSequence(int(seed))
        self._gen = np.random.Generator(np.random.Philox(self._ss))

    def child(self, *labels: int) -> "Rng":
        """Independent stream addressed by an integer label path."""
        key = tuple(self._ss.spawn_key) + tuple(int(x) for x in labels)
        return Rng(np.random.SeedSequence(entropy=self._ss.entropy, spawn_key=key))

    def split(self, n: int) -> list["Rng"]:
        return [self.child(i) for i in range(n)]

    def normal(self, shape=(), dtype=np.float64) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=dtype)

    def uniform(self, shape=(), dtype=np.float64) -> np.ndarray:
        """Uniform in [0, 1)."""
        return self._gen.random(shape, dtype=dtype)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]
