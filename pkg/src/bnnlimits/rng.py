"""Seeded, splittable random streams.

Every sampler in this package takes an explicit ``RngStream``; there is no
global RNG state. Streams are identified by a 64-bit seed plus a spawn path,
so the same (seed, path) always reproduces the same variate sequence, and
child streams obtained from ``split`` are statistically independent.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A named substream of a counter-based generator (PCG64 via SeedSequence)."""

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.path))
        )

    def split(self, n: int) -> list["RngStream"]:
        """Derive ``n`` independent child streams. Deterministic in (seed, path)."""
        return [RngStream(self.seed, self.path + (i,)) for i in range(n)]

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.path + (int(index),))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
