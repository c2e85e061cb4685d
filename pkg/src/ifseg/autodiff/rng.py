"""Seeded random streams.

All randomness runs through numpy's PCG64 bit generator (PCG XSL RR 128/64,
O'Neill 2014), seeded through ``numpy.random.SeedSequence``. The stream for a
given ``(seed, stream)`` pair is fixed by numpy's documented algorithm and does
not depend on platform or thread count.
"""

from __future__ import annotations

import zlib
from typing import Sequence

import numpy as np


def _stream_key(stream: str) -> int:
    return zlib.crc32(stream.encode("utf-8"))


class Rng:
    """Deterministic generator keyed by a 64-bit seed and an optional stream name.

    Different stream names under one seed give statistically independent
    sequences, so e.g. weight init and dropout never share draws.
    """

    def __init__(self, seed: int, stream: str = ""):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.stream = stream
        entropy = [self.seed & 0xFFFFFFFF, self.seed >> 32]
        if stream:
            entropy.append(_stream_key(stream))
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def child(self, stream: str) -> "Rng":
        name = f"{self.stream}/{stream}" if self.stream else stream
        return Rng(self.seed, name)

    def random(self, shape: Sequence[int] | int = ()) -> np.ndarray:
        """Uniform doubles in [0, 1)."""
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, shape: Sequence[int] | int = ()) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def normal(self, loc: float = 0.0, scale: float = 1.0, shape: Sequence[int] | int = ()) -> np.ndarray:
        return self._gen.normal(loc, scale, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, shape: Sequence[int] | int = ()) -> np.ndarray:
        return self._gen.integers(low, high, shape)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream!r})"
