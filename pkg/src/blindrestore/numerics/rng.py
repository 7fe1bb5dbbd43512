"""Counter-based random streams keyed by ``(seed, stream)``.

Every consumer draws from its own stream so that work split across threads
or processes reproduces a serial run exactly.
"""

from __future__ import annotations

import zlib
from typing import Sequence, TypeVar

import numpy as np

_MASK64 = (1 << 64) - 1
T = TypeVar("T")


def stream_id(tag: str, index: int = 0) -> int:
    """Stable 64-bit stream id for a named purpose and an item index."""
    return ((zlib.crc32(tag.encode()) & 0xFFFFFFFF) << 32) | (int(index) & 0xFFFFFFFF)


class SeededRng:
    """Philox-4x64 generator whose 128-bit key is ``seed | stream << 64``."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        key = self.seed | (self.stream << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @classmethod
    def for_item(cls, seed: int, tag: str, index: int = 0) -> "SeededRng":
        return cls(seed, stream_id(tag, index))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, size, dtype=np.float32) -> np.ndarray:
        return self._gen.standard_normal(size, dtype=np.float64).astype(dtype)

    def poisson(self, lam, size=None) -> np.ndarray:
        return self._gen.poisson(lam, size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in the closed interval ``[low, high]``."""
        return self._gen.integers(low, high, size=size, endpoint=True)

    def choice(self, options: Sequence[T]) -> T:
        return options[int(self._gen.integers(0, len(options)))]

    def bernoulli(self, p: float) -> bool:
        return bool(self._gen.random() < p)
