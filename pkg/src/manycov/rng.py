"""Reproducible random streams built on the Philox counter-based generator.

A 64-bit user seed and a path of labels (strings or non-negative integers)
map to an independent Philox key, so replication ``r`` of an experiment
always sees the same stream no matter how many replications run, or on
which worker thread. Uniforms come from the raw 64-bit output and normals
from the inverse CDF, which keeps streams identical across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.typing import NDArray

from .distributions import normal_quantile

_MASK64 = (1 << 64) - 1


def _path_word(path: tuple) -> int:
    h = hashlib.blake2b(digest_size=8)
    for part in path:
        if isinstance(part, (int, np.integer)):
            if part < 0:
                raise ValueError("stream indices must be non-negative")
            h.update(b"i" + int(part).to_bytes(16, "little"))
        else:
            token = str(part).encode()
            h.update(b"s" + len(token).to_bytes(4, "little") + token)
    return int.from_bytes(h.digest(), "little")


class Stream:
    """A single deterministic random stream."""

    def __init__(self, seed: int, *path):
        self.seed = int(seed) & _MASK64
        self.path = tuple(path)
        self._bitgen = np.random.Philox(key=[self.seed, _path_word(self.path)])

    def child(self, *path) -> Stream:
        return Stream(self.seed, *self.path, *path)

    def raw(self, size) -> NDArray[np.uint64]:
        n = int(np.prod(size))
        return self._bitgen.random_raw(n).reshape(size)

    def uniform(self, size) -> NDArray[np.float64]:
        """Uniforms on the open interval (0, 1) with 53-bit resolution."""
        bits = self.raw(size) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, size) -> NDArray[np.float64]:
        return normal_quantile(self.uniform(size))

    def integers(self, high: int, size) -> NDArray[np.intp]:
        """Uniform integers on ``[0, high)``."""
        return np.minimum((self.uniform(size) * high).astype(np.intp), high - 1)

    def generator(self) -> np.random.Generator:
        """A numpy Generator over a fresh copy of this stream's key."""
        return np.random.Generator(np.random.Philox(key=[self.seed, _path_word(self.path)]))


def stream(seed: int, *path) -> Stream:
    return Stream(seed, *path)
