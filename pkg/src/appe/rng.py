"""Keyed random streams.

Every consumer of randomness asks the root for a stream by a key path such as
``("round", 17, "alice")``.  The key path is folded into a numpy
``SeedSequence`` spawn key, so a stream depends only on (seed, key) and never on
how many draws other consumers made before it.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_word(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    return zlib.crc32(str(key).encode()) | (1 << 32)


class Streams:
    """Root of a tree of independent, reproducible generators."""

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(path)

    def fork(self, *keys) -> "Streams":
        return Streams(self.seed, self.path + keys)

    def gen(self, *keys) -> np.random.Generator:
        words = tuple(_key_word(k) for k in self.path + keys)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=words)
        return np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"Streams(seed={self.seed}, path={self.path!r})"


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, a Streams root, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, Streams):
        return rng.gen()
    return np.random.default_rng(rng)
