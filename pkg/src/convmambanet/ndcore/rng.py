"""Seeded randomness with a pinned algorithm.

The uniform bit stream comes from PCG64 (O'Neill's permuted congruential
generator, as shipped in numpy, whose stream is stable across versions);
normal deviates are produced from that stream by an explicit Box-Muller
transform rather than numpy's ziggurat, so the exact sample sequence is
reproducible from the documented recipe alone.  Independent sub-streams
are derived by hashing a text tag into a child seed with BLAKE2b.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np


class Rng:
    """Deterministic random source: same seed, same sample stream."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, tag: str) -> "Rng":
        """Independent stream keyed by ``tag``: BLAKE2b(seed_le64 || tag) -> seed."""
        h = hashlib.blake2b(digest_size=8)
        h.update(self.seed.to_bytes(8, "little"))
        h.update(tag.encode("utf-8"))
        return Rng(int.from_bytes(h.digest(), "little"))

    def uniform(self, shape=()) -> np.ndarray:
        """float64 samples in [0, 1)."""
        return self._gen.random(shape)

    def normal(self, shape=(), mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Standard normals via Box-Muller on consecutive uniform pairs."""
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)  # (0, 1]: keeps log finite
        u2 = self._gen.random(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * math.pi * u2), r * np.sin(2.0 * math.pi * u2)])
        z = z[:n].reshape(shape)
        if mean != 0.0 or std != 1.0:
            z = mean + std * z
        return z

    def glorot_uniform(self, fan_in: int, fan_out: int, shape) -> np.ndarray:
        """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return (self._gen.random(shape) * 2.0 - 1.0) * limit

    def he_normal(self, fan_in: int, shape) -> np.ndarray:
        """Zero-mean normal with std sqrt(2 / fan_in)."""
        return self.normal(shape, std=math.sqrt(2.0 / fan_in))

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Integers in [low, high)."""
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
