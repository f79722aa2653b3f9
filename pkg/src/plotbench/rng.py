"""Portable deterministic random numbers.

Everything downstream that needs randomness (synthetic data, shot selection,
scripted backends) draws from the splitmix64 generator in counter mode:
output ``i`` of stream ``seed`` is ``mix64(seed + (i+1) * GOLDEN_GAMMA)``
with the finalizer from Steele, Lea & Flood's SplittableRandom.  Counter mode
makes every draw a pure function of ``(seed, index)``, so streams are
reproducible across platforms and trivially parallelizable.

Gaussians use the Box-Muller transform on pairs of 53-bit uniforms; uniforms
are ``(word >> 11) * 2**-53``.  Both transforms are pinned here so that a
regenerated dataset is bit-identical for a given seed.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_U53_INV = 2.0**-53


def splitmix64(seed: int, start: int, count: int) -> np.ndarray:
    """Raw 64-bit outputs ``start .. start+count`` of the stream for ``seed``."""
    if count < 0 or start < 0:
        raise ValueError("start and count must be non-negative")
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * GOLDEN_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_seed(*parts) -> int:
    """Stable 64-bit sub-seed from arbitrary JSON-serializable parts.

    SHA-256 over the canonical JSON encoding, truncated to the top 8 bytes.
    Used to give every grid cell, replicate and backend its own stream.
    """
    payload = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=str)
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class Rng:
    """Stateful view over one splitmix64 stream.

    Tracks how many raw words have been consumed so consecutive calls never
    overlap.  All methods are deterministic functions of the construction
    seed and the call sequence.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._pos = 0

    def _raw(self, count: int) -> np.ndarray:
        out = splitmix64(self.seed, self._pos, count)
        self._pos += count
        return out

    def uniforms(self, count: int) -> np.ndarray:
        """``count`` doubles uniform on [0, 1)."""
        return (self._raw(count) >> np.uint64(11)).astype(np.float64) * _U53_INV

    def uniform(self, lo: float = 0.0, hi: float = 1.0, count: int = 1) -> np.ndarray:
        return lo + self.uniforms(count) * (hi - lo)

    def normals(self, count: int, std: float = 1.0) -> np.ndarray:
        """Standard-normal draws via Box-Muller, scaled by ``std``."""
        pairs = (count + 1) // 2
        words = self._raw(2 * pairs)
        # u1 on (0, 1] so log() is finite; u2 on [0, 1).
        u1 = ((words[:pairs] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _U53_INV
        u2 = (words[pairs:] >> np.uint64(11)).astype(np.float64) * _U53_INV
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:count]
        return z * std

    def integers(self, bound: int, count: int = 1) -> np.ndarray:
        """Integers uniform on [0, bound) (53-bit resolution, bound << 2**53)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return np.minimum((self.uniforms(count) * bound).astype(np.int64), bound - 1)

    def choice(self, items, count: int = 1, replace: bool = True) -> list:
        items = list(items)
        if not replace:
            if count > len(items):
                raise ValueError("cannot draw more items than available without replacement")
            picked = []
            pool = items[:]
            for _ in range(count):
                i = int(self.integers(len(pool))[0])
                picked.append(pool.pop(i))
            return picked
        return [items[int(i)] for i in self.integers(len(items), count)]

    def shuffle(self, items) -> list:
        """Fisher-Yates shuffle; returns a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self.integers(i + 1)[0])
            out[i], out[j] = out[j], out[i]
        return out
