"""Portable deterministic randomness primitives.

Everything here is fixed-algorithm (FNV-1a, SplitMix64, Box-Muller) rather
than delegated to a library RNG, so that seeds and generated streams are
bit-identical across platforms, Python versions, and runs.
"""
from __future__ import annotations

import math
from typing import Iterator

_MASK64 = (1 << 64) - 1

FNV1A_OFFSET_BASIS = 0xCBF29CE484222325
FNV1A_PRIME = 0x100000001B3


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash of *data*."""
    h = FNV1A_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV1A_PRIME) & _MASK64
    return h


def derive_seed(sample_id: str, salt: str) -> int:
    """Stable 64-bit seed for a (sample, salt) pair.

    Hashes the UTF-8 bytes of ``sample_id``, a ``|`` separator, and ``salt``
    with FNV-1a. The same pair always yields the same seed on any machine.
    """
    payload = sample_id.encode("utf-8") + b"|" + salt.encode("utf-8")
    return fnv1a_64(payload)


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood), 64-bit state."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        # 53-bit mantissa, shifted into (0, 1] so log() is always finite.
        return ((self.next_u64() >> 11) + 1) * 2.0**-53


def gaussian_stream(seed: int) -> Iterator[float]:
    """Endless stream of standard normal deviates via Box-Muller.

    Uses a SplitMix64 uniform source; both deviates of each Box-Muller pair
    are emitted, so n draws consume exactly ceil(n/2) uniform pairs.
    """
    rng = SplitMix64(seed)
    while True:
        u1 = rng.next_unit()
        u2 = rng.next_unit()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        yield r * math.cos(theta)
        yield r * math.sin(theta)
