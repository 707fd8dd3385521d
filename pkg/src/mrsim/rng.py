"""Seeded deterministic random streams.

The generator is splitmix64 (Steele, Lea & Flood's mixing constants): a
64-bit counter advanced by the golden-gamma constant and finalized with two
xor-shift multiplies. It is platform-independent and fast enough for
simulation use. Every stochastic choice in a run draws from a named stream
derived from the master seed, so adding draws to one stream never perturbs
the others.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

T = TypeVar("T")


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


class RandomStream:
    """splitmix64 generator with the handful of draws the simulator needs."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix64(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) / float(1 << 53)

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n). Multiply-shift bounding (bias < 2^-64)."""
        if n <= 0:
            raise ValueError("randrange needs a positive bound")
        return (self.next_u64() * n) >> 64

    def choice(self, seq: Sequence[T]) -> T:
        if not seq:
            raise ValueError("choice from an empty sequence")
        return seq[self.randrange(len(seq))]

    def uniform_int(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], inclusive on both ends."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.randrange(hi - lo + 1)


def derive_stream(master_seed: int, name: str) -> RandomStream:
    """Derive an independent named stream from the master seed."""
    return RandomStream(_mix64((master_seed & _MASK64) ^ _fnv1a64(name)))
