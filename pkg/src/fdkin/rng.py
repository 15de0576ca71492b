"""Deterministic 64-bit PRNG shared by every randomized component.

All randomness in the package flows from a single seed through the
splitmix64 generator so that runs are reproducible bit-for-bit and a
reimplementation in another language can match the streams exactly.

The update rule (all arithmetic mod 2^64):

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

Doubles in [0, 1) are produced from the top 53 bits: (output >> 11) * 2^-53.
Substreams are derived by `substream(seed, tag)` which folds an ASCII tag
into the seed with one splitmix64 step per byte.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def splitmix64(state: int) -> tuple[int, int]:
    """Advance one step; returns (new_state, output)."""
    state = (state + GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return state, z ^ (z >> 31)


def substream(seed: int, tag: str) -> int:
    """Derive a named substream seed from the master seed."""
    state = seed & MASK64
    for ch in tag.encode("ascii"):
        state, _ = splitmix64(state ^ ch)
    return state


class SplitMix64:
    """Stateful wrapper producing u64s, doubles and small vectors."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state, out = splitmix64(self.state)
        return out

    def uniform(self) -> float:
        """Double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)])

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def point_in_box(self, half_width: float) -> np.ndarray:
        return np.array([self.uniform_in(-half_width, half_width) for _ in range(3)])

    def unit_vector(self) -> np.ndarray:
        """Uniform direction on the sphere (inverse-CDF in cos(theta))."""
        t = self.uniform_in(-1.0, 1.0)
        phi = self.uniform_in(0.0, 2.0 * np.pi)
        s = np.sqrt(max(0.0, 1.0 - t * t))
        return np.array([s * np.cos(phi), s * np.sin(phi), t])

    def normal(self) -> float:
        """Box-Muller, one value per call (second draw discarded)."""
        u1 = self.uniform()
        u2 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
            u2 = self.uniform()
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
