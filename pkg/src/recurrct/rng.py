"""Counter-based SplitMix64 generator.

Every random draw in the package (synthetic cohorts, weight init, shuffles,
splits) comes from this generator, so outputs depend only on the seed and the
order of draws, never on numpy's distribution implementations.

The i-th output of a stream with state ``s`` is ``mix(s + (i + 1) * GAMMA)``
with the standard SplitMix64 finalizer. Uniform doubles take the top 53 bits;
normals use the Box-Muller transform on pairs of uniforms.
"""
from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Deterministic stream of 64-bit words, uniforms and normals."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + idx * GAMMA
            out = _mix(z)
        self.state = (self.state + n * int(GAMMA)) & _MASK
        return out

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """``n`` doubles in [low, high)."""
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return low + (high - low) * u

    def normal(self, n: int, sigma: float = 1.0) -> np.ndarray:
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1 = 1.0 - u[:m]  # (0, 1], keeps log finite
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u[m:]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return sigma * z[:n]

    def permutation(self, n: int) -> np.ndarray:
        keys = self.next_u64(n)
        return np.argsort(keys, kind="stable")

    def spawn(self, key: int) -> "SplitMix64":
        """Independent child stream; does not advance this one."""
        with np.errstate(over="ignore"):
            child = _mix(np.array([np.uint64(self.state) ^ np.uint64(key & _MASK)]) + GAMMA)
        return SplitMix64(int(child[0]))
