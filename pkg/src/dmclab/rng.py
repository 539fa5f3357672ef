"""SplitMix64 stream used for weight initialization.

The algorithm is fixed (Steele, Lea & Flood's SplitMix64 finalizer), so a
seed yields the same weights on every platform and numpy version.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    def next_u64(self, n: int) -> np.ndarray:
        # state_i = seed + i * golden, then the usual mixing function
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = self.state + steps * _GOLDEN
            self.state = z[-1] if n else self.state
            z = (z ^ (z >> np.uint64(30))) * _M1
            z = (z ^ (z >> np.uint64(27))) * _M2
            z = z ^ (z >> np.uint64(31))
        return z

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """``n`` float64 values in ``[low, high)`` from the top 53 bits."""
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return low + (high - low) * u

    def fork(self, tag: str) -> "SplitMix64":
        """Independent child stream keyed by a string tag."""
        h = 1469598103934665603
        for byte in tag.encode():
            h = ((h ^ byte) * 1099511628211) & 0xFFFFFFFFFFFFFFFF
        return SplitMix64(int(self.next_u64(1)[0]) ^ h)


def fan_in_uniform(rng: SplitMix64, shape, dtype=np.float32) -> np.ndarray:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)), fan_in = prod(shape[1:])."""
    fan_in = int(np.prod(shape[1:]))
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(int(np.prod(shape)), -bound, bound).reshape(shape).astype(dtype)
