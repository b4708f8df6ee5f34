"""Counter-based pseudorandom generator for reproducible fixtures.

SplitMix64 keyed by (seed, stream): each draw mixes an explicit counter,
so identical (seed, stream, index) triples produce identical values on
any platform without carrying generator state around. Gaussians come
from a Box-Muller transform of counter pairs.
"""

from __future__ import annotations

import numpy as np

__all__ = ["CounterRng"]

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Stateless uniform/normal source addressed by integer counters."""

    def __init__(self, seed: int, stream: int = 0):
        with np.errstate(over="ignore"):
            key = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
            twist = _mix(np.uint64(stream & 0xFFFFFFFFFFFFFFFF) * _GOLDEN)
            self._key = _mix(key ^ twist)

    def stream(self, label: int) -> "CounterRng":
        """Derive an independent sub-stream."""
        return CounterRng(int(self._key), label)

    def uniforms(self, start: int, count: int) -> np.ndarray:
        """``count`` uniforms in [0, 1) at counters start..start+count-1."""
        idx = np.arange(start, start + count, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = _mix(self._key + (idx + np.uint64(1)) * _GOLDEN)
        return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT

    def normals(self, start: int, count: int) -> np.ndarray:
        """Standard normals; draw k consumes uniform counters (2k, 2k+1)."""
        idx = np.arange(start, start + count, dtype=np.int64)
        u1 = self._uniform_at(2 * idx)
        u2 = self._uniform_at(2 * idx + 1)
        radius = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 in (0, 1], no log(0)
        return radius * np.cos(2.0 * np.pi * u2)

    def _uniform_at(self, counters: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            z = _mix(self._key + (counters.astype(np.uint64) + np.uint64(1)) * _GOLDEN)
        return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT
