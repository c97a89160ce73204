"""Counter-addressed SplitMix64 streams.

Draw ``n`` of stream ``key`` is ``mix(key + (n + 1) * GAMMA)``, i.e. the n-th
output of a SplitMix64 generator seeded with ``key``. Any draw can be computed
independently of the others, so generation order never changes the values.

Stream keys are themselves SplitMix64 outputs: ``stream_key(seed, stream)`` is
draw ``stream`` of the generator seeded with ``seed``.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 output finalizer over a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64).copy()
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


def _state(key: int, counters: np.ndarray) -> np.ndarray:
    c = np.asarray(counters, dtype=np.uint64) + np.uint64(1)
    return np.uint64(key & _MASK) + c * np.uint64(GAMMA)


def stream_key(seed: int, stream: int) -> int:
    state = ((seed & _MASK) + ((stream + 1) * GAMMA)) & _MASK
    return int(mix64(np.array([state], dtype=np.uint64))[0])


def bits(key: int, counters) -> np.ndarray:
    with np.errstate(over="ignore"):
        return mix64(_state(key, np.atleast_1d(counters)))


def uniform(key: int, counters) -> np.ndarray:
    """Doubles in the open interval (0, 1) from the top 53 bits of each draw."""
    b = bits(key, counters) >> np.uint64(11)
    return (b.astype(np.float64) + 0.5) * 2.0 ** -53


def normal(key: int, counters) -> np.ndarray:
    """Standard normals by Box-Muller (cosine branch); normal ``c`` consumes draws 2c, 2c+1."""
    c = np.asarray(counters, dtype=np.uint64)
    u1 = uniform(key, c * np.uint64(2))
    u2 = uniform(key, c * np.uint64(2) + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
