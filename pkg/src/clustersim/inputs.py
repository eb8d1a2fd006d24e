"""Deterministic input generation and jitter hashing.

Everything timing- or data-related that looks random is derived from a
64-bit seed through pure integer arithmetic, so runs are reproducible
bit-for-bit on any host.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# LCG constants (Knuth's MMIX multiplier).
_LCG_A = 6364136223846793005
_LCG_C = 1442695040888963407


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def hash_u01(seed: int, *keys: int) -> float:
    """Deterministic uniform in [0, 1) from a seed and integer keys."""
    h = seed & _MASK64
    for k in keys:
        h = _splitmix64(h ^ (k & _MASK64))
    return (h >> 11) / float(1 << 53)


def jitter_cycles(base: int, fraction: float, seed: int, *keys: int) -> int:
    """Extra stall cycles in [0, fraction * base], hash-determined."""
    if base <= 0 or fraction <= 0.0:
        return 0
    return int(base * fraction * hash_u01(seed, *keys))


def lcg_words(seed: int, stream: int, count: int) -> np.ndarray:
    """`count` reproducible int32 words from stream `stream` of `seed`.

    Uses the closed form of the LCG recurrence so large arrays come out
    vectorized instead of element-by-element.
    """
    if count == 0:
        return np.zeros(0, dtype=np.int32)
    x0 = _splitmix64((seed & _MASK64) ^ _splitmix64(stream))
    a_pow = np.empty(count, dtype=np.uint64)
    a_pow[0] = 1
    if count > 1:
        np.multiply.accumulate(
            np.full(count - 1, _LCG_A, dtype=np.uint64), out=a_pow[1:])
    # x_n = a^n x0 + c * (a^(n-1) + ... + 1), all mod 2^64
    geom = np.zeros(count, dtype=np.uint64)
    if count > 1:
        np.add.accumulate(a_pow[:-1], out=geom[1:])
    x = a_pow * np.uint64(x0) + np.uint64(_LCG_C) * geom
    # top 32 bits have the best statistics
    return (x >> np.uint64(32)).astype(np.uint32).view(np.int32)
