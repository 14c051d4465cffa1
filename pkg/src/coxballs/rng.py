"""Counter-based random streams.

Every replicate gets its own Philox stream keyed by ``(seed, index, tag)``,
so results do not depend on thread count or scheduling order.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream(seed: int, index: int = 0, tag: int = 0) -> np.random.Generator:
    """Independent generator for replicate ``index`` of a run seeded with ``seed``."""
    if seed < 0 or index < 0 or tag < 0:
        raise ValueError("seed, index and tag must be nonnegative")
    k0 = splitmix64(seed & _MASK)
    k1 = splitmix64(k0 ^ (tag & _MASK))
    bitgen = np.random.Philox(key=[k0, k1], counter=[0, 0, index & _MASK, index >> 64])
    return np.random.Generator(bitgen)
