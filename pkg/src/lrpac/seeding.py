"""Seed derivation for replications and trajectories.

Replication and trajectory seeds are derived from a master seed by a
SplitMix64-style finalizer::

    z = master ^ (0x9E3779B97F4A7C15 * (index + 1) mod 2**64)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    seed = z ^ (z >> 31)

Every step is a bijection on 64-bit words and the odd multiplier makes
index -> z injective, so seeds never collide for indices below 2**64.
Each seed then drives its own numpy PCG64 stream.
"""

import numpy as np

M64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def mix_seed(master: int, index: int) -> int:
    z = (master & M64) ^ ((GOLDEN * (index + 1)) & M64)
    z = ((z ^ (z >> 30)) * MIX1) & M64
    z = ((z ^ (z >> 27)) * MIX2) & M64
    return z ^ (z >> 31)


def derive_seeds(master: int, n: int) -> np.ndarray:
    """Vectorized ``mix_seed(master, i)`` for i in range(n), as uint64."""
    idx = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(master & M64) ^ (np.uint64(GOLDEN) * idx)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))
