"""splitmix64-based deterministic random streams.

All randomness in the toolkit (generators, random voxel sampling) goes
through these helpers so results are reproducible across platforms.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """One splitmix64 step applied to x (advance by the golden constant, then finalize)."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized mix64 over a uint64 array."""
    z = x.astype(np.uint64, copy=True)
    z += np.uint64(GOLDEN)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MUL1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MUL2)
    z ^= z >> np.uint64(31)
    return z


def stream(seed: int, n: int) -> np.ndarray:
    """First n outputs of the splitmix64 sequence seeded with `seed` (uint64 array)."""
    idx = np.arange(n, dtype=np.uint64)
    base = np.uint64(seed & MASK64)
    return mix64_array(base + idx * np.uint64(GOLDEN))


def to_unit(u: np.ndarray) -> np.ndarray:
    """Map uint64 samples to float64 in [0, 1)."""
    return (u >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def path_hash(seed: int, path: tuple[int, ...]) -> int:
    """Per-node hash: fold octant digits into the seed with mix64 steps."""
    key = seed & MASK64
    for octant in path:
        key = mix64((key * 8 + octant + 1) & MASK64)
    return key
