# utils/seeding.py
"""Per-trial seed derivation.

Trial streams are seeded with a SplitMix64 finalizer applied to
``base_seed + GOLDEN * (index + 1)`` (mod 2**64). The function id is written
into every JSON result so a run can be replayed bit-for-bit.
"""
from __future__ import annotations

import numpy as np

SEED_MIX_ID = "splitmix64-v1"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# trial index reserved for the shared instance in --fixed-instance mode
FIXED_INSTANCE_INDEX = (1 << 32) - 1


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(base_seed: int, index: int) -> int:
    """Deterministic 64-bit seed for stream ``index`` under ``base_seed``."""
    return _finalize((int(base_seed) + _GOLDEN * (int(index) + 1)) & _MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
