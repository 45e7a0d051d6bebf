"""Seeded generators.

Every random draw in the package goes through PCG64 keyed by a tuple of
non-negative integers, so independent streams (data, init, one client's
batches in one round) never perturb each other.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) & MASK64 for k in key])))


def derive_seed(seed: int, *key: int) -> int:
    """A 64-bit seed for a named sub-stream of ``seed``."""
    ss = np.random.SeedSequence([int(seed) & MASK64, *[int(k) & MASK64 for k in key]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
