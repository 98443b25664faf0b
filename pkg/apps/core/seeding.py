# apps/core/seeding.py
"""
Seed derivation.

All randomness goes through Philox, numpy's counter-based bit generator, keyed
by a SeedSequence built from an integer seed plus a tuple of stream keys.
Streams with different keys are statistically independent, so the instance,
the scenarios and the initial points of a run never share random numbers, and
a scenario can be regenerated without replaying the ones before it.
"""
from __future__ import annotations

import numpy as np

# stream tags
STREAM_INSTANCE = 0
STREAM_SCENARIOS = 1
STREAM_INITIAL_POINT = 2


def derive_seed(master_seed: int, *keys: int) -> int:
    """Hash (master_seed, *keys) into a 63-bit integer seed."""
    ss = np.random.SeedSequence([int(master_seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return np.random.Generator(np.random.Philox(ss))
