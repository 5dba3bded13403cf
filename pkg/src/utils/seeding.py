#!/usr/bin/env python3
"""
Seed Streams

Independent, reproducible random streams derived from a run seed. Every
stage and user gets its own stream so results do not depend on execution
order or worker count.
"""

import numpy as np

# Stage tags mixed into derived seeds
STAGE_CODES = {
    "world": 1,
    "split": 2,
    "train": 3,
    "collab": 4,
    "defense": 5,
    "attack": 6,
    "eval": 7,
    "sensitive": 8,
    "public": 9,
    "shadow": 10,
    "probe": 11,
}


def derive_seed(*keys):
    """
    Derive a 32-bit seed from a tuple of integer keys.

    Args:
        *keys: Integers (run seed, stage code, user id, ...)

    Returns:
        int: Seed usable with numpy.random.default_rng
    """
    sequence = np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys])
    return int(sequence.generate_state(1)[0])


def stage_seed(run_seed, stage, *keys):
    """Seed for ``stage`` of ``run_seed``, keyed by user or round ids."""
    return derive_seed(run_seed, STAGE_CODES[stage], *keys)
