#!/usr/bin/env python3
"""
Probe Sequences

One fixed short sequence per POI through which the defender asks its own
attack model about that POI: two category-consistent hops of context
within 5 km, ending at the POI.
"""

import numpy as np

from src.config.defaults import SHADOW_MAX_STEP_KM
from src.geodata.pois import CheckinSequence
from src.utils.seeding import derive_seed


def _hop(pois, anchor, category, rng, exclude):
    near = [int(p) for p in pois.within(anchor, SHADOW_MAX_STEP_KM) if p not in exclude]
    if not near:
        return None
    same = [p for p in near if pois.category_of(p) == category]
    pool = same or near
    return pool[rng.integers(len(pool))]


def build_probe_sequences(pois, seed):
    """
    Build the probe sequence of every POI.

    Hops prefer POIs of the target's category and fall back to any POI in
    range; a POI with no neighbor in range is probed alone.

    Args:
        pois (PoiIndex): POI universe
        seed (int): Base seed, combined with the POI id

    Returns:
        dict: poi_id -> CheckinSequence with the POI last
    """
    probes = {}
    for poi in range(pois.poi_count):
        rng = np.random.default_rng(derive_seed(seed, poi))
        category = pois.category_of(poi)
        chain = [poi]
        for _ in range(2):
            nxt = _hop(pois, chain[0], category, rng, set(chain))
            if nxt is None:
                break
            chain.insert(0, nxt)
        probes[poi] = CheckinSequence(None, tuple(chain))
    return probes
