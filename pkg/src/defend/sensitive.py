#!/usr/bin/env python3
"""
Sensitive POIs

Picks the POIs a user wants hidden. Rarely visited places are the most
revealing, so POIs are drawn from the user's visited set with probability
inversely proportional to their global check-in frequency.
"""

import logging
from dataclasses import dataclass
from typing import FrozenSet, Optional

import numpy as np

from src.utils.errors import InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensitivePoiSet:
    """The POIs one user wants to protect; ``truncated`` marks G > |visited|."""

    user_id: Optional[int]
    poi_ids: FrozenSet[int]
    truncated: bool = False

    def __len__(self):
        return len(self.poi_ids)

    def to_dict(self):
        return {'user_id': self.user_id, 'poi_ids': sorted(self.poi_ids), 'truncated': self.truncated}


def global_frequency(sequences, poi_count):
    """Check-in count of every POI over ``sequences``."""
    counts = np.zeros(poi_count, dtype=np.int64)
    for seq in sequences:
        np.add.at(counts, np.asarray(seq.poi_ids, dtype=np.int64), 1)
    return counts


def select_sensitive(visited_pois, frequency, g, seed, user_id=None):
    """
    Sample ``g`` sensitive POIs from the visited set, p proportional to 1 / frequency.

    Args:
        visited_pois (iterable): The user's visited POI ids
        frequency (array-like): Global check-in count indexed by POI id
        g (int): Number of POIs wanted
        seed (int): Sampling seed
        user_id (int, optional): Owner recorded on the result

    Returns:
        SensitivePoiSet: min(g, |visited|) POIs
    """
    if g < 0:
        raise InputError(f"G must be >= 0, got {g}")
    visited = np.array(sorted(set(visited_pois)), dtype=np.int64)
    if g == 0 or visited.size == 0:
        return SensitivePoiSet(user_id, frozenset(), g > visited.size)
    freq = np.asarray(frequency, dtype=float)[visited]
    if np.any(freq <= 0):
        raise InputError("global frequency must be positive for every visited POI")
    if g >= visited.size:
        if g > visited.size:
            logger.warning("user %s: G=%d exceeds %d visited POIs; all are sensitive", user_id, g, visited.size)
        return SensitivePoiSet(user_id, frozenset(visited.tolist()), g > visited.size)
    weights = 1.0 / freq
    rng = np.random.default_rng(seed)
    chosen = rng.choice(visited, size=g, replace=False, p=weights / weights.sum())
    return SensitivePoiSet(user_id, frozenset(int(p) for p in chosen))


def explicit_sensitive(visited_pois, poi_ids, user_id=None):
    """
    Sensitive set customized by the user.

    POIs the user never visited are dropped with a warning; hiding them is
    meaningless.
    """
    visited = set(visited_pois)
    wanted = set(int(p) for p in poi_ids)
    kept = wanted & visited
    if kept != wanted:
        logger.warning("user %s: %d configured sensitive POIs were never visited", user_id, len(wanted - kept))
    return SensitivePoiSet(user_id, frozenset(kept))
