#!/usr/bin/env python3
"""
Shadow Sequences

Anonymous trajectories that contain a target POI, used to probe a victim
model. Sequences come from the attacker's prior pool when possible and are
otherwise fabricated by filling an anonymous category sequence with POIs of
the right categories, keeping consecutive POIs closer than 5 km.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.config.defaults import FABRICATION_ATTEMPTS, MAX_SEQ_LEN, SHADOW_MAX_STEP_KM
from src.geodata.pois import CheckinSequence, to_category_sequence
from src.utils.errors import FabricationError, InputError
from src.utils.seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShadowSequenceSet:
    """V sequences containing ``poi_id``; ``fabricated`` of them were built."""

    poi_id: int
    sequences: Tuple[CheckinSequence, ...]
    fabricated: int = 0

    @property
    def size(self):
        return len(self.sequences)

    def ending_at_target(self, window):
        """
        The same set with every sequence cut to at most ``window`` POIs
        ending at the first visit of the target.
        """
        if window < 1:
            raise InputError(f"window must be >= 1, got {window}")
        cut = []
        for seq in self.sequences:
            end = seq.poi_ids.index(self.poi_id) + 1
            cut.append(CheckinSequence(seq.user_id, seq.poi_ids[max(0, end - window):end]))
        return ShadowSequenceSet(self.poi_id, tuple(cut), self.fabricated)


def _sample_near(pois, category, anchor, rng, poi_id, slot):
    candidates = pois.pois_in_category(category)
    if not candidates:
        raise FabricationError(poi_id, slot, f"has no POI of category {category}")
    distances = pois.distances_from(anchor)
    for _ in range(FABRICATION_ATTEMPTS):
        choice = candidates[rng.integers(len(candidates))]
        if distances[choice] < SHADOW_MAX_STEP_KM:
            return choice
    raise FabricationError(poi_id, slot, f"found no category-{category} POI within "
                                         f"{SHADOW_MAX_STEP_KM} km of POI {anchor}")


def fabricate_sequence(template, poi_id, pois, rng):
    """
    Assign POIs to a category sequence around ``poi_id``.

    One slot matching the target's category holds the target; every other
    slot gets a uniformly sampled POI of its category, accepted only if it
    lies within 5 km of its already-filled neighbor (rejection sampling).

    Raises:
        FabricationError: Naming the slot that could not be filled
    """
    categories = template.category_ids[:MAX_SEQ_LEN]
    target_category = pois.category_of(poi_id)
    slots = [i for i, c in enumerate(categories) if c == target_category]
    if not slots:
        raise FabricationError(poi_id, -1, f"template has no category-{target_category} slot")
    slot = slots[rng.integers(len(slots))]

    ids = [None] * len(categories)
    ids[slot] = poi_id
    for j in range(slot + 1, len(categories)):
        ids[j] = _sample_near(pois, categories[j], ids[j - 1], rng, poi_id, j)
    for j in range(slot - 1, -1, -1):
        ids[j] = _sample_near(pois, categories[j], ids[j + 1], rng, poi_id, j)
    return CheckinSequence(None, tuple(ids))


def collect_shadow_sequences(prior_pool, category_pool, poi_id, v, pois, seed):
    """
    Gather V shadow sequences for ``poi_id``.

    Args:
        prior_pool (list): Anonymous CheckinSequences known to the attacker
        category_pool (list): Anonymous CategorySequences for fabrication
        poi_id (int): Target POI
        v (int): Number of sequences wanted
        pois (PoiIndex): POI universe
        seed (int): Sampling seed

    Returns:
        ShadowSequenceSet: Exactly ``v`` sequences, each containing ``poi_id``
    """
    if v < 1:
        raise InputError(f"V must be >= 1, got {v}")
    rng = np.random.default_rng(seed)
    containing = [s for s in prior_pool if poi_id in s.poi_ids]
    if len(containing) >= v:
        picked = sorted(rng.choice(len(containing), size=v, replace=False))
        return ShadowSequenceSet(poi_id, tuple(containing[i] for i in picked), 0)

    target_category = pois.category_of(poi_id)
    templates = [c for c in category_pool if target_category in c.category_ids]
    if not templates:
        raise FabricationError(poi_id, -1, f"no category sequence contains category {target_category}")

    sequences = list(containing)
    needed = v - len(containing)
    order = rng.permutation(len(templates))
    max_attempts = 2 * len(templates) + needed
    attempts = 0
    last_error = None
    # Templates are cycled; a reused template yields a different fabrication
    while needed and attempts < max_attempts:
        template = templates[order[attempts % len(order)]]
        attempts += 1
        try:
            sequences.append(fabricate_sequence(template, poi_id, pois, rng))
            needed -= 1
        except FabricationError as e:
            last_error = e
    if needed:
        raise last_error
    return ShadowSequenceSet(poi_id, tuple(sequences), v - len(containing))


class ShadowSequenceBank:
    """
    Per-POI cache of shadow-sequence sets.

    Sets depend only on the attacker's pools and the POI, so they are shared
    across every attacked user.

    Args:
        prior_pool (list): Anonymous CheckinSequences
        pois (PoiIndex): POI universe
        seed (int): Base seed, combined with the POI id
    """

    def __init__(self, prior_pool, pois, seed):
        self.prior_pool = tuple(prior_pool)
        self.category_pool = tuple(to_category_sequence(s, pois) for s in self.prior_pool)
        self.pois = pois
        self.seed = seed
        self._cache = {}

    def without(self, sequence):
        """A bank over the same pools minus every copy of ``sequence``."""
        kept = [s for s in self.prior_pool if s.poi_ids != sequence.poi_ids]
        return ShadowSequenceBank(kept, self.pois, self.seed)

    def get(self, poi_id, v):
        """Shadow sequences for ``poi_id``; a failed fabrication is cached and re-raised."""
        key = (poi_id, v)
        if key not in self._cache:
            try:
                self._cache[key] = collect_shadow_sequences(self.prior_pool, self.category_pool, poi_id, v,
                                                            self.pois, derive_seed(self.seed, poi_id))
            except FabricationError as e:
                self._cache[key] = e
        found = self._cache[key]
        if isinstance(found, FabricationError):
            raise found
        return found
