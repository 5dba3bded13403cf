#!/usr/bin/env python3
"""
POIs and Trajectories

This module defines the POI universe and the check-in/category sequences
that every other package consumes, plus a lookup index with cached
geographic neighborhoods.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.config.defaults import MAX_SEQ_LEN, SHADOW_MAX_STEP_KM
from src.geodata.geo import haversine_km_many, validate_coordinates
from src.utils.errors import InputError


@dataclass(frozen=True)
class PoiRecord:
    """A venue with a category tag and coordinates."""

    poi_id: int
    category_id: int
    lat: float
    lon: float

    def __post_init__(self):
        if self.poi_id < 0 or self.category_id < 0:
            raise InputError(f"negative id in {self}")
        validate_coordinates(self.lat, self.lon)

    @property
    def coordinates(self):
        return (self.lat, self.lon)


@dataclass(frozen=True)
class CheckinSequence:
    """
    A chronologically ordered trajectory.

    ``user_id`` is None for anonymous sequences (attacker prior, reference
    dataset, fabricated shadow sequences).
    """

    user_id: Optional[int]
    poi_ids: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "poi_ids", tuple(int(p) for p in self.poi_ids))
        if not 1 <= len(self.poi_ids) <= MAX_SEQ_LEN:
            raise InputError(f"sequence length {len(self.poi_ids)} outside [1, {MAX_SEQ_LEN}]")

    def __len__(self):
        return len(self.poi_ids)

    @property
    def length(self):
        return len(self.poi_ids)

    def anonymous(self):
        return CheckinSequence(None, self.poi_ids)


@dataclass(frozen=True)
class CategorySequence:
    """A check-in sequence with every POI replaced by its category."""

    category_ids: Tuple[int, ...]

    def __len__(self):
        return len(self.category_ids)


class PoiIndex:
    """
    Read-only lookup over the POI universe.

    Holds coordinate and category arrays aligned with ``poi_id`` and caches
    per-POI distance rows so repeated neighborhood queries stay cheap.

    Args:
        pois (list): PoiRecord objects whose ids are exactly 0..n-1
    """

    def __init__(self, pois):
        pois = sorted(pois, key=lambda p: p.poi_id)
        if [p.poi_id for p in pois] != list(range(len(pois))):
            raise InputError("POI ids must be contiguous from 0")
        self.pois = tuple(pois)
        self.lats = np.array([p.lat for p in pois], dtype=float)
        self.lons = np.array([p.lon for p in pois], dtype=float)
        self.categories = np.array([p.category_id for p in pois], dtype=np.int64)
        self._by_category = {}
        for p in pois:
            self._by_category.setdefault(p.category_id, []).append(p.poi_id)
        self._distance_rows = {}

    def __len__(self):
        return len(self.pois)

    @property
    def poi_count(self):
        return len(self.pois)

    def category_of(self, poi_id):
        return int(self.categories[poi_id])

    def pois_in_category(self, category_id):
        """Return the sorted POI ids tagged with ``category_id``."""
        return self._by_category.get(category_id, [])

    def distances_from(self, poi_id):
        """
        Distances in kilometers from ``poi_id`` to every POI.

        Returns:
            numpy.ndarray: Read-only row of length ``poi_count``
        """
        row = self._distance_rows.get(poi_id)
        if row is None:
            row = haversine_km_many((self.lats[poi_id], self.lons[poi_id]), self.lats, self.lons)
            row.setflags(write=False)
            self._distance_rows[poi_id] = row
        return row

    def within(self, poi_id, radius_km=SHADOW_MAX_STEP_KM):
        """POI ids strictly closer than ``radius_km`` to ``poi_id`` (itself included)."""
        return np.flatnonzero(self.distances_from(poi_id) < radius_km)

    def check_sequence(self, sequence):
        """Raise InputError if any POI in ``sequence`` is unknown."""
        for p in sequence.poi_ids:
            if not 0 <= p < len(self.pois):
                raise InputError(f"unknown POI id {p}")


def to_category_sequence(sequence, pois):
    """
    Replace every POI of a sequence by its category tag.

    Args:
        sequence (CheckinSequence): Source trajectory
        pois (PoiIndex): POI universe

    Returns:
        CategorySequence: Same length as ``sequence``
    """
    pois.check_sequence(sequence)
    return CategorySequence(tuple(pois.category_of(p) for p in sequence.poi_ids))
