#!/usr/bin/env python3
"""
Synthetic Check-in Worlds

Plants regions on a city-sized plane, scatters POIs around them and lets
every user random-walk among favorite POIs of a few preferred regions, so
the visited sets and regions of every user are known exactly.
"""

import logging
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta, timezone
from typing import Dict, Tuple

import numpy as np
import pandas as pd

from src.config.defaults import DEFAULT_SYNTHETIC, MAX_SEQ_LEN, SHADOW_MAX_STEP_KM
from src.geodata.dataset import CSV_COLUMNS, CheckinDataset, save_json
from src.geodata.geo import haversine_km_many
from src.geodata.pois import CheckinSequence, PoiRecord
from src.utils.errors import InputError

logger = logging.getLogger(__name__)

KM_PER_DEGREE = 111.195
SESSION_SWITCH_PROBABILITY = 0.05
EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class SyntheticWorldSpec:
    """
    Parameters of a synthetic world.

    Attributes:
        users (int): Number of users (one sequence each)
        pois (int): Number of POIs
        regions (int): Number of planted regions
        categories (int): Number of POI categories
        concentration (float): Dirichlet concentration of region affinities
        max_regions_per_user (int): Upper bound on preferred regions
        favorites_per_region (int): POIs a user frequents in each region
        mean_length (float): Mean sequence length (Poisson)
        min_length (int): Shortest sequence generated
        region_spread_km (float): Standard deviation of POIs around a center
        city_span_km (float): Side of the square holding region centers
        origin (list): (lat, lon) of the city center
        seed (int): Generation seed
    """

    users: int = DEFAULT_SYNTHETIC['users']
    pois: int = DEFAULT_SYNTHETIC['pois']
    regions: int = DEFAULT_SYNTHETIC['regions']
    categories: int = DEFAULT_SYNTHETIC['categories']
    concentration: float = DEFAULT_SYNTHETIC['concentration']
    max_regions_per_user: int = DEFAULT_SYNTHETIC['max_regions_per_user']
    favorites_per_region: int = DEFAULT_SYNTHETIC['favorites_per_region']
    mean_length: float = DEFAULT_SYNTHETIC['mean_length']
    min_length: int = DEFAULT_SYNTHETIC['min_length']
    region_spread_km: float = DEFAULT_SYNTHETIC['region_spread_km']
    city_span_km: float = DEFAULT_SYNTHETIC['city_span_km']
    origin: Tuple[float, float] = tuple(DEFAULT_SYNTHETIC['origin'])
    seed: int = DEFAULT_SYNTHETIC['seed']

    def __post_init__(self):
        counts = (self.users, self.pois, self.regions, self.categories, self.max_regions_per_user,
                  self.favorites_per_region, self.min_length)
        if any(c < 1 for c in counts):
            raise InputError(f"synthetic world counts must be positive: {self}")
        if self.regions > self.pois:
            raise InputError(f"{self.regions} regions cannot hold {self.pois} POIs")
        if self.concentration <= 0 or self.mean_length <= 0 or self.region_spread_km <= 0:
            raise InputError("concentration, mean length and spread must be positive")
        if self.min_length > MAX_SEQ_LEN:
            raise InputError(f"min_length exceeds {MAX_SEQ_LEN}")

    @classmethod
    def from_dict(cls, data):
        merged = dict(DEFAULT_SYNTHETIC, **data)
        merged['origin'] = tuple(merged['origin'])
        return cls(**merged)

    def to_dict(self):
        data = asdict(self)
        data['origin'] = list(self.origin)
        return data


@dataclass(frozen=True)
class SyntheticWorld:
    """Generated data plus the planted ground truth."""

    dataset: CheckinDataset
    planted_region: Tuple[int, ...]
    user_regions: Dict[int, Tuple[int, ...]]
    visited: Dict[int, Tuple[int, ...]]

    def truth(self):
        return {
            'poi_region': list(self.planted_region),
            'users': {str(u): {'regions': list(self.user_regions[u]), 'visited': list(self.visited[u])}
                      for u in sorted(self.user_regions)},
        }


def _offset(origin, north_km, east_km):
    lat0, lon0 = origin
    lat = lat0 + north_km / KM_PER_DEGREE
    lon = lon0 + east_km / (KM_PER_DEGREE * np.cos(np.radians(lat0)))
    return float(np.clip(lat, -90.0, 90.0)), float((lon + 180.0) % 360.0 - 180.0)


def _walk(rng, favorites, affinity, region_ids, lats, lons, length):
    region = region_ids[rng.choice(len(region_ids), p=affinity)]
    current = favorites[region][rng.integers(len(favorites[region]))]
    walk = [current]
    while len(walk) < length:
        if len(region_ids) > 1 and rng.random() < SESSION_SWITCH_PROBABILITY:
            region = region_ids[rng.choice(len(region_ids), p=affinity)]
            current = favorites[region][rng.integers(len(favorites[region]))]
        else:
            pool = np.asarray(favorites[region])
            distances = haversine_km_many((lats[current], lons[current]), lats[pool], lons[pool])
            near = pool[distances < SHADOW_MAX_STEP_KM]
            current = int(near[rng.integers(len(near))])
        walk.append(int(current))
    return walk


def gen_synthetic(spec):
    """
    Generate a synthetic world.

    Regions are planted uniformly over the city square and POIs assigned to
    them round-robin; each user prefers between 1 and
    ``max_regions_per_user`` regions with Dirichlet weights and walks with
    steps under 5 km among its favorites, switching region only between
    sessions.

    Args:
        spec (SyntheticWorldSpec): World parameters

    Returns:
        SyntheticWorld: Dataset and planted truth
    """
    rng = np.random.default_rng(spec.seed)
    half = spec.city_span_km / 2.0
    centers = rng.uniform(-half, half, size=(spec.regions, 2))

    planted = [i % spec.regions for i in range(spec.pois)]
    pois = []
    for poi_id, region in enumerate(planted):
        north, east = centers[region] + rng.normal(0.0, spec.region_spread_km, size=2)
        lat, lon = _offset(spec.origin, north, east)
        pois.append(PoiRecord(poi_id, int(rng.integers(spec.categories)), lat, lon))
    lats = np.array([p.lat for p in pois])
    lons = np.array([p.lon for p in pois])
    members = [[p for p, r in enumerate(planted) if r == region] for region in range(spec.regions)]

    sequences = []
    user_regions = {}
    visited = {}
    for user in range(spec.users):
        count = 1 + int(rng.integers(min(spec.max_regions_per_user, spec.regions)))
        region_ids = sorted(int(r) for r in rng.choice(spec.regions, size=count, replace=False))
        affinity = rng.dirichlet(np.full(count, spec.concentration))
        favorites = {}
        for region in region_ids:
            size = min(spec.favorites_per_region, len(members[region]))
            favorites[region] = sorted(int(p) for p in rng.choice(members[region], size=size, replace=False))
        length = int(np.clip(rng.poisson(spec.mean_length), spec.min_length, MAX_SEQ_LEN))
        walk = _walk(rng, favorites, affinity, region_ids, lats, lons, length)
        sequences.append(CheckinSequence(user, tuple(walk)))
        visited[user] = tuple(sorted(set(walk)))
        user_regions[user] = tuple(sorted({planted[p] for p in walk}))

    logger.info("generated %d users over %d POIs in %d regions (seed %d)",
                spec.users, spec.pois, spec.regions, spec.seed)
    return SyntheticWorld(CheckinDataset(tuple(pois), tuple(sequences)), tuple(planted), user_regions, visited)


def write_checkins_csv(dataset, path):
    """
    Write a dataset in the check-in CSV format.

    Identifiers are zero-padded so that ingestion, which orders raw ids as
    strings, restores the same numbering. Check-ins are one hour apart.
    """
    width = len(str(max(len(dataset.pois), len(dataset.sequences), 1)))
    rows = []
    for seq in dataset.sequences:
        for step, poi_id in enumerate(seq.poi_ids):
            poi = dataset.pois[poi_id]
            rows.append((f"u{seq.user_id:0{width}d}", f"p{poi_id:0{width}d}", f"c{poi.category_id:0{width}d}",
                         poi.lat, poi.lon, (EPOCH + timedelta(hours=step)).strftime("%Y-%m-%dT%H:%M:%SZ")))
    frame = pd.DataFrame(rows, columns=list(CSV_COLUMNS))
    frame.to_csv(path, index=False, float_format="%.8f", lineterminator="\n")


def write_synthetic(world, csv_path, truth_path=None):
    """Write the world's check-ins and, optionally, its planted truth as JSON."""
    write_checkins_csv(world.dataset, csv_path)
    if truth_path:
        save_json(truth_path, world.truth())
