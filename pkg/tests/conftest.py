"""
Shared fixtures: a twelve-POI city with three well separated districts.

District k holds POIs 4k..4k+3 about 200 m apart; districts are roughly
22 km from each other. Categories cycle through 0, 1, 2.
"""

import os
import sys

import numpy as np
import pytest

# Add the project root directory to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.geodata.pois import CheckinSequence, PoiIndex, PoiRecord
from src.geodata.regions import RegionMap
from src.recsys.model import InitSpec, init_model

ORIGIN = (40.75, -73.98)
DISTRICTS = 3
PER_DISTRICT = 4
POI_COUNT = DISTRICTS * PER_DISTRICT


def district_pois():
    records = []
    for poi_id in range(POI_COUNT):
        district, slot = divmod(poi_id, PER_DISTRICT)
        records.append(PoiRecord(poi_id, poi_id % 3,
                                 ORIGIN[0] + 0.2 * district + 0.002 * slot,
                                 ORIGIN[1] + 0.0015 * slot))
    return records


@pytest.fixture
def poi_records():
    return district_pois()


@pytest.fixture
def pois(poi_records):
    return PoiIndex(poi_records)


@pytest.fixture
def region_map(poi_records):
    assignment = {p.poi_id: p.poi_id // PER_DISTRICT for p in poi_records}
    centroids = tuple(
        (float(np.mean([p.lon for p in poi_records if assignment[p.poi_id] == r])),
         float(np.mean([p.lat for p in poi_records if assignment[p.poi_id] == r])))
        for r in range(DISTRICTS)
    )
    return RegionMap(DISTRICTS, assignment, centroids)


@pytest.fixture
def init_spec():
    return InitSpec(std=0.1, seed=3)


@pytest.fixture
def model(init_spec):
    return init_model(POI_COUNT, 8, init_spec)


@pytest.fixture
def prior_pool():
    """Anonymous sequences containing every POI twice, one district at a time."""
    pool = []
    for k in range(DISTRICTS):
        ids = list(range(PER_DISTRICT * k, PER_DISTRICT * (k + 1)))
        pool.append(CheckinSequence(None, tuple(ids)))
        pool.append(CheckinSequence(None, tuple(reversed(ids))))
    return pool


@pytest.fixture
def user_sequence():
    """A user living in the first two districts."""
    return CheckinSequence(0, (0, 1, 2, 4, 5, 1, 0, 2))
