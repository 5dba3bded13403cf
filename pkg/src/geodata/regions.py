#!/usr/bin/env python3
"""
Region Clustering

Partitions the POI universe into k geographic regions with k-means on raw
(lon, lat) degrees.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from sklearn.cluster import KMeans

from src.config.defaults import KMEANS_MAX_ITER
from src.utils.errors import InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegionMap:
    """
    Assignment of every POI to exactly one region.

    Attributes:
        k (int): Number of regions
        assignment (dict): poi_id -> region_id in [0, k)
        centroids (tuple): k (lon, lat) pairs
    """

    k: int
    assignment: Dict[int, int]
    centroids: Tuple[Tuple[float, float], ...]

    def region_of(self, poi_id):
        return self.assignment[poi_id]

    def pois_in(self, region_id):
        """Sorted POI ids assigned to ``region_id``."""
        return sorted(p for p, r in self.assignment.items() if r == region_id)

    def members(self):
        """List of POI id lists, indexed by region."""
        groups = [[] for _ in range(self.k)]
        for p in sorted(self.assignment):
            groups[self.assignment[p]].append(p)
        return groups

    def regions_of(self, poi_ids):
        return {self.assignment[p] for p in poi_ids}

    def to_dict(self):
        return {
            'k': self.k,
            'assignment': [[p, self.assignment[p]] for p in sorted(self.assignment)],
            'centroids': [list(c) for c in self.centroids],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            k=int(data['k']),
            assignment={int(p): int(r) for p, r in data['assignment']},
            centroids=tuple((float(c[0]), float(c[1])) for c in data['centroids']),
        )


def cluster_regions(pois, k, seed):
    """
    Cluster POIs into ``k`` regions.

    Uses k-means++ seeding and Lloyd iterations until assignments stop
    changing or KMEANS_MAX_ITER iterations elapse.

    Args:
        pois (list): PoiRecord objects
        k (int): Number of regions
        seed (int): Seed for k-means++ initialization

    Returns:
        RegionMap: Deterministic for a given seed
    """
    if k < 1:
        raise InputError(f"region count must be >= 1, got {k}")
    if len(pois) < k:
        raise InputError(f"cannot form {k} regions from {len(pois)} POIs")

    ids = [p.poi_id for p in pois]
    coords = np.array([[p.lon, p.lat] for p in pois], dtype=float)
    if k == 1:
        return RegionMap(1, {p: 0 for p in ids}, (tuple(coords.mean(axis=0)),))

    model = KMeans(n_clusters=k, init="k-means++", n_init=10, max_iter=KMEANS_MAX_ITER,
                   tol=0.0, random_state=seed)
    labels = model.fit_predict(coords)

    # Relabel regions by first appearance in POI order so ids are stable
    order = {}
    for label in labels:
        order.setdefault(int(label), len(order))
    for label in range(k):
        order.setdefault(label, len(order))
    centroids = [None] * k
    for label, region in order.items():
        centroids[region] = (float(model.cluster_centers_[label][0]), float(model.cluster_centers_[label][1]))
    assignment = {pid: order[int(label)] for pid, label in zip(ids, labels)}
    logger.debug("clustered %d POIs into %d regions (%d iterations)", len(ids), k, model.n_iter_)
    return RegionMap(k, assignment, tuple(centroids))
