#!/usr/bin/env python3
"""
Visited-Region Detection

Scores each region by how far its POI embeddings drifted from the shared
initial distribution and marks the regions before the elbow as visited.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.config.defaults import REGION_NOISE_FLOOR, VARIANCE_FLOOR

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegionScore:
    """KL divergence from the initial distribution to a region's embeddings."""

    region_id: int
    divergence: float
    floored: bool = False


def gaussian_kl(mean0, var0, mean1, var1):
    """KL(N(mean0, var0) || N(mean1, var1)) for univariate Gaussians."""
    return 0.5 * (np.log(var1 / var0) + (var0 + (mean0 - mean1) ** 2) / var1 - 1.0)


def region_scores(params, init_spec, region_map):
    """
    Divergence of every region's embeddings from the initial distribution.

    A Gaussian is fitted to the pooled embedding entries of the region's
    POIs; d_r is the closed-form KL from the initial distribution to it.

    Returns:
        list: RegionScore per region, ordered by region id
    """
    init_var = init_spec.std ** 2
    scores = []
    for region, members in enumerate(region_map.members()):
        entries = params.embeddings[members].ravel() if members else np.zeros(0)
        floored = len(members) < 2
        mean = float(entries.mean()) if entries.size else init_spec.mean
        var = float(entries.var()) if entries.size else init_var
        if var < VARIANCE_FLOOR:
            var = VARIANCE_FLOOR
            floored = True
        if floored:
            logger.warning("region %d has %d POIs; variance clamped at %g", region, len(members), VARIANCE_FLOOR)
        d_r = float(gaussian_kl(init_spec.mean, init_var, mean, var))
        scores.append(RegionScore(region, max(d_r, 0.0), floored))
    return scores


def elbow_cut(values, noise_floor=REGION_NOISE_FLOOR):
    """
    Number of leading entries of a descending list to mark.

    The cut is placed at the largest drop between consecutive values, with a
    terminal 0 appended so that every region may be marked. Values below
    ``noise_floor`` are never marked, except that at least one always is.
    """
    extended = list(values) + [0.0]
    gaps = [extended[i] - extended[i + 1] for i in range(len(values))]
    cut = int(np.argmax(gaps)) + 1
    kept = sum(1 for v in values[:cut] if v >= noise_floor)
    return max(kept, 1)


def detect_regions(params, init_spec, region_map, noise_floor=REGION_NOISE_FLOOR):
    """
    Regions the model's owner most likely visited.

    Args:
        params (ModelParams): Victim (or shadow) model
        init_spec (InitSpec): Known initial distribution
        region_map (RegionMap): Regions covering all POIs
        noise_floor (float): Divergence below which a region is never marked

    Returns:
        frozenset: Marked region ids (at least one)
    """
    scores = sorted(region_scores(params, init_spec, region_map), key=lambda s: (-s.divergence, s.region_id))
    cut = elbow_cut([s.divergence for s in scores], noise_floor)
    return frozenset(s.region_id for s in scores[:cut])
