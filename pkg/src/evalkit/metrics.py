#!/usr/bin/env python3
"""
Evaluation Metrics

Leave-one-out hit ratio over geographic candidates, attack F1 with the
region-zero rule, and F1 restricted to sensitive POIs.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.config.defaults import CANDIDATE_COUNT, DEFAULT_TOP_K, MAX_SEQ_LEN
from src.recsys.model import forward
from src.utils.errors import InputError

logger = logging.getLogger(__name__)

PER_REGION = "per_region"
GLOBAL = "global"
F1_MODES = (PER_REGION, GLOBAL)


@dataclass(frozen=True)
class HitResult:
    """One leave-one-out ranking outcome."""

    hit: int
    rank: int
    candidates: int
    shortfall: bool = False


def candidate_set(ground_truth, history, pois, count=CANDIDATE_COUNT):
    """
    The ground truth plus its ``count`` nearest POIs outside ``history``.

    Returns:
        tuple: (candidate ids with the ground truth first, shortfall flag)
    """
    distances = pois.distances_from(ground_truth)
    excluded = set(history) | {ground_truth}
    order = np.argsort(distances, kind="stable")
    nearest = [int(p) for p in order if int(p) not in excluded][:count]
    shortfall = len(nearest) < count
    if shortfall:
        logger.warning("POI %d has only %d unvisited candidates (wanted %d)", ground_truth, len(nearest), count)
    return [ground_truth] + nearest, shortfall


def hit_at_k(params, prefix, ground_truth, history, pois, k=DEFAULT_TOP_K, count=CANDIDATE_COUNT):
    """
    Rank the ground truth among its geographic candidates.

    The rank is the number of candidates scored strictly higher than the
    ground truth; a hit means rank < k.

    Args:
        params (ModelParams): Recommender
        prefix (list): POI ids the prediction is made from
        ground_truth (int): Held-out POI
        history (iterable): POIs the user has visited (never candidates)
        pois (PoiIndex): POI universe
        k (int): Cut-off
        count (int): Number of nearest unvisited candidates

    Returns:
        HitResult: Outcome for this instance
    """
    candidates, shortfall = candidate_set(ground_truth, history, pois, count)
    scores = forward(params, list(prefix)[-MAX_SEQ_LEN:]).scores[candidates]
    rank = int(np.sum(scores[1:] > scores[0]))
    return HitResult(int(rank < k), rank, len(candidates), shortfall)


def hr_at_k(models, users, pois, k=DEFAULT_TOP_K, count=CANDIDATE_COUNT):
    """
    Mean hit ratio over users.

    Each user predicts its test POI from its training sequence followed by
    its validation POI.

    Args:
        models (dict): user_id -> ModelParams
        users (list): UserSplit objects

    Returns:
        tuple: (mean HR@k, dict user_id -> HitResult)
    """
    results = {}
    for split in users:
        prefix = list(split.train.poi_ids) + [split.validation]
        results[split.user_id] = hit_at_k(models[split.user_id], prefix, split.test, split.history, pois, k, count)
    mean = float(np.mean([r.hit for r in results.values()])) if results else 0.0
    return mean, results


def f1_score(predicted, truth):
    """Set F1; 0 when both sets are empty."""
    predicted, truth = set(predicted), set(truth)
    denominator = len(predicted) + len(truth)
    return 2.0 * len(predicted & truth) / denominator if denominator else 0.0


def attack_f1(predicted, truth, region_map, detected_regions, mode=PER_REGION):
    """
    F1 of an attack against one user, with undetected regions scoring zero.

    ``per_region`` averages an F1 per truly visited region (0 for regions
    the attacker did not mark). ``global`` computes one F1 over all POIs
    after discarding predictions outside the marked regions.

    Returns:
        float or None: Score in [0, 1]; None for a user with no visits
    """
    truth = set(truth)
    if not truth:
        logger.warning("user without visited POIs excluded from attack F1")
        return None
    predicted = set(predicted)
    detected = set(detected_regions)
    if mode == GLOBAL:
        gated = {p for p in predicted if region_map.region_of(p) in detected}
        return f1_score(gated, truth)
    if mode != PER_REGION:
        raise InputError(f"unknown F1 mode '{mode}'; expected one of {F1_MODES}")

    scores = []
    for region in sorted(region_map.regions_of(truth)):
        if region not in detected:
            scores.append(0.0)
            continue
        members = set(region_map.pois_in(region))
        scores.append(f1_score(predicted & members, truth & members))
    return float(np.mean(scores))


def sensitive_f1(predicted, sensitive):
    """
    F1 with the sensitive set as the positive class.

    Only membership predictions about sensitive POIs count, so precision is
    1 whenever anything is predicted and F1 = 2h / (|H| + h) for h hits.
    """
    hidden = set(getattr(sensitive, "poi_ids", sensitive))
    if not hidden:
        raise InputError("sensitive F1 is undefined for an empty sensitive set")
    hits = len(hidden & set(predicted))
    return 2.0 * hits / (len(hidden) + hits)


def mean_defined(values):
    """Mean of the non-None values, or None if there are none."""
    kept = [v for v in values if v is not None]
    return float(np.mean(kept)) if kept else None
