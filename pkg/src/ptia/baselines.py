#!/usr/bin/env python3
"""
Baseline Attacks

Reference attackers the trajectory inference attack is compared against:
uniform random guessing, 2-means over the embedding table, and a simplified
interaction-level membership inference that thresholds how far each POI's
embedding moved from initialization.
"""

import logging

import numpy as np
from sklearn.cluster import KMeans

from src.config.defaults import DEFAULT_IMIA_QUANTILE
from src.recsys.model import init_model

logger = logging.getLogger(__name__)


def mean_set_size(visited_sets):
    """Average true visited-set size across users, rounded half up."""
    sizes = [len(s) for s in visited_sets]
    return int(np.floor(np.mean(sizes) + 0.5)) if sizes else 0


def baseline_random(all_pois, mean_size, seed):
    """
    Uniformly sample ``mean_size`` POIs without replacement.

    Sizes larger than the universe are clamped (logged).
    """
    all_pois = sorted(all_pois)
    size = mean_size
    if size > len(all_pois):
        logger.warning("random baseline size %d clamped to %d POIs", size, len(all_pois))
        size = len(all_pois)
    rng = np.random.default_rng(seed)
    return frozenset(int(all_pois[i]) for i in rng.choice(len(all_pois), size=max(size, 0), replace=False))


def baseline_kmeans(params, seed):
    """
    Split embeddings into two clusters and return the tighter one.

    The cluster with the lower sum of squared errors is predicted visited.
    Identical embeddings give an empty prediction (logged).
    """
    embeddings = params.embeddings
    if np.ptp(embeddings, axis=0).max() == 0.0:
        logger.warning("k-means baseline: all embeddings identical, predicting nothing")
        return frozenset()
    model = KMeans(n_clusters=2, init="k-means++", n_init=10, random_state=seed)
    labels = model.fit_predict(embeddings)
    sse = [float(((embeddings[labels == c] - model.cluster_centers_[c]) ** 2).sum()) for c in (0, 1)]
    chosen = int(np.argmin(sse))
    return frozenset(int(p) for p in np.flatnonzero(labels == chosen))


def imia_displacements(params, init_spec):
    """L2 distance of every embedding row from its initial value."""
    initial = init_model(params.poi_count, params.latent_dim, init_spec)
    return np.linalg.norm(params.embeddings - initial.embeddings, axis=1)


def baseline_imia(params, init_spec, threshold_quantile=DEFAULT_IMIA_QUANTILE):
    """
    Predict POIs whose embeddings moved more than the given quantile.

    Returns:
        frozenset: POI ids with displacement strictly above the threshold
    """
    displacement = imia_displacements(params, init_spec)
    threshold = np.quantile(displacement, threshold_quantile)
    return frozenset(int(p) for p in np.flatnonzero(displacement > threshold))


def calibrate_imia_quantile(models, visited_sets, init_spec, grid=None):
    """
    Pick the displacement quantile maximizing mean F1 on calibration users.

    Args:
        models (list): ModelParams of calibration users
        visited_sets (list): Their true visited POI sets, aligned
        init_spec (InitSpec): Initial distribution of the models
        grid (list, optional): Candidate quantiles

    Returns:
        float: Best quantile (smallest on ties)
    """
    grid = grid if grid is not None else [round(q, 2) for q in np.arange(0.5, 1.0, 0.05)]
    displacements = [imia_displacements(m, init_spec) for m in models]
    best, best_f1 = grid[0], -1.0
    for q in grid:
        scores = []
        for disp, truth in zip(displacements, visited_sets):
            predicted = set(np.flatnonzero(disp > np.quantile(disp, q)).tolist())
            hits = len(predicted & set(truth))
            scores.append(2 * hits / (len(predicted) + len(truth)) if predicted or truth else 0.0)
        f1 = float(np.mean(scores))
        if f1 > best_f1:
            best, best_f1 = q, f1
    logger.info("calibrated IMIA quantile %.2f (F1 %.4f)", best, best_f1)
    return best
