#!/usr/bin/env python3
"""
Embedding Reset

Overwrites the trained embeddings of sensitive POIs with their initial
values before sharing.
"""

import numpy as np

from src.utils.errors import InputError


def apply_er(params, init_params, sensitive):
    """
    Reset sensitive embedding rows to initialization.

    Args:
        params (ModelParams): Trained model (not modified)
        init_params (ModelParams): The model's initial parameters
        sensitive (SensitivePoiSet): Rows to reset

    Returns:
        ModelParams: Copy with sensitive rows restored
    """
    if params.embeddings.shape != init_params.embeddings.shape:
        raise InputError("initial parameters do not match the model's shape")
    ids = np.array(sorted(sensitive.poi_ids), dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= params.poi_count):
        raise InputError(f"sensitive POI id out of range [0, {params.poi_count})")
    reset = params.copy()
    reset.embeddings[ids] = init_params.embeddings[ids]
    return reset
