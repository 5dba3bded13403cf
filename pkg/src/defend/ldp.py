#!/usr/bin/env python3
"""
Local Differential Privacy

Gaussian perturbation of every shared parameter before it leaves the
device.
"""

import numpy as np

from src.recsys.model import ModelParams
from src.utils.errors import InputError


def apply_ldp(params, noise_level, seed):
    """
    Add i.i.d. N(0, noise_level^2) noise to every parameter.

    Args:
        params (ModelParams): Clean model (not modified)
        noise_level (float): Standard deviation lambda, >= 0
        seed (int): Noise seed

    Returns:
        ModelParams: Noisy copy
    """
    if noise_level < 0:
        raise InputError(f"noise level must be >= 0, got {noise_level}")
    if noise_level == 0:
        return params.copy()
    rng = np.random.default_rng(seed)
    return ModelParams(*(a + rng.normal(0.0, noise_level, size=a.shape) for a in params.arrays()))
