#!/usr/bin/env python3
"""
Shadow Models

Rebuilds a stand-in for a distillation participant's model from the soft
decisions it shared, by minimizing the squared disagreement of predictions
on the reference dataset.
"""

import logging

import numpy as np

from src.collab.distillation import distillation_loss, reference_hash, soft_decision_gradient
from src.config.defaults import (
    INIT_STD,
    SHADOW_LEARNING_RATE,
    SHADOW_MAX_EPOCHS,
    SHADOW_PATIENCE,
    SHADOW_TOLERANCE,
)
from src.recsys.model import InitSpec, init_model
from src.recsys.optim import Adam
from src.utils.errors import DivergenceError, ProtocolError

logger = logging.getLogger(__name__)

SHADOW_BATCH_SIZE = 16


def shadow_init_spec(seed, std=INIT_STD):
    """Initial distribution the attacker draws shadow models from."""
    return InitSpec(std=std, seed=seed)


def build_shadow_model(soft_decisions, reference, d_a, seed, max_epochs=SHADOW_MAX_EPOCHS,
                       learning_rate=SHADOW_LEARNING_RATE, tolerance=SHADOW_TOLERANCE,
                       patience=SHADOW_PATIENCE, init_std=INIT_STD):
    """
    Fit a shadow model to a member's soft decisions.

    Training stops once the mean per-sequence squared error improves by
    less than ``tolerance`` (relative to its initial value) for ``patience``
    consecutive epochs, or after ``max_epochs``.

    Args:
        soft_decisions (SoftDecisionSet): The member's shared decisions
        reference (list): Reference CheckinSequences the decisions refer to
        d_a (int): Shadow latent dimension
        seed (int): Initialization and shuffling seed

    Returns:
        ModelParams: The shadow model
    """
    if len(reference) != len(soft_decisions) or soft_decisions.reference_hash != reference_hash(reference):
        raise ProtocolError("soft decisions are not aligned with the reference dataset")

    targets = soft_decisions.probs
    shadow = init_model(targets.shape[1], d_a, shadow_init_spec(seed, init_std))
    optimizer = Adam(learning_rate)
    rng = np.random.default_rng(seed)

    initial = distillation_loss(shadow, reference, targets)
    best = initial
    stalled = 0
    for epoch in range(max_epochs):
        order = rng.permutation(len(reference))
        for start in range(0, len(order), SHADOW_BATCH_SIZE):
            batch = order[start:start + SHADOW_BATCH_SIZE]
            grads = shadow.zeros_like()
            soft_decision_gradient(shadow, [reference[i] for i in batch], targets[batch], 1.0, grads)
            optimizer.step(shadow.arrays(), grads.arrays())
        current = distillation_loss(shadow, reference, targets)
        if not np.isfinite(current):
            raise DivergenceError("shadow", epoch)
        stalled = stalled + 1 if best - current < tolerance * initial else 0
        best = min(best, current)
        if stalled >= patience:
            break
    logger.debug("shadow fit: disagreement %.3e -> %.3e after %d epochs", initial, best, epoch + 1)
    return shadow
