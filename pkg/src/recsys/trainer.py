#!/usr/bin/env python3
"""
Local Training

Mini-batch SGD on the local next-POI objective. Training samples are
(prefix, next POI) pairs drawn from the user's sequences; dropout zeroes
feature elements with rescaling at train time only.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.config.defaults import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_DROPOUT,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_EPOCHS,
    MAX_SEQ_LEN,
)
from src.recsys.model import backward_from, forward, prefix_loss
from src.recsys.optim import Sgd
from src.utils.errors import DivergenceError, InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of local training."""

    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    dropout: float = DEFAULT_DROPOUT

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise InputError(f"invalid training configuration {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError(f"dropout must be in [0, 1), got {self.dropout}")

    @classmethod
    def from_dict(cls, data):
        return cls(float(data['learning_rate']), int(data['batch_size']),
                   int(data['max_epochs']), float(data['dropout']))


def next_poi_samples(sequences):
    """
    Expand sequences into (prefix ids, target) training samples.

    Prefixes keep their most recent MAX_SEQ_LEN POIs.
    """
    samples = []
    for seq in sequences:
        ids = seq.poi_ids
        for t in range(1, len(ids)):
            samples.append((ids[max(0, t - MAX_SEQ_LEN):t], ids[t]))
    return samples


def dropout_mask(rng, d, rate):
    if rate <= 0.0:
        return None
    return (rng.random(d) >= rate) / (1.0 - rate)


class LocalEpochRunner:
    """
    Runs epochs of next-POI training on one user's samples.

    The runner owns the shuffling/dropout stream so that extra loss terms
    (distillation, adversarial defense) can be added per mini-batch without
    disturbing the local trajectory.

    Args:
        samples (list): (prefix, target) pairs
        config (TrainConfig): Hyperparameters
        rng (numpy.random.Generator): Shuffling and dropout stream
    """

    def __init__(self, samples, config, rng):
        if not samples:
            raise InputError("no training samples")
        self.samples = samples
        self.config = config
        self.rng = rng
        self.optimizer = Sgd(config.learning_rate)

    def run_epoch(self, params, epoch, extra_gradient=None):
        """
        One pass over the shuffled samples.

        Args:
            params (ModelParams): Updated in place
            epoch (int): Epoch index, reported on divergence
            extra_gradient (callable, optional): ``f(params, grads) -> float``
                adding an auxiliary term's gradient into ``grads`` and
                returning its loss

        Returns:
            float: Mean local loss over the epoch's samples
        """
        order = self.rng.permutation(len(self.samples))
        total = 0.0
        for start in range(0, len(order), self.config.batch_size):
            batch = order[start:start + self.config.batch_size]
            grads = params.zeros_like()
            for i in batch:
                prefix, target = self.samples[i]
                out = forward(params, prefix, dropout_mask(self.rng, params.latent_dim, self.config.dropout))
                loss = prefix_loss(out, target)
                if not np.isfinite(loss):
                    raise DivergenceError("recommender", epoch)
                total += loss
                d_scores = out.probs.copy()
                d_scores[target] -= 1.0
                backward_from(params, out, d_scores / len(batch), grads=grads)
            if extra_gradient is not None:
                extra = extra_gradient(params, grads)
                if not np.isfinite(extra):
                    raise DivergenceError("recommender", epoch)
            self.optimizer.step(params.arrays(), grads.arrays())
        mean = total / len(self.samples)
        logger.debug("epoch %d local loss %.6f", epoch, mean)
        return mean


def combine_extras(*extras):
    """One ``extra_gradient`` hook running every given hook; None if there are none."""
    extras = [e for e in extras if e is not None]
    if not extras:
        return None
    if len(extras) == 1:
        return extras[0]
    return lambda params, grads: sum(e(params, grads) for e in extras)


def train_local(params, sequences, config, seed, extra_gradient=None):
    """
    Train a private copy of ``params`` on the local objective.

    Args:
        params (ModelParams): Starting point (not modified)
        sequences (list): CheckinSequence objects
        config (TrainConfig): Hyperparameters
        seed (int): Shuffling and dropout seed
        extra_gradient (callable, optional): Hook added to every epoch

    Returns:
        ModelParams: Trained parameters
    """
    model = params.copy()
    runner = LocalEpochRunner(next_poi_samples(sequences), config, np.random.default_rng(seed))
    for epoch in range(config.max_epochs):
        runner.run_epoch(model, epoch, extra_gradient=extra_gradient)
    return model
