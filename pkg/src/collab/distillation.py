#!/usr/bin/env python3
"""
Knowledge Distillation

Members exchange only soft decisions on the shared reference dataset and
pull their own predictions towards the average of their neighbors'.
"""

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from src.recsys.model import backward_from, forward
from src.recsys.snapshot import DECISIONS_MAGIC, read_arrays, write_arrays
from src.recsys.trainer import LocalEpochRunner, combine_extras, next_poi_samples
from src.utils.errors import InputError, ProtocolError

logger = logging.getLogger(__name__)


def reference_hash(reference):
    """SHA-256 hex digest identifying the content of a reference dataset."""
    digest = hashlib.sha256()
    for seq in reference:
        digest.update(",".join(str(p) for p in seq.poi_ids).encode())
        digest.update(b";")
    return digest.hexdigest()


@dataclass
class SoftDecisionSet:
    """
    One model's probability vectors on every reference sequence.

    Attributes:
        probs (numpy.ndarray): Shape (Z, |P|), one row per reference sequence
        reference_hash (str): Hash of the reference dataset the rows refer to
    """

    probs: np.ndarray
    reference_hash: str

    def __len__(self):
        return self.probs.shape[0]

    def save(self, path, meta=None):
        write_arrays(path, DECISIONS_MAGIC, [self.probs], tag=bytes.fromhex(self.reference_hash), meta=meta)

    @classmethod
    def load(cls, path):
        arrays, tag = read_arrays(path, DECISIONS_MAGIC)
        return cls(arrays[0], tag.ljust(32, b"\0").hex())


def emit_soft_decisions(params, reference):
    """
    Compute the soft decisions a member shares.

    Args:
        params (ModelParams): Member model
        reference (list): Reference CheckinSequences

    Returns:
        SoftDecisionSet: probs of forward(params, X) for every X in order
    """
    if not reference:
        raise InputError("reference dataset is empty")
    probs = np.stack([forward(params, seq).probs for seq in reference])
    return SoftDecisionSet(probs, reference_hash(reference))


def soft_decision_gradient(params, reference, targets, scale, grads):
    """
    Add ``scale`` times the gradient of mean_z ||p_z - t_z||^2 to ``grads``.

    Returns:
        float: The mean per-sequence squared error before scaling
    """
    total = 0.0
    for seq, target in zip(reference, targets):
        out = forward(params, seq)
        diff = out.probs - target
        total += float(diff @ diff)
        d_probs = 2.0 * diff
        d_scores = out.probs * (d_probs - out.probs @ d_probs)
        backward_from(params, out, scale * d_scores / len(reference), grads=grads)
    return total / len(reference)


def distillation_loss(params, reference, targets):
    """Mean per-sequence squared error between own soft decisions and ``targets``."""
    probs = np.stack([forward(params, seq).probs for seq in reference])
    return float(np.mean(np.sum((probs - targets) ** 2, axis=1)))


def check_aligned(own, others):
    for other in others:
        if other.reference_hash != own.reference_hash or other.probs.shape != own.probs.shape:
            raise ProtocolError("soft-decision sets refer to different reference datasets")


def distill_round(params, sequences, own_decisions, neighbor_decision_sets, weight, reference, config, seed,
                  extra_gradient=None):
    """
    One epoch of local training plus distillation towards the neighbors.

    Every mini-batch step descends on the local loss plus ``weight`` times
    the squared error between the member's probabilities on the reference
    dataset and the average of its neighbors' probabilities.

    Args:
        params (ModelParams): Member model (not modified)
        sequences (list): Member's private training sequences
        own_decisions (SoftDecisionSet): What the member shared this round
        neighbor_decision_sets (list): SoftDecisionSets from group members
        weight (float): Distillation weight
        reference (list): Reference CheckinSequences
        config (TrainConfig): Local hyperparameters (one epoch is run)
        seed (int): Shuffling and dropout seed
        extra_gradient (callable, optional): Further loss term, such as a
            defense, added to every step

    Returns:
        ModelParams: Updated parameters
    """
    check_aligned(own_decisions, neighbor_decision_sets)
    if own_decisions.reference_hash != reference_hash(reference):
        raise ProtocolError("own soft decisions do not match the reference dataset")

    model = params.copy()
    runner = LocalEpochRunner(next_poi_samples(sequences), config, np.random.default_rng(seed))
    extra = None
    if weight > 0 and neighbor_decision_sets:
        targets = np.mean([s.probs for s in neighbor_decision_sets], axis=0)

        def extra(current, grads):
            return weight * soft_decision_gradient(current, reference, targets, weight, grads)

    runner.run_epoch(model, 0, extra_gradient=combine_extras(extra, extra_gradient))
    return model
