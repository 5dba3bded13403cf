#!/usr/bin/env python3
"""
Adversarial Game Defense

The user trains its recommender against a private copy of the trajectory
inference attacker. Each epoch alternates two half-steps:

1. the recommender descends on L_loc + mu * L_def with the attacker frozen,
   where L_def is the mean gap between the attacker's visited probability
   for each sensitive POI and its mean over a few unrelated POIs;
2. the attacker descends on its cross-entropy over features produced by the
   current recommender, with the recommender frozen.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.config.defaults import (
    AGD_PATIENCE,
    AGD_TOLERANCE,
    ATTACK_EPOCHS,
    ATTACK_LEARNING_RATE,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_MU,
    SHADOW_WINDOW,
    UNRELATED_COUNT,
)
from src.ptia.attack import make_attack_samples
from src.ptia.attack_mlp import fit_attack_mlp, train_attack_mlp
from src.recsys.model import backward_from, forward
from src.recsys.trainer import LocalEpochRunner, next_poi_samples, train_local
from src.utils.errors import DivergenceError, InputError, ProtocolError
from src.utils.seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgdConfig:
    """
    Settings of the adversarial game.

    Attributes:
        mu (float): Weight of the defense loss
        unrelated_count (int): Unrelated POIs sampled per epoch (O)
        pretrain_epochs (int): Attacker pretraining epochs on shared samples
        max_epochs (int): Cap on alternation epochs
        tolerance (float): Relative L_loc improvement regarded as progress
        patience (int): Epochs without progress before stopping
        attacker_learning_rate (float): SGD step of the private attacker
    """

    mu: float = DEFAULT_MU
    unrelated_count: int = UNRELATED_COUNT
    pretrain_epochs: int = ATTACK_EPOCHS
    max_epochs: int = DEFAULT_MAX_EPOCHS
    tolerance: float = AGD_TOLERANCE
    patience: int = AGD_PATIENCE
    attacker_learning_rate: float = ATTACK_LEARNING_RATE

    def __post_init__(self):
        if self.mu < 0:
            raise InputError(f"mu must be >= 0, got {self.mu}")
        if self.unrelated_count < 1:
            raise InputError(f"unrelated count must be >= 1, got {self.unrelated_count}")
        if self.max_epochs < 0 or self.pretrain_epochs < 0 or self.patience < 1:
            raise InputError(f"invalid adversarial game schedule {self}")


class UnrelatedSampler:
    """
    Draws POIs the user never visited, uniformly without replacement.

    Args:
        poi_count (int): Size of the POI universe
        visited (iterable): The user's visited POIs
        rng (numpy.random.Generator): Sampling stream
    """

    def __init__(self, poi_count, visited, rng):
        visited = set(visited)
        self.candidates = np.array([p for p in range(poi_count) if p not in visited], dtype=np.int64)
        self.rng = rng

    def sample(self, count):
        if self.candidates.size == 0:
            raise InputError("the user visited every POI; no unrelated POI is available")
        size = min(count, self.candidates.size)
        return [int(p) for p in self.rng.choice(self.candidates, size=size, replace=False)]


def defense_loss_and_grad(attack_mlp, params, sensitive_ids, unrelated_ids, probes, scale=0.0, grads=None,
                          anchor_features=None):
    """
    L_def and, when ``grads`` is given, ``scale`` times its parameter gradient.

    The attacker's view of POI p is its visited probability on the final
    feature of ``params`` applied to the probe sequence of p, less the
    feature of the starting model when ``anchor_features`` is given. The
    attacker stays frozen; the gradient reaches the recommender through the
    feature.

    Args:
        attack_mlp (AttackMlp): The user's private attacker
        params (ModelParams): Recommender
        sensitive_ids (list): Sensitive POIs
        unrelated_ids (list): Unrelated POIs
        probes (dict): poi_id -> probe CheckinSequence
        scale (float): Multiplier on the accumulated gradient
        grads (ModelParams, optional): Accumulator
        anchor_features (dict, optional): poi_id -> constant feature offset

    Returns:
        float: (1/G) sum_p | A(p) - mean_o A(p_o) |
    """
    sensitive_ids = list(sensitive_ids)
    unrelated_ids = list(unrelated_ids)
    if not sensitive_ids:
        return 0.0
    if not unrelated_ids:
        raise InputError("defense loss needs at least one unrelated POI")
    if attack_mlp.input_dim != params.latent_dim:
        raise InputError(f"attacker expects d={attack_mlp.input_dim}, model has d={params.latent_dim}")

    ids = sensitive_ids + unrelated_ids
    outs = [forward(params, probes[p]) for p in ids]
    features = [o.feature if anchor_features is None else o.feature - anchor_features[p] for p, o in zip(ids, outs)]
    a0, d_a0 = attack_mlp.visited_probability_gradient(np.stack(features))
    g = len(sensitive_ids)
    gaps = a0[:g] - a0[g:].mean()
    loss = float(np.abs(gaps).mean())

    if grads is not None and scale != 0.0:
        signs = np.sign(gaps) / g
        coef = np.concatenate([signs, np.full(len(unrelated_ids), -signs.sum() / len(unrelated_ids))])
        for out, c, row in zip(outs, coef, d_a0):
            if c != 0.0:
                backward_from(params, out, d_feature=scale * c * row, grads=grads)
    return loss


def defense_loss(attack_mlp, params, sensitive, unrelated, probes, anchor_features=None):
    """
    L_def for a sensitive set and unrelated POIs.

    Args:
        sensitive (SensitivePoiSet or iterable): Sensitive POIs
        unrelated (UnrelatedSampler or iterable): Sampler (O fresh draws
            of ``UNRELATED_COUNT``) or explicit POI ids
    """
    ids = sorted(getattr(sensitive, "poi_ids", sensitive))
    if isinstance(unrelated, UnrelatedSampler):
        unrelated = unrelated.sample(UNRELATED_COUNT)
    return defense_loss_and_grad(attack_mlp, params, ids, unrelated, probes, anchor_features=anchor_features)


def probe_features(params, probes):
    """poi_id -> final feature of ``params`` on the POI's probe sequence."""
    return {p: forward(params, seq).feature for p, seq in probes.items()}


def attacker_samples(params, member_samples, unvisited, probes, rng, anchor=None, window=SHADOW_WINDOW):
    """
    Balanced features produced by the current recommender.

    Members are the last ``window`` POIs of the user's own training prefixes,
    ending at the visited target; non-members are probe sequences of
    unvisited POIs.

    Returns:
        tuple: (features of shape (2n, d), labels of shape (2n,))
    """
    n = min(len(member_samples), len(unvisited))
    members = rng.choice(len(member_samples), size=n, replace=False)
    others = rng.choice(unvisited, size=n, replace=False)
    windows = []
    for i in members:
        prefix, target = member_samples[i]
        windows.append((tuple(prefix) + (target,))[-window:])
    samples = make_attack_samples(params, windows, [probes[int(p)] for p in others], anchor)
    return np.stack([s.input for s in samples]), np.array([s.label for s in samples], dtype=np.int64)


class DefenseTerm:
    """
    A user's weighted defense loss, reusable after the adversarial game.

    Each call of ``for_epoch`` draws fresh unrelated POIs and returns an
    ``extra_gradient`` hook for ``LocalEpochRunner.run_epoch``.

    Args:
        attacker (AttackMlp): The user's private attacker (kept frozen)
        sensitive_ids (list): Sensitive POIs
        sampler (UnrelatedSampler): Unrelated-POI stream
        probes (dict): poi_id -> probe CheckinSequence
        anchor_features (dict): Probe features of the starting model
        config (AgdConfig): Game settings
    """

    def __init__(self, attacker, sensitive_ids, sampler, probes, anchor_features, config):
        self.attacker = attacker
        self.sensitive_ids = sorted(sensitive_ids)
        self.sampler = sampler
        self.probes = probes
        self.anchor_features = anchor_features
        self.config = config
        self.calls = 0
        self.unrelated = None

    def for_epoch(self):
        unrelated = self.unrelated = self.sampler.sample(self.config.unrelated_count)
        mu = self.config.mu

        def extra(current, grads):
            self.calls += 1
            return mu * defense_loss_and_grad(self.attacker, current, self.sensitive_ids, unrelated, self.probes,
                                              scale=mu, grads=grads, anchor_features=self.anchor_features)

        return extra

    def loss(self, params):
        """L_def on the unrelated POIs of the latest epoch (a fresh draw before the first)."""
        unrelated = self.unrelated
        if unrelated is None:
            unrelated = self.sampler.sample(self.config.unrelated_count)
        return defense_loss_and_grad(self.attacker, params, self.sensitive_ids, unrelated, self.probes,
                                     anchor_features=self.anchor_features)


def train_with_agd(params, sequences, sensitive, probes, config, train_config, pretrain_samples, seed):
    """
    Train a recommender under the adversarial game.

    With mu = 0 or an empty sensitive set the recommender follows exactly
    the trajectory of ``train_local`` with the same seed. The attacker sees
    features as changes from ``params``, the shared starting point.

    Args:
        params (ModelParams): Starting point (not modified)
        sequences (list): User's training CheckinSequences
        sensitive (SensitivePoiSet): POIs to hide
        probes (dict): poi_id -> probe CheckinSequence
        config (AgdConfig): Game settings
        train_config (TrainConfig): Local hyperparameters
        pretrain_samples (list): AttackSample objects from public models
        seed (int): Seed of the recommender stream; the attacker and
            unrelated-POI streams are derived from it

    Returns:
        tuple: (ModelParams, DefenseTerm)
    """
    attacker = train_attack_mlp(pretrain_samples, derive_seed(seed, 1), config.pretrain_epochs,
                                config.attacker_learning_rate)
    if attacker.input_dim != params.latent_dim:
        raise InputError(f"pretraining samples have d={attacker.input_dim}, model has d={params.latent_dim}")
    visited = {p for s in sequences for p in s.poi_ids}
    sampler = UnrelatedSampler(params.poi_count, visited, np.random.default_rng(derive_seed(seed, 3)))
    sensitive_ids = sorted(sensitive.poi_ids)
    term = DefenseTerm(attacker, sensitive_ids, sampler, probes, probe_features(params, probes), config)
    if config.mu == 0 or not sensitive_ids:
        return train_local(params, sequences, train_config, seed), term

    model = params.copy()
    samples = next_poi_samples(sequences)
    runner = LocalEpochRunner(samples, train_config, np.random.default_rng(seed))
    attacker_rng = np.random.default_rng(derive_seed(seed, 2))

    initial = None
    best = None
    stalled = 0
    for epoch in range(config.max_epochs):
        # Recommender half-step, attacker frozen
        frozen = attacker.checksum()
        local = runner.run_epoch(model, epoch, extra_gradient=term.for_epoch())
        if attacker.checksum() != frozen:
            raise ProtocolError("attacker changed during the recommender half-step")

        # Attacker half-step, recommender frozen
        frozen = model.checksum()
        x, labels = attacker_samples(model, samples, sampler.candidates, probes, attacker_rng, anchor=params)
        try:
            fit_attack_mlp(attacker, x, labels, 1, config.attacker_learning_rate, attacker_rng)
        except DivergenceError as e:
            raise DivergenceError("attacker", epoch) from e
        if model.checksum() != frozen:
            raise ProtocolError("recommender changed during the attacker half-step")

        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("AGD epoch %d: L_loc %.6f L_def %.6f", epoch, local, term.loss(model))
        if initial is None:
            initial = best = local
            continue
        stalled = stalled + 1 if best - local < config.tolerance * abs(initial) else 0
        best = min(best, local)
        if stalled >= config.patience:
            logger.debug("AGD converged after %d epochs", epoch + 1)
            break
    return model, term
