#!/usr/bin/env python3
"""
Physical Trajectory Inference Attack

Given a member's model (model sharing) or its soft decisions (distillation),
predict the set of POIs the member visited:

1. distillation knowledge is first turned into a shadow model;
2. visited regions are detected from embedding drift;
3. every POI of those regions is probed with short shadow windows ending
   at it, and the mean change of the final feature since initialization
   is classified by the attack MLP.

The attack MLP learns from mirror models: public models trained on single
prior-pool sequences the way members train, so their features follow the
same distribution as a victim's.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet

import numpy as np

from src.collab.distillation import SoftDecisionSet
from src.config.defaults import (
    ATTACK_EPOCHS,
    ATTACK_LEARNING_RATE,
    DEFAULT_SHADOW_COUNT,
    DEFAULT_SHADOW_DIM,
    REGION_NOISE_FLOOR,
    SHADOW_LEARNING_RATE,
    SHADOW_MAX_EPOCHS,
    SHADOW_WINDOW,
    VISITED_THRESHOLD,
)
from src.geodata.pois import CheckinSequence
from src.ptia.attack_mlp import AttackSample, train_attack_mlp
from src.ptia.regions import detect_regions, region_scores
from src.ptia.shadow import build_shadow_model, shadow_init_spec
from src.recsys.model import InitSpec, ModelParams, forward, init_model
from src.utils.errors import FabricationError, InputError
from src.utils.seeding import derive_seed

logger = logging.getLogger(__name__)


def _feature(params, sequence, anchor=None):
    feature = forward(params, sequence).feature
    if anchor is not None:
        feature = feature - forward(anchor, sequence).feature
    return feature


def attack_input(params, shadow_set, anchor=None):
    """
    Mean final feature of ``params`` over the shadow sequences.

    Args:
        params (ModelParams): Victim or shadow model
        shadow_set (ShadowSequenceSet): Non-empty probe set
        anchor (ModelParams, optional): Model ``params`` started from; its
            features are subtracted sequence by sequence

    Returns:
        numpy.ndarray: Feature vector of length d
    """
    if not shadow_set.sequences:
        raise InputError("shadow sequence set is empty")
    return np.mean([_feature(params, seq, anchor) for seq in shadow_set.sequences], axis=0)


def make_attack_samples(public_params, member_seqs, nonmember_seqs, anchor=None):
    """
    Labelled features from a public model.

    Each sequence yields the final feature of the public model applied to
    it; sequences the model was trained on are labelled 1, the same number
    of unseen sequences 0.

    Returns:
        list: AttackSample objects, members first
    """
    if len(member_seqs) != len(nonmember_seqs) or not member_seqs:
        raise InputError(f"class imbalance: {len(member_seqs)} members vs {len(nonmember_seqs)} non-members")
    samples = [AttackSample(_feature(public_params, s, anchor), 1) for s in member_seqs]
    samples += [AttackSample(_feature(public_params, s, anchor), 0) for s in nonmember_seqs]
    return samples


@dataclass(frozen=True)
class PtiaConfig:
    """Attacker-side settings."""

    shadow_count: int = DEFAULT_SHADOW_COUNT
    shadow_dim: int = DEFAULT_SHADOW_DIM
    shadow_window: int = SHADOW_WINDOW
    noise_floor: float = REGION_NOISE_FLOOR
    threshold: float = VISITED_THRESHOLD
    shadow_epochs: int = SHADOW_MAX_EPOCHS
    shadow_learning_rate: float = SHADOW_LEARNING_RATE
    seed: int = 0


def poi_feature(params, anchor, shadow_bank, poi_id, config):
    """
    The attack MLP's input for one POI.

    Raises:
        FabricationError: If no shadow sequence can be built for ``poi_id``
    """
    shadow_set = shadow_bank.get(poi_id, config.shadow_count).ending_at_target(config.shadow_window)
    return attack_input(params, shadow_set, anchor)


@dataclass(frozen=True)
class MirrorModel:
    """A public model, the distribution it started from, and its training sequence."""

    params: ModelParams
    origin: InitSpec
    sequence: CheckinSequence


def mirror_attack_samples(mirror, shadow_bank, region_map, config, seed):
    """
    Balanced POI-level samples from one mirror model.

    Visited POIs of the mirror's sequence are labelled 1. The same number of
    unvisited POIs, taken from the mirror's regions first, are labelled 0.
    The mirror's own sequence is removed from the shadow bank so that its
    features are built from other people's trajectories, as for a victim.

    Returns:
        list: AttackSample objects, visited first
    """
    params = mirror.params
    anchor = init_model(params.poi_count, params.latent_dim, mirror.origin)
    bank = shadow_bank.without(mirror.sequence)
    rng = np.random.default_rng(seed)

    visited = sorted(set(mirror.sequence.poi_ids))
    near = [p for r in sorted(region_map.regions_of(visited)) for p in region_map.pois_in(r) if p not in visited]
    taken = set(visited) | set(near)
    far = [p for p in range(params.poi_count) if p not in taken]
    unvisited = [int(p) for p in rng.permutation(near)] + [int(p) for p in rng.permutation(far)]

    def features(poi_ids, limit):
        found = []
        for p in poi_ids:
            if len(found) == limit:
                break
            try:
                found.append(poi_feature(params, anchor, bank, p, config))
            except FabricationError as e:
                logger.debug("mirror skips POI %d: %s", p, e)
        return found

    positives = features(visited, len(visited))
    negatives = features(unvisited, len(positives))
    n = min(len(positives), len(negatives))
    return [AttackSample(f, 1) for f in positives[:n]] + [AttackSample(f, 0) for f in negatives[:n]]


def pretrain_attack_models(mirrors, shadow_bank, region_map, config, seed,
                           epochs=ATTACK_EPOCHS, learning_rate=ATTACK_LEARNING_RATE):
    """
    One attack MLP per latent dimension among the mirror models.

    Args:
        mirrors (list): MirrorModel objects
        shadow_bank (ShadowSequenceBank): Shadow sequences of the prior pool
        region_map (RegionMap): Regions of the POI universe
        config (PtiaConfig): Window and V used at inference
        seed (int): Sampling and training seed

    Returns:
        dict: d -> AttackMlp
    """
    if not mirrors:
        raise InputError("the attacker has no mirror models to learn from")
    by_dim = {}
    for i, mirror in enumerate(mirrors):
        samples = mirror_attack_samples(mirror, shadow_bank, region_map, config, derive_seed(seed, i))
        by_dim.setdefault(mirror.params.latent_dim, []).extend(samples)
    models = {}
    for d, samples in sorted(by_dim.items()):
        models[d] = train_attack_mlp(samples, seed, epochs, learning_rate)
        logger.info("pretrained attack MLP for d=%d on %d samples", d, len(samples))
    return models


@dataclass
class PtiaVerdict:
    """What the attack concluded about one user."""

    user_id: int
    detected_regions: FrozenSet[int]
    predicted: FrozenSet[int]
    visited_probability: Dict[int, float] = field(default_factory=dict)
    region_divergence: Dict[int, float] = field(default_factory=dict)

    def to_dict(self):
        return {
            'user_id': self.user_id,
            'detected_regions': sorted(self.detected_regions),
            'predicted': sorted(self.predicted),
            'visited_probability': {str(p): round(a, 12) for p, a in sorted(self.visited_probability.items())},
            'region_divergence': {str(r): round(d, 12) for r, d in sorted(self.region_divergence.items())},
        }


def resolve_knowledge(knowledge, reference, init_spec, config, seed):
    """
    Turn shared knowledge into a model plus the initial distribution it came from.

    Model-sharing knowledge is used as is; distillation knowledge is replaced
    by a shadow model fitted at ``config.shadow_dim``.
    """
    if isinstance(knowledge, ModelParams):
        return knowledge, init_spec
    if isinstance(knowledge, SoftDecisionSet):
        shadow = build_shadow_model(knowledge, reference, config.shadow_dim, seed,
                                    max_epochs=config.shadow_epochs,
                                    learning_rate=config.shadow_learning_rate, init_std=init_spec.std)
        return shadow, shadow_init_spec(seed, init_spec.std)
    raise InputError(f"unsupported knowledge type {type(knowledge).__name__}")


def run_ptia(user_id, knowledge, region_map, reference, shadow_bank, attack_mlps, init_spec, config):
    """
    Attack one user.

    Args:
        user_id (int): Target user
        knowledge: ModelParams or SoftDecisionSet shared by the user
        region_map (RegionMap): Regions of the POI universe
        reference (list): Reference dataset (used for distillation knowledge)
        shadow_bank (ShadowSequenceBank): Shadow sequences per POI
        attack_mlps (dict): d -> AttackMlp
        init_spec (InitSpec): Initial distribution of the members' models
        config (PtiaConfig): Attacker settings

    Returns:
        PtiaVerdict: Detected regions and predicted POIs
    """
    params, origin = resolve_knowledge(knowledge, reference, init_spec, config, config.seed)
    return ptia_on_model(user_id, params, origin, region_map, shadow_bank, attack_mlps, config)


def ptia_on_model(user_id, params, origin, region_map, shadow_bank, attack_mlps, config):
    """
    Attack a model directly (a shared model or a shadow model).

    Args:
        origin (InitSpec): Distribution ``params`` was initialized from

    Returns:
        PtiaVerdict: Detected regions and predicted POIs
    """
    mlp = attack_mlps.get(params.latent_dim)
    if mlp is None:
        raise InputError(f"no attack model for latent dimension {params.latent_dim}")

    # Regions
    divergence = {s.region_id: s.divergence for s in region_scores(params, origin, region_map)}
    detected = detect_regions(params, origin, region_map, config.noise_floor)
    candidates = [p for r in sorted(detected) for p in region_map.pois_in(r)]
    if not candidates:
        return PtiaVerdict(user_id, detected, frozenset(), {}, divergence)

    # Candidate POIs
    anchor = init_model(params.poi_count, params.latent_dim, origin)
    probed, features = [], []
    for p in candidates:
        try:
            features.append(poi_feature(params, anchor, shadow_bank, p, config))
        except FabricationError as e:
            # Unprobeable POIs stay unpredicted
            logger.warning("user %s: %s", user_id, e)
            continue
        probed.append(p)
    if not probed:
        return PtiaVerdict(user_id, detected, frozenset(), {}, divergence)
    alpha0 = mlp.visited_probability(np.stack(features))
    probability = {p: float(a) for p, a in zip(probed, alpha0)}
    predicted = frozenset(p for p, a in probability.items() if a > config.threshold)
    logger.debug("user %s: regions %s, %d/%d POIs predicted", user_id, sorted(detected),
                 len(predicted), len(candidates))
    return PtiaVerdict(user_id, detected, predicted, probability, divergence)
