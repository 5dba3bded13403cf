#!/usr/bin/env python3
"""
Collaboration Protocols

Round drivers for the two decentralized protocols. Each round is a barrier:
every member computes what it shares from the previous round's state, then
all updates are applied.
"""

import logging
from dataclasses import replace

from src.collab.distillation import distill_round, emit_soft_decisions
from src.collab.groups import form_groups
from src.collab.sharing import share_models_round
from src.recsys.trainer import train_local
from src.utils.seeding import stage_seed

logger = logging.getLogger(__name__)

MODEL_SHARING = "model_sharing"
DISTILLATION = "distillation"
PROTOCOLS = (MODEL_SHARING, DISTILLATION)


def _defense_hook(defenses, user_id):
    term = defenses.get(user_id)
    return None if term is None else term.for_epoch()


def run_model_sharing(models, user_sequences, user_regions, train_config, rounds, group_size,
                      run_seed, mapper=map, defenses=None):
    """
    Run model-sharing rounds.

    Args:
        models (dict): user_id -> ModelParams after local training
        user_sequences (dict): user_id -> list of training sequences
        user_regions (dict): user_id -> visited region ids (for grouping)
        train_config (TrainConfig): Local hyperparameters; one epoch of
            fine-tuning follows each aggregation
        rounds (int): Number of rounds
        group_size (int): Target group size
        run_seed (int): Run seed for grouping and fine-tuning streams
        mapper (callable): ``map``-like function for per-group parallelism
        defenses (dict, optional): user_id -> DefenseTerm kept active in
            every fine-tuning epoch

    Returns:
        dict: user_id -> ModelParams after the last round
    """
    defenses = defenses or {}
    one_epoch = replace(train_config, max_epochs=1)
    current = dict(models)
    for r in range(rounds):
        groups = form_groups(user_regions, group_size, stage_seed(run_seed, "collab", r), round_index=r)

        def exchange(group, r=r):
            def fine_tune(i, params):
                uid = group.members[i]
                return train_local(params, user_sequences[uid], one_epoch, stage_seed(run_seed, "collab", r, uid),
                                   extra_gradient=_defense_hook(defenses, uid))
            return group, share_models_round([current[u] for u in group.members], fine_tune)

        updated = {}
        for group, params_list in mapper(exchange, groups):
            updated.update(zip(group.members, params_list))
        current = updated
        logger.info("model-sharing round %d: %d groups", r, len(groups))
    return current


def run_distillation(models, user_sequences, user_regions, reference, train_config, rounds, group_size,
                     weight, run_seed, mapper=map, defenses=None):
    """
    Run knowledge-distillation rounds.

    Members may have different latent dimensions; only soft decisions on
    ``reference`` cross the wire. Members listed in ``defenses`` keep
    their defense term while distilling.

    Returns:
        dict: user_id -> ModelParams after the last round
    """
    defenses = defenses or {}
    one_epoch = replace(train_config, max_epochs=1)
    current = dict(models)
    for r in range(rounds):
        groups = form_groups(user_regions, group_size, stage_seed(run_seed, "collab", r), round_index=r)
        uids = sorted(current)
        decisions = dict(zip(uids, mapper(lambda u: emit_soft_decisions(current[u], reference), uids)))
        neighbors = {}
        for group in groups:
            for u in group.members:
                neighbors[u] = [decisions[v] for v in group.members if v != u]

        def update(uid, r=r):
            return distill_round(current[uid], user_sequences[uid], decisions[uid], neighbors[uid], weight,
                                 reference, one_epoch, stage_seed(run_seed, "collab", r, uid),
                                 extra_gradient=_defense_hook(defenses, uid))

        current = dict(zip(uids, mapper(update, uids)))
        logger.info("distillation round %d: %d groups", r, len(groups))
    return current
