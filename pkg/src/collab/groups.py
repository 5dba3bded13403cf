#!/usr/bin/env python3
"""
Neighbor Groups

Greedy grouping of users by the Jaccard similarity of the regions they
visit. Groups are recomputed every collaboration round.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.utils.errors import InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeighborGroup:
    """Users that exchange knowledge with each other in one round."""

    members: Tuple[int, ...]
    round_index: int = 0
    degenerate: bool = False


def jaccard(a, b):
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def form_groups(user_regions, group_size, seed, round_index=0):
    """
    Partition users into groups of similar users.

    Anchors are visited in a seeded order; each anchor takes the
    ``group_size - 1`` remaining users with the highest Jaccard similarity
    of visited-region sets, ties broken by ascending user id. A user that
    would be left alone joins the last group formed.

    Args:
        user_regions (dict): user_id -> set of region ids
        group_size (int): Target group size (>= 2)
        seed (int): Anchor-order seed
        round_index (int): Collaboration round recorded on each group

    Returns:
        list: NeighborGroup objects covering every user exactly once
    """
    if group_size < 2:
        raise InputError(f"group_size must be >= 2, got {group_size}")
    ids = sorted(user_regions)
    if not ids:
        return []
    if len(ids) == 1:
        logger.warning("only one user; forming a degenerate singleton group")
        return [NeighborGroup((ids[0],), round_index, degenerate=True)]

    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    remaining = set(ids)
    groups = []
    for anchor in order:
        if anchor not in remaining:
            continue
        remaining.discard(anchor)
        if not remaining and groups:
            last = groups.pop()
            groups.append(NeighborGroup(tuple(sorted(last.members + (anchor,))), round_index))
            break
        ranked = sorted(remaining, key=lambda u: (-jaccard(user_regions[anchor], user_regions[u]), u))
        take = ranked[:group_size - 1]
        if len(remaining) - len(take) == 1:
            take = ranked[:group_size]
        remaining.difference_update(take)
        groups.append(NeighborGroup(tuple(sorted([anchor] + take)), round_index))
    return groups
