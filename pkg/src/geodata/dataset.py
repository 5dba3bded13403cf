#!/usr/bin/env python3
"""
Check-in Datasets

This module ingests check-in CSV files, filters sparse users and POIs,
and splits the result into the attacker-prior pool, the reference
dataset and per-user leave-one-out evaluation data.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd

from src.config.defaults import MAX_SEQ_LEN, PRIOR_FRACTION, REFERENCE_FRACTION
from src.geodata.pois import CheckinSequence, PoiIndex, PoiRecord
from src.utils.errors import CoverageError, DatasetExhaustedError, InputError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("user_id", "poi_id", "category", "lat", "lon", "timestamp")


@dataclass(frozen=True)
class CheckinDataset:
    """POI records together with the sequences that reference them."""

    pois: Tuple[PoiRecord, ...]
    sequences: Tuple[CheckinSequence, ...]

    def index(self):
        return PoiIndex(self.pois)

    def to_dict(self):
        return {
            'pois': [[p.poi_id, p.category_id, p.lat, p.lon] for p in self.pois],
            'sequences': [[s.user_id, list(s.poi_ids)] for s in self.sequences],
        }

    @classmethod
    def from_dict(cls, data):
        pois = tuple(PoiRecord(int(i), int(c), float(lat), float(lon)) for i, c, lat, lon in data['pois'])
        sequences = tuple(CheckinSequence(u, tuple(ids)) for u, ids in data['sequences'])
        return cls(pois, sequences)


def load_checkins_csv(path):
    """
    Read a check-in CSV into a dataset.

    The file needs a header with ``user_id,poi_id,category,lat,lon,timestamp``.
    Rows are grouped by user and ordered by ISO-8601 timestamp; only the order
    is kept. Raw user, POI and category identifiers are mapped to contiguous
    integers in sorted order. Sequences longer than MAX_SEQ_LEN keep their
    most recent check-ins.

    Args:
        path (str): CSV file path

    Returns:
        CheckinDataset: The ingested data
    """
    frame = pd.read_csv(path, dtype={"user_id": str, "poi_id": str, "category": str})
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise InputError(f"{path}: missing columns {missing}")
    frame["timestamp"] = pd.to_datetime(frame["timestamp"], utc=True, format="ISO8601")

    poi_codes = {raw: i for i, raw in enumerate(sorted(frame["poi_id"].unique()))}
    category_codes = {raw: i for i, raw in enumerate(sorted(frame["category"].unique()))}
    user_codes = {raw: i for i, raw in enumerate(sorted(frame["user_id"].unique()))}

    first = frame.drop_duplicates("poi_id", keep="first")
    pois = tuple(sorted(
        (PoiRecord(poi_codes[row.poi_id], category_codes[row.category], float(row.lat), float(row.lon))
         for row in first.itertuples(index=False)),
        key=lambda p: p.poi_id,
    ))

    frame = frame.sort_values(["user_id", "timestamp"], kind="mergesort")
    sequences = []
    for raw_user, rows in frame.groupby("user_id", sort=True):
        ids = [poi_codes[p] for p in rows["poi_id"]][-MAX_SEQ_LEN:]
        sequences.append(CheckinSequence(user_codes[raw_user], tuple(ids)))
    logger.info("ingested %d check-ins, %d users, %d POIs from %s",
                len(frame), len(sequences), len(pois), path)
    return CheckinDataset(pois, tuple(sequences))


def filter_min_interactions(dataset, min_count):
    """
    Drop users and POIs with fewer than ``min_count`` interactions.

    Users and POIs are removed alternately until neither changes, then POI
    and user ids are re-compacted to 0..n-1 preserving their order.

    Args:
        dataset (CheckinDataset): Raw data
        min_count (int): Minimum check-ins per user and per POI

    Returns:
        CheckinDataset: Filtered, re-indexed data

    Raises:
        DatasetExhaustedError: If nothing survives
    """
    if min_count < 1:
        raise InputError(f"min_count must be >= 1, got {min_count}")

    sequences = [(s.user_id, list(s.poi_ids)) for s in dataset.sequences]
    rounds = 0
    while True:
        rounds += 1
        kept = [(u, ids) for u, ids in sequences if len(ids) >= min_count]
        counts = {}
        for _, ids in kept:
            for p in ids:
                counts[p] = counts.get(p, 0) + 1
        frequent = {p for p, c in counts.items() if c >= min_count}
        pruned = [(u, [p for p in ids if p in frequent]) for u, ids in kept]
        if pruned == sequences:
            break
        sequences = pruned
    if not sequences:
        raise DatasetExhaustedError(f"no user or POI has >= {min_count} interactions")
    logger.info("interaction filter reached a fixed point after %d rounds: %d users", rounds, len(sequences))

    # Re-compact POI ids (categories keep their ids)
    surviving = sorted({p for _, ids in sequences for p in ids})
    remap = {old: new for new, old in enumerate(surviving)}
    by_id = {p.poi_id: p for p in dataset.pois}
    pois = tuple(PoiRecord(remap[old], by_id[old].category_id, by_id[old].lat, by_id[old].lon)
                 for old in surviving)

    # Re-compact user ids, anonymous sequences stay anonymous
    users = sorted({u for u, _ in sequences if u is not None})
    user_remap = {old: new for new, old in enumerate(users)}
    out = tuple(CheckinSequence(None if u is None else user_remap[u], tuple(remap[p] for p in ids))
                for u, ids in sequences)
    return CheckinDataset(pois, out)


@dataclass(frozen=True)
class UserSplit:
    """Leave-one-out split of one user's sequence."""

    user_id: int
    train: CheckinSequence
    validation: int
    test: int

    @property
    def visited(self):
        """POIs the user's model is trained on."""
        return frozenset(self.train.poi_ids)

    @property
    def history(self):
        return frozenset(self.train.poi_ids) | {self.validation}


@dataclass(frozen=True)
class DatasetSplits:
    """
    Attacker prior, reference dataset and per-user evaluation data.

    Attributes:
        attacker_prior (tuple): Anonymous sequences known to the attacker
        reference (tuple): Anonymous sequences shared for distillation
        users (tuple): UserSplit per retained user, by user id
        coverage_overflow (tuple): Names of pools that needed more than 15%
    """

    attacker_prior: Tuple[CheckinSequence, ...]
    reference: Tuple[CheckinSequence, ...]
    users: Tuple[UserSplit, ...]
    coverage_overflow: Tuple[str, ...] = ()

    def to_dict(self):
        return {
            'attacker_prior': [list(s.poi_ids) for s in self.attacker_prior],
            'reference': [list(s.poi_ids) for s in self.reference],
            'users': [
                {'user_id': u.user_id, 'train': list(u.train.poi_ids),
                 'validation': u.validation, 'test': u.test}
                for u in self.users
            ],
            'coverage_overflow': list(self.coverage_overflow),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            attacker_prior=tuple(CheckinSequence(None, tuple(s)) for s in data['attacker_prior']),
            reference=tuple(CheckinSequence(None, tuple(s)) for s in data['reference']),
            users=tuple(
                UserSplit(u['user_id'], CheckinSequence(u['user_id'], tuple(u['train'])),
                          u['validation'], u['test'])
                for u in data['users']
            ),
            coverage_overflow=tuple(data.get('coverage_overflow', ())),
        )


def pool_size(total, fraction):
    """Round half up, as the pool sizes are specified."""
    return int(math.floor(fraction * total + 0.5))


def _covering_pool(candidates, poi_sets, universe, target, name):
    """
    Pick a pool that covers ``universe`` then fill it to ``target``.

    Candidates are scanned in their (already shuffled) order; the greedy step
    takes the sequence adding the most uncovered POIs, first one on ties.
    """
    reachable = set().union(*(poi_sets[i] for i in candidates)) if candidates else set()
    missing = universe - reachable
    if missing:
        raise CoverageError(missing, pool=name)

    uncovered = set(universe)
    remaining = list(candidates)
    chosen = []
    while uncovered:
        best = max(remaining, key=lambda i: len(poi_sets[i] & uncovered))
        chosen.append(best)
        remaining.remove(best)
        uncovered -= poi_sets[best]
    overflow = len(chosen) > target
    if overflow:
        logger.warning("%s pool needs %d sequences to cover all POIs (target %d)", name, len(chosen), target)
    for i in remaining:
        if len(chosen) >= target:
            break
        chosen.append(i)
    return chosen, overflow


def split_dataset(dataset, seed):
    """
    Split sequences into attacker prior, reference and evaluation users.

    Both pools hold round(0.15 * N) sequences chosen at random subject to
    covering every POI: a greedy covering set is taken first, then the pool
    is filled randomly. Remaining sequences of length >= 4 get leave-one-out
    markers (last POI test, second to last validation).

    Args:
        dataset (CheckinDataset): Filtered data
        seed (int): Sampling seed

    Returns:
        DatasetSplits: Disjoint pools and user splits
    """
    sequences = dataset.sequences
    total = len(sequences)
    universe = {p.poi_id for p in dataset.pois}
    poi_sets = [set(s.poi_ids) for s in sequences]
    rng = np.random.default_rng(seed)
    order = [int(i) for i in rng.permutation(total)]

    prior_idx, prior_over = _covering_pool(order, poi_sets, universe,
                                           pool_size(total, PRIOR_FRACTION), "attacker_prior")
    taken = set(prior_idx)
    rest = [i for i in order if i not in taken]
    reference_idx, ref_over = _covering_pool(rest, poi_sets, universe,
                                             pool_size(total, REFERENCE_FRACTION), "reference")
    taken |= set(reference_idx)

    users = []
    dropped = 0
    for i in sorted((i for i in range(total) if i not in taken),
                    key=lambda i: (sequences[i].user_id is None, sequences[i].user_id or 0, i)):
        seq = sequences[i]
        if seq.user_id is None or len(seq) < 4:
            dropped += 1
            continue
        ids = seq.poi_ids
        users.append(UserSplit(seq.user_id, CheckinSequence(seq.user_id, ids[:-2]), ids[-2], ids[-1]))
    if dropped:
        logger.warning("%d sequences too short or anonymous for leave-one-out were dropped", dropped)

    overflow = tuple(name for name, flag in (("attacker_prior", prior_over), ("reference", ref_over)) if flag)
    return DatasetSplits(
        attacker_prior=tuple(sequences[i].anonymous() for i in prior_idx),
        reference=tuple(sequences[i].anonymous() for i in reference_idx),
        users=tuple(users),
        coverage_overflow=overflow,
    )


def save_json(path, data):
    """Write ``data`` as canonical JSON (sorted keys, fixed separators)."""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, sort_keys=True, indent=1)
        f.write("\n")
