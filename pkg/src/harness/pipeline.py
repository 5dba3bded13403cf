#!/usr/bin/env python3
"""
Experiment Pipeline

Runs the full protocol for every sweep value and seed:

    world -> train -> collab -> defend -> attack -> eval

Each stage is a barrier; users inside a stage may be processed by a thread
pool because every user draws from its own seed stream. Artifacts land in a
run directory named after the configuration hash.
"""

import hashlib
import json
import logging
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from src.collab.protocols import MODEL_SHARING, run_distillation, run_model_sharing
from src.config.defaults import APP_ID, APP_VERSION, DEFAULT_IMIA_QUANTILE
from src.config.settings import get_output_root, save_config, set_dotted, validate_config
from src.defend.agd import AgdConfig, train_with_agd
from src.defend.ldp import apply_ldp
from src.defend.probes import build_probe_sequences
from src.defend.reset import apply_er
from src.defend.sensitive import SensitivePoiSet, explicit_sensitive, global_frequency, select_sensitive
from src.evalkit.metrics import attack_f1, hr_at_k, mean_defined, sensitive_f1
from src.evalkit.report import EvalReport, emit_report
from src.geodata.dataset import filter_min_interactions, load_checkins_csv, save_json, split_dataset
from src.geodata.regions import cluster_regions
from src.harness.knowledge import KnowledgeGate, export_knowledge
from src.harness.synthetic import SyntheticWorldSpec, gen_synthetic, write_synthetic
from src.ptia.attack import (
    MirrorModel,
    PtiaConfig,
    mirror_attack_samples,
    pretrain_attack_models,
    ptia_on_model,
    resolve_knowledge,
)
from src.ptia.baselines import (
    baseline_imia,
    baseline_kmeans,
    baseline_random,
    calibrate_imia_quantile,
    mean_set_size,
)
from src.ptia.shadow_sequences import ShadowSequenceBank
from src.recsys.model import InitSpec, init_model
from src.recsys.snapshot import save_model
from src.recsys.trainer import TrainConfig, train_local
from src.utils.errors import SimulationError, StageError
from src.utils.seeding import derive_seed, stage_seed

logger = logging.getLogger(__name__)

STAGES = ("world", "train", "collab", "defend", "attack", "eval")

# Held-out users trained to calibrate the IMIA threshold
CALIBRATION_USERS = 10


def code_version():
    """``git describe`` of the source tree, or the package version outside a checkout."""
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True, text=True, timeout=10, check=True,
        ).stdout.strip()
        return described or APP_VERSION
    except (OSError, subprocess.SubprocessError):
        return APP_VERSION


def assign_latent_dims(user_ids, dims, seed):
    """
    Give each user a latent dimension so every entry of ``dims`` gets an
    equal share (the first dims absorb the remainder), shuffled by seed.

    Returns:
        dict: user_id -> d
    """
    user_ids = sorted(user_ids)
    dims = list(dims)
    labels = [dims[i % len(dims)] for i in range(len(user_ids))]
    labels.sort(key=dims.index)
    order = np.random.default_rng(seed).permutation(len(user_ids))
    return {user_ids[int(j)]: labels[i] for i, j in enumerate(order)}


def ingest(csv_path, min_interactions, out_path=None):
    """Read and filter a check-in CSV, optionally saving the result as JSON."""
    dataset = filter_min_interactions(load_checkins_csv(csv_path), min_interactions)
    if out_path:
        save_json(out_path, dataset.to_dict())
    return dataset


def _variant_label(key, value):
    return "base" if key is None else f"{key}={json.dumps(value)}"


@dataclass
class SeedState:
    """Everything one seed of one sweep value produces, stage by stage."""

    seed: int
    config: Any
    out_dir: str
    dataset: Any = None
    pois: Any = None
    region_map: Any = None
    splits: Any = None
    users: list = field(default_factory=list)
    init_spec: Optional[InitSpec] = None
    dims: Dict[int, int] = field(default_factory=dict)
    init_models: Dict[int, Any] = field(default_factory=dict)
    sensitive: Dict[int, SensitivePoiSet] = field(default_factory=dict)
    models: Dict[int, Any] = field(default_factory=dict)
    gate: Optional[KnowledgeGate] = None
    defender_samples: Dict[int, list] = field(default_factory=dict)
    defenses: Dict[int, Any] = field(default_factory=dict)
    bank: Optional[ShadowSequenceBank] = None
    verdicts: Dict[str, Dict[int, Any]] = field(default_factory=dict)

    @property
    def train_config(self):
        return TrainConfig.from_dict(self.config.train)

    def sequences_of(self, user_id):
        return [self.split_of(user_id).train]

    def split_of(self, user_id):
        return next(u for u in self.users if u.user_id == user_id)


class ExperimentRunner:
    """
    Runs a validated experiment configuration.

    Args:
        config (ExperimentConfig): What to run
        output_root (str, optional): Parent of the run directory
        version (str, optional): Version string embedded in outputs
    """

    def __init__(self, config, output_root=None, version=None):
        self.config = config
        self.config_hash = config.config_hash()
        self.version = version or code_version()
        root = output_root or get_output_root(config)
        self.run_dir = os.path.join(root, f"{APP_ID}-{self.config_hash[:16]}")
        self._worlds = {}

    # Helpers

    def _map(self, fn, items):
        items = list(items)
        workers = self.config.run['workers']
        if workers <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    def _stage(self, name, fn, state):
        logger.info("seed %d: stage %s", state.seed, name)
        try:
            fn(state)
        except StageError:
            raise
        except (SimulationError, ValueError, ArithmeticError, OSError) as e:
            raise StageError(name, e) from e

    def _meta(self, **extra):
        meta = {'config_hash': self.config_hash, 'version': self.version}
        meta.update(extra)
        return meta

    def variants(self):
        """(sweep value, config) pairs; a single (None, config) without a sweep."""
        sweep = self.config.sweep
        if sweep is None:
            return [(None, self.config)]
        base = self.config.to_dict()
        base['sweep'] = None
        out = []
        for value in sweep['values']:
            data = json.loads(json.dumps(base))
            set_dotted(data, sweep['key'], value)
            out.append((value, validate_config(data)))
        return out

    # Stages

    def stage_world(self, state):
        cfg = state.config
        # Load or generate the check-ins
        if cfg.dataset['source'] == 'synthetic':
            spec = SyntheticWorldSpec.from_dict(cfg.dataset['synthetic'])
            key = json.dumps(spec.to_dict(), sort_keys=True)
            if key not in self._worlds:
                world_dir = os.path.join(self.run_dir, "world", hashlib.sha256(key.encode()).hexdigest()[:12])
                os.makedirs(world_dir, exist_ok=True)
                csv_path = os.path.join(world_dir, "checkins.csv")
                write_synthetic(gen_synthetic(spec), csv_path, os.path.join(world_dir, "truth.json"))
                self._worlds[key] = load_checkins_csv(csv_path)
            raw = self._worlds[key]
        else:
            raw = load_checkins_csv(cfg.dataset['csv_path'])

        # Filter and split
        state.dataset = filter_min_interactions(raw, cfg.dataset['min_interactions'])
        state.pois = state.dataset.index()
        state.region_map = cluster_regions(state.dataset.pois, cfg.attack['regions'], stage_seed(state.seed, "world"))
        state.splits = split_dataset(state.dataset, stage_seed(state.seed, "split"))
        state.users = list(state.splits.users[:cfg.run['max_users']])
        if not state.users:
            raise SimulationError("no user is left for evaluation after splitting")
        save_json(os.path.join(state.out_dir, "regions.json"), self._meta(regions=state.region_map.to_dict()))
        save_json(os.path.join(state.out_dir, "splits.json"), self._meta(splits=state.splits.to_dict()))
        logger.info("seed %d: %d POIs, %d users, %d reference sequences", state.seed,
                    state.pois.poi_count, len(state.users), len(state.splits.reference))

    def _select_sensitive(self, state):
        defense = state.config.defense
        if not state.config.sensitive_enabled:
            return
        frequency = global_frequency(state.dataset.sequences, state.pois.poi_count)
        for split in state.users:
            if defense['sensitive_pois']:
                chosen = explicit_sensitive(split.visited, defense['sensitive_pois'], split.user_id)
            else:
                chosen = select_sensitive(split.visited, frequency, defense['sensitive_count'],
                                          stage_seed(state.seed, "sensitive", split.user_id), split.user_id)
            state.sensitive[split.user_id] = chosen
        save_json(os.path.join(state.out_dir, "sensitive.json"),
                  self._meta(sensitive=[s.to_dict() for _, s in sorted(state.sensitive.items())]))

    def stage_train(self, state):
        cfg = state.config
        state.init_spec = InitSpec(std=cfg.model['init_std'], seed=derive_seed(state.seed, cfg.model['init_seed']))
        uids = [u.user_id for u in state.users]
        if cfg.protocol == MODEL_SHARING:
            state.dims = {u: cfg.model['latent_dim'] for u in uids}
        else:
            state.dims = assign_latent_dims(uids, cfg.model['latent_dims'], stage_seed(state.seed, "train"))
        state.init_models = {d: init_model(state.pois.poi_count, d, state.init_spec)
                             for d in sorted(set(state.dims.values()))}
        self._select_sensitive(state)
        train_config = state.train_config

        if cfg.defense['kind'] == 'agd':
            self._train_agd(state, train_config)
            return

        def train(uid):
            return train_local(state.init_models[state.dims[uid]], state.sequences_of(uid), train_config,
                               stage_seed(state.seed, "train", uid))

        state.models = dict(zip(uids, self._map(train, uids)))

    def _ptia_config(self, state):
        attack = state.config.attack
        return PtiaConfig(
            shadow_count=attack['shadow_count'], shadow_dim=attack['shadow_dim'],
            shadow_window=attack['shadow_window'], noise_floor=attack['region_noise_floor'],
            shadow_epochs=attack['shadow_epochs'], shadow_learning_rate=attack['shadow_learning_rate'],
        )

    def _bank(self, state):
        if state.bank is None:
            state.bank = ShadowSequenceBank(list(state.splits.attacker_prior), state.pois,
                                            stage_seed(state.seed, "shadow"))
        return state.bank

    def _collaborate(self, state, models, sequences, regions, run_seed, defenses=None):
        cfg = state.config
        if cfg.protocol == MODEL_SHARING:
            return run_model_sharing(models, sequences, regions, state.train_config, cfg.collab['rounds'],
                                     cfg.collab['group_size'], run_seed, mapper=self._map, defenses=defenses)
        return run_distillation(models, sequences, regions, list(state.splits.reference), state.train_config,
                                cfg.collab['rounds'], cfg.collab['group_size'], cfg.collab['distill_weight'],
                                run_seed, mapper=self._map, defenses=defenses)

    def _mirror_population(self, state, collaborate=True, d=None):
        """
        Public models trained on single prior-pool sequences like members.

        With ``collaborate`` the mirrors also run the configured protocol
        among themselves, and under distillation only shadow models of their
        soft decisions are kept, as for victims.

        Returns:
            list: MirrorModel objects
        """
        cfg = state.config
        public_seed = stage_seed(state.seed, "public")
        prior = list(state.splits.attacker_prior)
        order = np.random.default_rng(public_seed).permutation(len(prior))
        chosen = [prior[int(i)] for i in order[:cfg.attack['mirror_users']]]
        ids = list(range(len(chosen)))
        if d is not None:
            dims = {i: d for i in ids}
        elif cfg.protocol == MODEL_SHARING:
            dims = {i: cfg.model['latent_dim'] for i in ids}
        else:
            dims = assign_latent_dims(ids, cfg.model['latent_dims'], public_seed)
        starts = {k: init_model(state.pois.poi_count, k, state.init_spec) for k in sorted(set(dims.values()))}

        def train(i):
            return train_local(starts[dims[i]], [chosen[i]], state.train_config, stage_seed(state.seed, "public", i))

        models = dict(zip(ids, self._map(train, ids)))
        if collaborate:
            models = self._collaborate(state, models, {i: [chosen[i]] for i in ids},
                                       {i: state.region_map.regions_of(chosen[i].poi_ids) for i in ids}, public_seed)
        if not collaborate or cfg.protocol == MODEL_SHARING:
            return [MirrorModel(models[i], state.init_spec, chosen[i]) for i in ids]

        # Distillation mirrors are seen through shadow models
        reference = list(state.splits.reference)
        ptia_config = self._ptia_config(state)

        def shadow(i):
            seed = stage_seed(state.seed, "public", i)
            knowledge = export_knowledge(cfg.protocol, models[i], reference)
            params, origin = resolve_knowledge(knowledge, reference, state.init_spec, ptia_config, seed)
            return MirrorModel(params, origin, chosen[i])

        return self._map(shadow, ids)

    def _defender_samples(self, state, d):
        if d not in state.defender_samples:
            mirrors = self._mirror_population(state, collaborate=False, d=d)
            bank = self._bank(state)
            ptia_config = self._ptia_config(state)
            public_seed = stage_seed(state.seed, "public")
            state.defender_samples[d] = [
                s for i, m in enumerate(mirrors)
                for s in mirror_attack_samples(m, bank, state.region_map, ptia_config, derive_seed(public_seed, i))
            ]
        return state.defender_samples[d]

    def _train_agd(self, state, train_config):
        defense = state.config.defense
        agd = AgdConfig(mu=defense['mu'], unrelated_count=defense['unrelated_count'],
                        pretrain_epochs=defense['pretrain_epochs'], max_epochs=defense['max_epochs'],
                        tolerance=defense['tolerance'], attacker_learning_rate=state.config.attack['mlp_learning_rate'])
        probes = build_probe_sequences(state.pois, stage_seed(state.seed, "probe"))
        for d in sorted(set(state.dims.values())):
            self._defender_samples(state, d)
        empty = SensitivePoiSet(None, frozenset())

        def train(uid):
            d = state.dims[uid]
            return train_with_agd(state.init_models[d], state.sequences_of(uid), state.sensitive.get(uid, empty),
                                  probes, agd, train_config, state.defender_samples[d],
                                  stage_seed(state.seed, "train", uid))

        uids = [u.user_id for u in state.users]
        state.models = {}
        for uid, (params, term) in zip(uids, self._map(train, uids)):
            state.models[uid] = params
            # The game keeps running through the collaboration rounds
            if agd.mu > 0 and term.sensitive_ids:
                state.defenses[uid] = term

    def stage_collab(self, state):
        sequences = {u.user_id: state.sequences_of(u.user_id) for u in state.users}
        regions = {u.user_id: state.region_map.regions_of(u.train.poi_ids) for u in state.users}
        state.models = self._collaborate(state, state.models, sequences, regions, state.seed, state.defenses)

    def stage_defend(self, state):
        cfg = state.config
        defense = cfg.defense
        kind = defense['kind']
        provenance = {'kind': kind}
        # Local defense
        if kind == 'ldp':
            provenance['ldp_lambda'] = defense['ldp_lambda']
            state.models = {uid: apply_ldp(p, defense['ldp_lambda'], stage_seed(state.seed, "defense", uid))
                            for uid, p in state.models.items()}
        elif kind == 'er':
            provenance['sensitive_count'] = defense['sensitive_count']
            empty = SensitivePoiSet(None, frozenset())
            state.models = {uid: apply_er(p, state.init_models[state.dims[uid]], state.sensitive.get(uid, empty))
                            for uid, p in state.models.items()}
        elif kind == 'agd':
            provenance.update(mu=defense['mu'], sensitive_count=defense['sensitive_count'])

        # Publish what the protocol lets leave the device
        state.gate = KnowledgeGate(cfg.protocol)
        reference = list(state.splits.reference)
        shared_dir = os.path.join(state.out_dir, "shared")
        os.makedirs(shared_dir, exist_ok=True)
        for uid in sorted(state.models):
            knowledge = export_knowledge(cfg.protocol, state.models[uid], reference)
            state.gate.publish(uid, knowledge)
            meta = self._meta(user_id=uid, latent_dim=state.dims[uid], protocol=cfg.protocol, defense=provenance)
            if cfg.protocol == MODEL_SHARING:
                save_model(os.path.join(shared_dir, f"user-{uid:05d}.pmod"), knowledge, meta=meta)
            else:
                knowledge.save(os.path.join(shared_dir, f"user-{uid:05d}.psds"), meta=meta)

    def _imia_quantile(self, state):
        quantile = state.config.attack['imia_quantile']
        if quantile != 'calibrate':
            return quantile
        held_out = list(state.splits.users[state.config.run['max_users']:])[:CALIBRATION_USERS]
        if not held_out:
            logger.warning("no held-out users to calibrate IMIA; using quantile %.2f", DEFAULT_IMIA_QUANTILE)
            return DEFAULT_IMIA_QUANTILE
        d = state.config.model['latent_dim']
        start = init_model(state.pois.poi_count, d, state.init_spec)
        models = self._map(lambda s: train_local(start, [s.train], state.train_config,
                                                 stage_seed(state.seed, "eval", s.user_id)), held_out)
        return calibrate_imia_quantile(models, [s.visited for s in held_out], state.init_spec)

    def stage_attack(self, state):
        cfg = state.config
        attacks = cfg.attacks
        reference = list(state.splits.reference)
        ptia_config = self._ptia_config(state)
        attack_dir = os.path.join(state.out_dir, "attack")
        os.makedirs(attack_dir, exist_ok=True)

        # Attacker preparation
        mlps = {}
        bank = None
        if 'ptia' in attacks:
            bank = self._bank(state)
            mlps = pretrain_attack_models(self._mirror_population(state), bank, state.region_map, ptia_config,
                                          stage_seed(state.seed, "public"), cfg.attack['mlp_epochs'],
                                          cfg.attack['mlp_learning_rate'])
            for d, mlp in mlps.items():
                mlp.save(os.path.join(attack_dir, f"attacker-d{d}.pmlp"), meta=self._meta(latent_dim=d))

        quantile = self._imia_quantile(state) if 'imia' in attacks else None
        mean_size = mean_set_size([u.visited for u in state.users])
        needs_model = bool({'ptia', 'kmeans', 'imia'} & set(attacks))
        read = state.gate.model_of if cfg.protocol == MODEL_SHARING else state.gate.soft_decisions_of

        def attack(uid):
            seed = stage_seed(state.seed, "attack", uid)
            verdicts = {}
            view = origin = None
            if needs_model:
                view, origin = resolve_knowledge(read(uid), reference, state.init_spec,
                                                 replace(ptia_config, seed=seed), seed)
            for name in attacks:
                if name == 'ptia':
                    verdict = ptia_on_model(uid, view, origin, state.region_map, bank, mlps,
                                            replace(ptia_config, seed=seed))
                    verdicts[name] = (verdict.predicted, verdict.detected_regions, verdict.to_dict())
                    continue
                if name == 'random':
                    predicted = baseline_random(range(state.pois.poi_count), mean_size, derive_seed(seed, 1))
                elif name == 'kmeans':
                    predicted = baseline_kmeans(view, derive_seed(seed, 2))
                else:
                    predicted = baseline_imia(view, origin, quantile)
                detected = frozenset(state.region_map.regions_of(predicted))
                verdicts[name] = (frozenset(predicted), detected,
                                  {'user_id': uid, 'predicted': sorted(predicted), 'detected_regions': sorted(detected)})
            return verdicts

        uids = [u.user_id for u in state.users]
        for uid, verdicts in zip(uids, self._map(attack, uids)):
            for name, verdict in verdicts.items():
                state.verdicts.setdefault(name, {})[uid] = verdict
        save_json(os.path.join(attack_dir, "verdicts.json"), self._meta(verdicts={
            name: [v[2] for _, v in sorted(by_user.items())] for name, by_user in state.verdicts.items()}))

    def evaluate(self, state, report, sweep_value):
        cfg = state.config
        hr, hits = hr_at_k(state.models, state.users, state.pois, cfg.eval['top_k'], cfg.eval['candidates'])
        for name in cfg.attacks:
            f1s, sensitive_scores = [], []
            for split in state.users:
                predicted, detected, _ = state.verdicts[name][split.user_id]
                f1 = attack_f1(predicted, split.visited, state.region_map, detected, cfg.attack['f1_mode'])
                hidden = state.sensitive.get(split.user_id)
                sens = sensitive_f1(predicted, hidden) if hidden else None
                f1s.append(f1)
                sensitive_scores.append(sens)
                report.users.append({
                    'sweep_value': sweep_value, 'seed': state.seed, 'attack': name, 'user_id': split.user_id,
                    'f1': f1, 'sensitive_f1': sens, 'hit': hits[split.user_id].hit,
                })
            report.add_row(sweep_value, state.seed, name, mean_defined(f1s), mean_defined(sensitive_scores),
                           hr, len(state.users))
            logger.info("seed %d %s: F1 %.4f, HR@%d %.4f", state.seed, name,
                        mean_defined(f1s) or 0.0, cfg.eval['top_k'], hr)

    # Driver

    def run_seed(self, config, seed, sweep_value=None, until="eval", report=None):
        """
        Run one seed of one configuration variant through ``until``.

        Returns:
            SeedState: Everything produced
        """
        label = _variant_label(self.config.sweep['key'] if self.config.sweep else None, sweep_value)
        out_dir = os.path.join(self.run_dir, label, f"seed-{seed}")
        os.makedirs(out_dir, exist_ok=True)
        state = SeedState(seed, config, out_dir)
        stages = (
            ("world", self.stage_world), ("train", self.stage_train), ("collab", self.stage_collab),
            ("defend", self.stage_defend), ("attack", self.stage_attack),
        )
        for name, fn in stages:
            self._stage(name, fn, state)
            if name == until:
                self._persist_models(state, name)
                return state
        if report is not None:
            self._stage("eval", lambda s: self.evaluate(s, report, sweep_value), state)
        return state

    def _persist_models(self, state, stage):
        if not state.models:
            return
        model_dir = os.path.join(state.out_dir, f"models-{stage}")
        os.makedirs(model_dir, exist_ok=True)
        for uid, params in sorted(state.models.items()):
            save_model(os.path.join(model_dir, f"user-{uid:05d}.pmod"), params,
                       meta=self._meta(user_id=uid, stage=stage, latent_dim=params.latent_dim))

    def run(self, until="eval"):
        """
        Run every sweep value and seed.

        Args:
            until (str): Last stage to run; the report is produced only
                when ``until`` is "eval"

        Returns:
            EvalReport or None
        """
        if until not in STAGES:
            raise ValueError(f"unknown stage '{until}'; expected one of {STAGES}")
        # Save the validated config
        os.makedirs(self.run_dir, exist_ok=True)
        save_config(self.config, os.path.join(self.run_dir, "config.json"))
        report = None
        if until == "eval":
            report = EvalReport(self.config_hash, self.version, self.config.to_dict(),
                                self.config.sweep['key'] if self.config.sweep else None,
                                self.config.eval['top_k'])
        try:
            for value, variant in self.variants():
                for seed in variant.run['seeds']:
                    self.run_seed(variant, seed, value, until, report)
        except StageError as e:
            save_json(os.path.join(self.run_dir, "failure.json"),
                      self._meta(stage=e.stage, error=str(e.cause), error_type=type(e.cause).__name__))
            logger.error("run aborted: %s", e)
            raise
        if report is not None:
            emit_report(report, self.run_dir)
        return report


def run_experiment(config, output_root=None, until="eval"):
    """
    Run an experiment end to end.

    Args:
        config (ExperimentConfig): Validated configuration
        output_root (str, optional): Parent of the run directory

    Returns:
        EvalReport: Seed-by-seed metrics (None when stopping early)
    """
    return ExperimentRunner(config, output_root).run(until)


def generate_world(spec_data, csv_path, truth_path=None):
    """Generate a synthetic world and write it as a check-in CSV."""
    world = gen_synthetic(SyntheticWorldSpec.from_dict(spec_data or {}))
    write_synthetic(world, csv_path, truth_path)
    return world
