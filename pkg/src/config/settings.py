#!/usr/bin/env python3
"""
Settings Management

This module handles loading, validating, overriding and saving experiment
configurations. A configuration file only needs the keys it changes; it is
merged over the defaults before validation.
"""

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional

from src.config.defaults import DEFAULT_CONFIG, DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV, SUPPORTED_DIMS
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

PROTOCOLS = ("model_sharing", "distillation")
ATTACKS = ("ptia", "random", "kmeans", "imia")
DEFENSES = ("none", "ldp", "er", "agd")
DATA_SOURCES = ("synthetic", "csv")
F1_MODES = ("per_region", "global")

# Settings that do not change results
EXECUTION_KEYS = ("workers", "output_dir")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A validated experiment configuration.

    Sections mirror the configuration file; ``sweep`` is either None or
    ``{'key': 'section.name', 'values': [...]}``.
    """

    dataset: Dict[str, Any]
    protocol: str
    attacks: tuple
    defense: Dict[str, Any]
    model: Dict[str, Any]
    train: Dict[str, Any]
    collab: Dict[str, Any]
    attack: Dict[str, Any]
    eval: Dict[str, Any]
    run: Dict[str, Any]
    sweep: Optional[Dict[str, Any]] = None

    def to_dict(self):
        data = {
            'dataset': self.dataset,
            'protocol': self.protocol,
            'attacks': list(self.attacks),
            'defense': self.defense,
            'model': self.model,
            'train': self.train,
            'collab': self.collab,
            'attack': self.attack,
            'eval': self.eval,
            'run': self.run,
            'sweep': self.sweep,
        }
        return copy.deepcopy(data)

    def config_hash(self):
        """SHA-256 of the canonical JSON form, ignoring where and how wide the run executes."""
        data = self.to_dict()
        for key in EXECUTION_KEYS:
            data["run"].pop(key, None)
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_value(self, key, value):
        """Copy with one dotted key replaced, revalidated."""
        data = self.to_dict()
        set_dotted(data, key, value)
        return validate_config(data)

    @property
    def sensitive_enabled(self):
        return bool(self.defense['sensitive_pois']) or self.defense['sensitive_count'] > 0


def merge_config(base, override):
    """
    Recursively merge ``override`` into a copy of ``base``.

    Args:
        base (dict): Defaults
        override (dict): Values read from a file or the command line

    Returns:
        dict: Merged configuration
    """
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def set_dotted(data, key, value):
    """Set ``data['a']['b'] = value`` for key ``'a.b'``."""
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            raise ConfigError(f"unknown configuration key '{key}'")
        node = child
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key '{key}'")
    node[parts[-1]] = value


def get_dotted(data, key):
    node = data
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown configuration key '{key}'")
        node = node[part]
    return node


def parse_override(text):
    """
    Parse a ``key=value`` override.

    The value is read as JSON and kept as a plain string if that fails.

    Returns:
        tuple: (dotted key, value)
    """
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(data, overrides):
    """Apply ``key=value`` strings to a configuration dictionary in place."""
    for text in overrides or ():
        key, value = parse_override(text)
        set_dotted(data, key, value)
    return data


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


def _number(section, name, minimum=None, maximum=None, integer=False):
    value = section.get(name)
    kind = int if integer else (int, float)
    _require(isinstance(value, kind) and not isinstance(value, bool), f"'{name}' must be a number, got {value!r}")
    _require(minimum is None or value >= minimum, f"'{name}' must be >= {minimum}, got {value}")
    _require(maximum is None or value <= maximum, f"'{name}' must be <= {maximum}, got {value}")


def validate_config(data):
    """
    Check every field against its supported values.

    Args:
        data (dict): Merged configuration

    Returns:
        ExperimentConfig: The validated configuration

    Raises:
        ConfigError: Naming the first offending field
    """
    data = merge_config(DEFAULT_CONFIG, data)
    unknown = set(data) - set(DEFAULT_CONFIG)
    _require(not unknown, f"unknown configuration sections: {sorted(unknown)}")

    dataset = data['dataset']
    _require(dataset['source'] in DATA_SOURCES, f"dataset.source must be one of {DATA_SOURCES}")
    _require(dataset['source'] != 'csv' or dataset['csv_path'], "dataset.csv_path is required for csv input")
    _number(dataset, 'min_interactions', 1, integer=True)

    _require(data['protocol'] in PROTOCOLS, f"protocol must be one of {PROTOCOLS}")

    attacks = data['attacks']
    if isinstance(attacks, str):
        attacks = [attacks]
    _require(attacks and all(a in ATTACKS for a in attacks), f"attacks must be drawn from {ATTACKS}")

    defense = data['defense']
    _require(defense['kind'] in DEFENSES, f"defense.kind must be one of {DEFENSES}")
    _number(defense, 'ldp_lambda', 0)
    _number(defense, 'sensitive_count', 0, integer=True)
    _number(defense, 'mu', 0)
    _number(defense, 'unrelated_count', 1, integer=True)
    _number(defense, 'pretrain_epochs', 0, integer=True)
    _number(defense, 'max_epochs', 0, integer=True)
    _number(defense, 'tolerance', 0)
    pinned = defense['sensitive_pois']
    _require(pinned is None or (isinstance(pinned, list) and all(isinstance(p, int) for p in pinned)),
             "defense.sensitive_pois must be null or a list of POI ids")

    model = data['model']
    _require(model['latent_dim'] in SUPPORTED_DIMS, f"model.latent_dim must be one of {SUPPORTED_DIMS}")
    _require(model['latent_dims'] and all(d in SUPPORTED_DIMS for d in model['latent_dims']),
             f"model.latent_dims must be drawn from {SUPPORTED_DIMS}")
    _number(model, 'init_std', 0)
    _require(model['init_std'] > 0, "model.init_std must be positive")
    _number(model, 'init_seed', 0, integer=True)

    train = data['train']
    _number(train, 'learning_rate', 0)
    _number(train, 'batch_size', 1, integer=True)
    _number(train, 'max_epochs', 0, integer=True)
    _number(train, 'dropout', 0)
    _require(train['dropout'] < 1, "train.dropout must be < 1")

    collab = data['collab']
    _number(collab, 'rounds', 0, integer=True)
    _number(collab, 'group_size', 2, integer=True)
    _number(collab, 'distill_weight', 0)

    attack = data['attack']
    _number(attack, 'shadow_count', 1, integer=True)
    _number(attack, 'shadow_window', 1, integer=True)
    _number(attack, 'mirror_users', 1, integer=True)
    _require(attack['shadow_dim'] in SUPPORTED_DIMS, f"attack.shadow_dim must be one of {SUPPORTED_DIMS}")
    _number(attack, 'regions', 1, integer=True)
    _number(attack, 'region_noise_floor', 0)
    _require(attack['imia_quantile'] == 'calibrate' or (
        isinstance(attack['imia_quantile'], (int, float)) and 0 <= attack['imia_quantile'] < 1),
        "attack.imia_quantile must be in [0, 1) or 'calibrate'")
    _number(attack, 'mlp_epochs', 1, integer=True)
    _number(attack, 'mlp_learning_rate', 0)
    _number(attack, 'shadow_epochs', 1, integer=True)
    _number(attack, 'shadow_learning_rate', 0)
    _require(attack['f1_mode'] in F1_MODES, f"attack.f1_mode must be one of {F1_MODES}")

    _number(data['eval'], 'top_k', 1, integer=True)
    _number(data['eval'], 'candidates', 1, integer=True)

    run = data['run']
    _require(run['seeds'] and all(isinstance(s, int) for s in run['seeds']), "run.seeds must be a list of integers")
    _number(run, 'max_users', 1, integer=True)
    _number(run, 'workers', 1, integer=True)

    sweep = data.get('sweep')
    if sweep is not None:
        _require(isinstance(sweep, dict) and set(sweep) == {'key', 'values'}, "sweep must be {key, values}")
        _require(isinstance(sweep['values'], list) and sweep['values'], "sweep.values must be a non-empty list")
        _require(not sweep['key'].startswith(("sweep", "run.seeds")), f"cannot sweep '{sweep['key']}'")
        get_dotted(data, sweep['key'])
        for value in sweep['values']:
            trial = copy.deepcopy(data)
            trial['sweep'] = None
            set_dotted(trial, sweep['key'], value)
            validate_config(trial)

    return ExperimentConfig(
        dataset=dataset, protocol=data['protocol'], attacks=tuple(attacks), defense=defense, model=model,
        train=train, collab=collab, attack=attack, eval=data['eval'], run=run, sweep=sweep,
    )


def load_config(path=None, overrides=None):
    """
    Load, merge and validate an experiment configuration.

    Args:
        path (str, optional): JSON file; defaults only if omitted
        overrides (list, optional): ``key=value`` strings applied last

    Returns:
        ExperimentConfig: Validated configuration
    """
    data = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = merge_config(data, json.load(f))
        except (json.JSONDecodeError, OSError) as e:
            raise ConfigError(f"cannot read configuration {path}: {e}") from e
    apply_overrides(data, overrides)
    config = validate_config(data)
    logger.debug("configuration %s loaded from %s", config.config_hash()[:12], path or "defaults")
    return config


def save_config(config, path):
    """
    Save a configuration as canonical JSON.

    Args:
        config (ExperimentConfig): Configuration to save
        path (str): Output file
    """
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(config.to_dict(), f, sort_keys=True, indent=2)
        f.write("\n")


def get_output_root(config=None):
    """
    Directory under which run directories are created.

    ``run.output_dir`` wins, then the environment variable, then the
    default relative directory.
    """
    if config is not None and config.run.get('output_dir'):
        return config.run['output_dir']
    return os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)
