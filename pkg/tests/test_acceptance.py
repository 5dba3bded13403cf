"""
End-to-end behaviour on the desk world (configs/desk.json, seeds 1-3).

Every test here trains full experiments and carries the ``slow`` marker.
"""

import copy
import json
import os

import numpy as np
import pytest

from src.config.settings import validate_config
from src.harness.pipeline import ExperimentRunner
from src.ptia.regions import detect_regions, region_scores

DESK = os.path.join(os.path.dirname(__file__), '..', 'configs', 'desk.json')
SEEDS = (1, 2, 3)

pytestmark = pytest.mark.slow


def desk_config(**sections):
    with open(DESK, encoding="utf-8") as f:
        data = json.load(f)
    data = copy.deepcopy(data)
    for name, value in sections.items():
        if isinstance(value, dict):
            data.setdefault(name, {}).update(value)
        else:
            data[name] = value
    return validate_config(data)


def run(config, root):
    return ExperimentRunner(config, str(root), version="test").run()


def mean_of(report, attack, key='f1', sweep_value=None, seed=None):
    values = [r[key] for r in report.rows
              if r['attack'] == attack and r['sweep_value'] == sweep_value and (seed is None or r['seed'] == seed)]
    assert values, f"no rows for {attack} at {sweep_value}"
    return float(np.mean(values))


def non_increasing(values):
    return all(b <= a for a, b in zip(values, values[1:]))


@pytest.fixture(scope="module")
def protocol_reports(tmp_path_factory):
    root = tmp_path_factory.mktemp("protocols")
    sharing = run(desk_config(), root / "sharing")
    distillation = run(desk_config(protocol='distillation', model={'latent_dims': [16, 32, 64]}),
                       root / "distillation")
    return {'model_sharing': sharing, 'distillation': distillation}


@pytest.mark.parametrize("protocol", ["model_sharing", "distillation"])
def test_attacks_rank_as_expected(protocol_reports, protocol):
    report = protocol_reports[protocol]
    f1 = {name: mean_of(report, name) for name in ('ptia', 'imia', 'kmeans', 'random')}
    assert f1['ptia'] > f1['imia'] > f1['kmeans'] > f1['random'], f1
    assert f1['ptia'] >= 1.5 * f1['kmeans'], f1


def test_distillation_leaks_less_than_model_sharing(protocol_reports):
    for seed in SEEDS:
        sharing = mean_of(protocol_reports['model_sharing'], 'ptia', seed=seed)
        distillation = mean_of(protocol_reports['distillation'], 'ptia', seed=seed)
        assert sharing >= distillation, seed


def test_regions_of_two_region_users_are_recovered(tmp_path):
    config = desk_config(attacks=['random'])
    runner = ExperimentRunner(config, str(tmp_path), version="test")
    jaccards = []
    ordered = []
    for seed in SEEDS:
        state = runner.run_seed(config, seed, until="train")
        for split in state.users:
            touched = state.region_map.regions_of(split.train.poi_ids)
            if len(touched) != 2:
                continue
            params = state.models[split.user_id]
            detected = detect_regions(params, state.init_spec, state.region_map,
                                      config.attack['region_noise_floor'])
            jaccards.append(len(detected & touched) / len(detected | touched))
            scores = {s.region_id: s.divergence for s in region_scores(params, state.init_spec, state.region_map)}
            untouched = [d for r, d in scores.items() if r not in touched]
            ordered.append(not untouched or max(untouched) < min(scores[r] for r in touched))
    assert jaccards
    assert np.mean(jaccards) >= 0.8
    assert np.mean(ordered) >= 0.9


def test_parameter_noise_trades_privacy_for_utility(tmp_path):
    lambdas = [0.0, 0.001, 0.01, 0.1]
    config = desk_config(attacks=['ptia'], defense={'kind': 'ldp'},
                         sweep={'key': 'defense.ldp_lambda', 'values': lambdas})
    report = run(config, tmp_path)
    f1 = [mean_of(report, 'ptia', sweep_value=v) for v in lambdas]
    hr = [mean_of(report, 'ptia', key='hr_at_k', sweep_value=v) for v in lambdas]
    assert non_increasing(f1), f1
    assert non_increasing(hr), hr
    assert f1[1] > 0.85 * f1[0]
    assert f1[3] < 0.6 * f1[0]


def test_adversarial_game_hides_sensitive_pois_cheaply(tmp_path):
    sensitive = {'sensitive_count': 10}
    plain = run(desk_config(attacks=['ptia'], defense=dict(sensitive, kind='none')), tmp_path / "none")
    agd = run(desk_config(attacks=['ptia'], defense=dict(sensitive, kind='agd', mu=0.6)), tmp_path / "agd")
    reset = run(desk_config(attacks=['ptia'], defense=dict(sensitive, kind='er')), tmp_path / "er")

    assert mean_of(agd, 'ptia', key='sensitive_f1') <= 0.5 * mean_of(plain, 'ptia', key='sensitive_f1')
    assert mean_of(agd, 'ptia', key='hr_at_k') >= 0.9 * mean_of(plain, 'ptia', key='hr_at_k')
    for seed in SEEDS:
        baseline = mean_of(plain, 'ptia', key='hr_at_k', seed=seed)
        agd_loss = baseline - mean_of(agd, 'ptia', key='hr_at_k', seed=seed)
        er_loss = baseline - mean_of(reset, 'ptia', key='hr_at_k', seed=seed)
        assert er_loss > agd_loss, seed


def test_more_shadow_sequences_help_until_a_plateau(tmp_path):
    counts = [1, 3, 5, 7, 9]
    config = desk_config(attacks=['ptia'], sweep={'key': 'attack.shadow_count', 'values': counts})
    report = run(config, tmp_path)
    f1 = [mean_of(report, 'ptia', sweep_value=v) for v in counts]
    assert all(b >= a for a, b in zip(f1, f1[1:])), f1
    assert abs(f1[-1] - f1[-2]) <= 0.05 * f1[-2]


def test_defense_weight_lowers_then_stabilizes_the_attack(tmp_path):
    weights = [0.2, 0.4, 0.6, 0.8, 1.0, 1.5]
    config = desk_config(attacks=['ptia'], defense={'kind': 'agd', 'sensitive_count': 10},
                         sweep={'key': 'defense.mu', 'values': weights})
    report = run(config, tmp_path)
    f1 = [mean_of(report, 'ptia', key='sensitive_f1', sweep_value=v) for v in weights]
    assert abs(f1[-1] - f1[-2]) <= 0.1 * f1[-2]
    assert f1[-1] < f1[0] and f1[-2] < f1[0]


def test_identical_runs_write_identical_reports(tmp_path):
    config = desk_config(run={'seeds': [1], 'max_users': 10})
    paths = []
    for name in ("first", "second"):
        runner = ExperimentRunner(config, str(tmp_path / name), version="test")
        runner.run()
        paths.append(os.path.join(runner.run_dir, "report.json"))
    with open(paths[0], "rb") as a, open(paths[1], "rb") as b:
        assert a.read() == b.read()
