import copy
import csv
import json
import os
from collections import Counter

import pytest

from src.collab.distillation import SoftDecisionSet
from src.config.settings import validate_config
from src.geodata.dataset import CheckinDataset, load_checkins_csv
from src.geodata.pois import CheckinSequence, PoiRecord
from src.harness.knowledge import MODEL, SOFT_DECISIONS, KnowledgeGate, export_knowledge
from src.harness.pipeline import ExperimentRunner, assign_latent_dims, code_version, run_experiment
from src.harness.synthetic import SyntheticWorldSpec, gen_synthetic, write_checkins_csv, write_synthetic
from src.main import main
from src.recsys.model import ModelParams
from src.utils.errors import AccessViolation, InputError, ProtocolError, StageError

REFERENCE = [CheckinSequence(None, (0, 1, 2)), CheckinSequence(None, (4, 5))]

# A world small enough to run every stage in seconds. One category keeps
# shadow-sequence fabrication always feasible.
TINY = {
    'dataset': {
        'min_interactions': 2,
        'synthetic': {'users': 80, 'pois': 30, 'regions': 3, 'categories': 1, 'max_regions_per_user': 2,
                      'favorites_per_region': 5, 'mean_length': 16, 'min_length': 8, 'seed': 3},
    },
    'attacks': ['ptia', 'random', 'kmeans', 'imia'],
    'model': {'latent_dim': 8, 'latent_dims': [8, 16]},
    'train': {'learning_rate': 0.1, 'batch_size': 8, 'max_epochs': 2, 'dropout': 0.0},
    'collab': {'rounds': 1, 'group_size': 2},
    'attack': {'shadow_count': 2, 'shadow_dim': 8, 'regions': 3, 'mlp_epochs': 5, 'shadow_epochs': 2},
    'defense': {'sensitive_count': 2, 'pretrain_epochs': 3, 'max_epochs': 2},
    'eval': {'candidates': 20},
    'run': {'seeds': [1], 'max_users': 5},
}


def tiny_config(**sections):
    data = copy.deepcopy(TINY)
    for name, value in sections.items():
        if isinstance(value, dict):
            data.setdefault(name, {}).update(value)
        else:
            data[name] = value
    return validate_config(data)


def test_synthetic_world_is_reproducible():
    spec = SyntheticWorldSpec(users=20, pois=30, regions=3, categories=4, seed=5)
    world = gen_synthetic(spec)
    assert world == gen_synthetic(spec)
    assert world != gen_synthetic(SyntheticWorldSpec(users=20, pois=30, regions=3, categories=4, seed=6))
    assert len(world.dataset.sequences) == 20 and len(world.dataset.pois) == 30
    assert world.planted_region[:4] == (0, 1, 2, 0)
    for user, seq in enumerate(world.dataset.sequences):
        assert len(seq) >= spec.min_length
        assert 1 <= len(world.user_regions[user]) <= spec.max_regions_per_user
        assert set(world.visited[user]) == set(seq.poi_ids)
        assert {world.planted_region[p] for p in seq.poi_ids} == set(world.user_regions[user])


def test_single_region_world():
    world = gen_synthetic(SyntheticWorldSpec(users=5, pois=12, regions=1, seed=1))
    assert set(world.planted_region) == {0}
    assert all(regions == (0,) for regions in world.user_regions.values())


def test_synthetic_spec_validates():
    with pytest.raises(InputError):
        SyntheticWorldSpec(regions=10, pois=5)
    with pytest.raises(InputError):
        SyntheticWorldSpec(users=0)
    spec = SyntheticWorldSpec.from_dict({'users': 9})
    assert spec.users == 9 and spec.to_dict()['origin'] == list(spec.origin)


def test_checkin_csv_round_trip(tmp_path):
    pois = (PoiRecord(0, 0, 40.7, -74.0), PoiRecord(1, 1, 40.71, -74.01),
            PoiRecord(2, 0, 40.72, -74.02), PoiRecord(3, 1, 40.73, -74.03))
    dataset = CheckinDataset(pois, (CheckinSequence(0, (0, 1, 2)), CheckinSequence(1, (3, 2, 1))))
    path = str(tmp_path / "checkins.csv")
    write_checkins_csv(dataset, path)
    loaded = load_checkins_csv(path)
    assert loaded.sequences == dataset.sequences
    assert [p.category_id for p in loaded.pois] == [0, 1, 0, 1]
    for a, b in zip(loaded.pois, pois):
        assert a.lat == pytest.approx(b.lat, abs=1e-8) and a.lon == pytest.approx(b.lon, abs=1e-8)


def test_write_synthetic_with_truth(tmp_path):
    world = gen_synthetic(SyntheticWorldSpec(users=4, pois=8, regions=2, seed=2))
    write_synthetic(world, str(tmp_path / "c.csv"), str(tmp_path / "truth.json"))
    with open(tmp_path / "truth.json", encoding="utf-8") as f:
        truth = json.load(f)
    assert truth['poi_region'] == list(world.planted_region)
    assert sorted(truth['users']) == ["0", "1", "2", "3"]
    with open(tmp_path / "c.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == sum(len(s) for s in world.dataset.sequences)


def test_gate_enforces_what_each_protocol_exposes(model):
    gate = KnowledgeGate("model_sharing")
    gate.publish(3, export_knowledge("model_sharing", model, REFERENCE))
    assert isinstance(gate.model_of(3), ModelParams)
    with pytest.raises(AccessViolation):
        gate.soft_decisions_of(3)
    with pytest.raises(AccessViolation):
        gate.read(4)
    with pytest.raises(ProtocolError):
        gate.publish(5, export_knowledge("distillation", model, REFERENCE))
    assert gate.reads == [(3, MODEL)]

    gate = KnowledgeGate("distillation")
    gate.publish(3, export_knowledge("distillation", model, REFERENCE))
    assert isinstance(gate.read(3), SoftDecisionSet)
    with pytest.raises(AccessViolation):
        gate.model_of(3)
    assert gate.users() == [3] and gate.reads == [(3, SOFT_DECISIONS)]


def test_exported_models_are_copies(model):
    shared = export_knowledge("model_sharing", model, REFERENCE)
    assert shared is not model and shared.checksum() == model.checksum()
    with pytest.raises(InputError):
        export_knowledge("gossip", model, REFERENCE)
    with pytest.raises(InputError):
        KnowledgeGate("gossip")


def test_latent_dims_get_equal_shares():
    dims = assign_latent_dims(range(10), [8, 16], seed=1)
    assert Counter(dims.values()) == {8: 5, 16: 5}
    assert dims == assign_latent_dims(range(10), [8, 16], seed=1)
    assert Counter(assign_latent_dims(range(7), [8, 16, 32], seed=1).values()) == {8: 3, 16: 2, 32: 2}


def test_code_version():
    assert code_version()


def test_stopping_after_training_keeps_models(tmp_path):
    runner = ExperimentRunner(tiny_config(), str(tmp_path), version="test")
    assert runner.run("train") is None
    model_dir = os.path.join(runner.run_dir, "base", "seed-1", "models-train")
    assert len([f for f in os.listdir(model_dir) if f.endswith(".pmod")]) == 5
    assert os.path.exists(os.path.join(runner.run_dir, "config.json"))
    with pytest.raises(ValueError):
        runner.run("deploy")


def test_failed_stage_is_recorded(tmp_path):
    config = tiny_config(dataset={'source': 'csv', 'csv_path': str(tmp_path / "missing.csv")})
    runner = ExperimentRunner(config, str(tmp_path / "runs"), version="test")
    with pytest.raises(StageError) as info:
        runner.run()
    assert info.value.stage == "world"
    with open(os.path.join(runner.run_dir, "failure.json"), encoding="utf-8") as f:
        failure = json.load(f)
    assert failure['stage'] == "world" and failure['config_hash'] == config.config_hash()


def read_json(*parts):
    with open(os.path.join(*parts), encoding="utf-8") as f:
        return json.load(f)


@pytest.mark.parametrize("protocol, kind", [("model_sharing", MODEL), ("distillation", SOFT_DECISIONS)])
def test_attack_stage_reads_through_the_protocol_accessor(tmp_path, monkeypatch, protocol, kind):
    requested = []
    original = KnowledgeGate.read

    def read(self, user_id, expected=None):
        requested.append(expected)
        return original(self, user_id, expected)

    monkeypatch.setattr(KnowledgeGate, "read", read)
    runner = ExperimentRunner(tiny_config(protocol=protocol, attacks=['kmeans']), str(tmp_path), version="test")
    runner.run("attack")
    assert len(requested) == 5 and set(requested) == {kind}


def test_seed_artifacts_carry_the_config_hash(tmp_path):
    config = tiny_config(attacks=['random'])
    runner = ExperimentRunner(config, str(tmp_path), version="test")
    runner.run("attack")
    seed_dir = os.path.join(runner.run_dir, "base", "seed-1")
    for parts, key in (((seed_dir, "regions.json"), 'regions'), ((seed_dir, "splits.json"), 'splits'),
                       ((seed_dir, "sensitive.json"), 'sensitive'),
                       ((seed_dir, "attack", "verdicts.json"), 'verdicts')):
        data = read_json(*parts)
        assert data['config_hash'] == config.config_hash() and data['version'] == "test"
        assert key in data
    assert len(read_json(seed_dir, "attack", "verdicts.json")['verdicts']['random']) == 5


@pytest.mark.slow
def test_model_sharing_run_is_reproducible(tmp_path):
    serial = ExperimentRunner(tiny_config(), str(tmp_path / "a"), version="test").run()
    parallel = ExperimentRunner(tiny_config(run={'workers': 3}), str(tmp_path / "b"), version="test").run()
    assert serial.config_hash == parallel.config_hash
    assert serial.rows == parallel.rows and serial.users == parallel.users
    assert {r['attack'] for r in serial.rows} == {'ptia', 'random', 'kmeans', 'imia'}
    for row in serial.rows:
        assert 0.0 <= row['f1'] <= 1.0 and 0.0 <= row['hr_at_k'] <= 1.0 and row['users'] == 5
    run_dir = os.path.join(str(tmp_path / "a"), f"poi-privacy-sim-{serial.config_hash[:16]}")
    for name in ("report.json", "table.csv", "rows.csv"):
        assert os.path.exists(os.path.join(run_dir, name))
    shared = os.path.join(run_dir, "base", "seed-1", "shared")
    assert len([f for f in os.listdir(shared) if f.endswith(".pmod")]) == 5


@pytest.mark.slow
def test_distillation_run_with_adversarial_defense(tmp_path):
    config = tiny_config(protocol='distillation', attacks=['ptia', 'imia'],
                         defense={'kind': 'agd', 'mu': 0.8},
                         attack={'imia_quantile': 'calibrate'})
    report = ExperimentRunner(config, str(tmp_path), version="test").run()
    assert {r['attack'] for r in report.rows} == {'ptia', 'imia'}
    for row in report.rows:
        assert row['sensitive_f1'] is not None and 0.0 <= row['sensitive_f1'] <= 1.0


@pytest.mark.slow
def test_sweep_over_defense_strength(tmp_path):
    config = tiny_config(attacks=['ptia'], defense={'kind': 'ldp'},
                         sweep={'key': 'defense.ldp_lambda', 'values': [0.0, 0.05]})
    report = run_experiment(config, str(tmp_path))
    assert [r['sweep_value'] for r in report.rows] == [0.0, 0.05]
    assert list(report.summary().index) == ["0.0", "0.05"]


def test_cli_generates_worlds_and_reports_config_errors(tmp_path):
    out = str(tmp_path / "world.csv")
    code = main(["gen", "--out", out, "--truth", str(tmp_path / "truth.json"),
                 "--set", "dataset.synthetic.users=6", "--set", "dataset.synthetic.pois=12",
                 "--set", "dataset.synthetic.regions=2", "-q"])
    assert code == 0
    assert len(load_checkins_csv(out).sequences) == 6
    assert main(["run", "--set", "defense.nu=1", "-q"]) == 2


@pytest.mark.slow
def test_cli_runs_and_re_emits_reports(tmp_path):
    config_path = tmp_path / "tiny.json"
    config_path.write_text(json.dumps(dict(TINY, attacks=['random'])))
    assert main(["run", "--config", str(config_path), "--output", str(tmp_path / "runs"), "-q"]) == 0
    (run_dir,) = [d for d in os.listdir(tmp_path / "runs") if d.startswith("poi-privacy-sim-")]
    run_dir = os.path.join(tmp_path / "runs", run_dir)
    os.remove(os.path.join(run_dir, "table.csv"))
    assert main(["report", run_dir, "-q"]) == 0
    assert os.path.exists(os.path.join(run_dir, "table.csv"))
