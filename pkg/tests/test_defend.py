import numpy as np
import pytest

from oracles import numeric_gradient
from src.collab.protocols import run_distillation, run_model_sharing
from src.defend.agd import (
    AgdConfig,
    UnrelatedSampler,
    attacker_samples,
    defense_loss,
    defense_loss_and_grad,
    probe_features,
    train_with_agd,
)
from src.defend.ldp import apply_ldp
from src.defend.probes import build_probe_sequences
from src.defend.reset import apply_er
from src.defend.sensitive import SensitivePoiSet, explicit_sensitive, global_frequency, select_sensitive
from src.geodata.pois import CheckinSequence, PoiIndex, PoiRecord
from src.ptia.attack_mlp import AttackMlp, AttackSample
from src.recsys.model import InitSpec, init_model
from src.recsys.trainer import TrainConfig, next_poi_samples, train_local
from src.utils.errors import InputError


class FixedAttacker:
    """Reports preset visited probabilities, in the order features arrive."""

    def __init__(self, d, a0):
        self.input_dim = d
        self.a0 = np.asarray(a0, dtype=float)

    def visited_probability_gradient(self, x):
        return self.a0[:len(x)], np.zeros_like(x)


def pretrain_samples(d, seed=0):
    rng = np.random.default_rng(seed)
    return ([AttackSample(rng.normal(0.5, 0.2, d), 1) for _ in range(8)]
            + [AttackSample(rng.normal(-0.5, 0.2, d), 0) for _ in range(8)])


def test_ldp_noise_has_the_requested_scale():
    params = init_model(500, 8, InitSpec(seed=1))
    noisy = apply_ldp(params, 0.3, seed=2)
    diffs = np.concatenate([(n - c).ravel() for n, c in zip(noisy.arrays(), params.arrays())])
    assert diffs.std() == pytest.approx(0.3, rel=0.05)
    assert abs(diffs.mean()) < 0.02
    assert noisy.checksum() == apply_ldp(params, 0.3, seed=2).checksum()


def test_ldp_edge_cases(model):
    clean = apply_ldp(model, 0.0, seed=1)
    assert clean is not model and clean.checksum() == model.checksum()
    with pytest.raises(InputError):
        apply_ldp(model, -0.1, seed=1)


def test_embedding_reset_only_touches_sensitive_rows(model, user_sequence):
    trained = train_local(model, [user_sequence], TrainConfig(learning_rate=0.1, max_epochs=2, dropout=0.0), 1)
    reset = apply_er(trained, model, SensitivePoiSet(0, frozenset({1, 4})))
    np.testing.assert_array_equal(reset.embeddings[[1, 4]], model.embeddings[[1, 4]])
    others = [p for p in range(12) if p not in (1, 4)]
    np.testing.assert_array_equal(reset.embeddings[others], trained.embeddings[others])
    np.testing.assert_array_equal(reset.query_weights, trained.query_weights)
    assert not np.array_equal(trained.embeddings[[1, 4]], model.embeddings[[1, 4]])


def test_embedding_reset_validates(model, init_spec):
    with pytest.raises(InputError):
        apply_er(model, model, SensitivePoiSet(0, frozenset({12})))
    with pytest.raises(InputError):
        apply_er(model, init_model(12, 16, init_spec), SensitivePoiSet(0, frozenset({1})))


def test_global_frequency(prior_pool):
    counts = global_frequency(prior_pool + [CheckinSequence(0, (0, 0, 5))], 12)
    assert counts[0] == 4 and counts[5] == 3 and counts[11] == 2


def test_select_sensitive_sizes():
    frequency = np.ones(12)
    chosen = select_sensitive({0, 1, 2, 3, 4}, frequency, 3, seed=1, user_id=7)
    assert len(chosen) == 3 and chosen.poi_ids <= {0, 1, 2, 3, 4}
    assert chosen.user_id == 7 and not chosen.truncated
    assert chosen == select_sensitive({0, 1, 2, 3, 4}, frequency, 3, seed=1, user_id=7)

    everything = select_sensitive({0, 1}, frequency, 5, seed=1)
    assert everything.poi_ids == {0, 1} and everything.truncated
    assert len(select_sensitive({0, 1}, frequency, 0, seed=1)) == 0


def test_select_sensitive_prefers_rare_pois():
    frequency = np.array([1, 1000])
    picks = [min(select_sensitive({0, 1}, frequency, 1, seed=s).poi_ids) for s in range(200)]
    assert picks.count(0) > 180


def test_select_sensitive_validates():
    with pytest.raises(InputError):
        select_sensitive({0}, np.ones(2), -1, seed=0)
    with pytest.raises(InputError):
        select_sensitive({0, 1}, np.array([0, 3]), 1, seed=0)


def test_explicit_sensitive_drops_unvisited():
    chosen = explicit_sensitive({1, 2, 3}, [2, 9], user_id=4)
    assert chosen.poi_ids == {2}
    assert chosen.to_dict() == {'user_id': 4, 'poi_ids': [2], 'truncated': False}


def test_probe_sequences(pois):
    probes = build_probe_sequences(pois, seed=3)
    assert sorted(probes) == list(range(12))
    for poi, probe in probes.items():
        assert probe.poi_ids[-1] == poi
        assert len(set(probe.poi_ids)) == len(probe.poi_ids) == 3
        for a, b in zip(probe.poi_ids, probe.poi_ids[1:]):
            assert pois.distances_from(a)[b] < 5.0
    assert probes == build_probe_sequences(pois, seed=3)


def test_isolated_poi_is_probed_alone():
    lonely = PoiIndex([PoiRecord(0, 0, 40.0, -74.0), PoiRecord(1, 0, 41.0, -74.0)])
    assert build_probe_sequences(lonely, seed=0)[0].poi_ids == (0,)


def test_defense_loss_is_mean_gap(model, pois):
    probes = build_probe_sequences(pois, seed=1)
    attacker = FixedAttacker(8, [0.9, 0.9, 0.1, 0.1])
    assert defense_loss(attacker, model, SensitivePoiSet(0, frozenset({0, 1})), [5, 6], probes) == pytest.approx(0.8)
    uneven = FixedAttacker(8, [0.9, 0.7, 0.0, 0.2])
    assert defense_loss_and_grad(uneven, model, [0, 1], [5, 6], probes) == pytest.approx(0.7)
    assert defense_loss_and_grad(uneven, model, [], [5, 6], probes) == 0.0
    with pytest.raises(InputError):
        defense_loss_and_grad(uneven, model, [0], [], probes)
    with pytest.raises(InputError):
        defense_loss_and_grad(FixedAttacker(16, [0.5]), model, [0], [5], probes)


def test_defense_gradient_matches_finite_differences(model, pois):
    probes = build_probe_sequences(pois, seed=1)
    attacker = AttackMlp.initialize(8, np.random.default_rng(2))
    attacker.input_scale = np.full(8, 0.05)
    sensitive, unrelated = [0, 4], [8, 9, 10]
    grads = model.zeros_like()
    defense_loss_and_grad(attacker, model, sensitive, unrelated, probes, scale=1.0, grads=grads)
    for name, index in (("embeddings", (0, 1)), ("embeddings", (9, 5)), ("query_weights", (3, 3)),
                        ("position_weights", (2, 6))):
        numeric = numeric_gradient(lambda: defense_loss_and_grad(attacker, model, sensitive, unrelated, probes),
                                   getattr(model, name), index)
        assert getattr(grads, name)[index] == pytest.approx(numeric, rel=1e-3, abs=1e-8), name

    # A constant anchor shifts the features but not the gradient
    anchored = model.zeros_like()
    offsets = probe_features(init_model(12, 8, InitSpec(seed=9)), probes)
    defense_loss_and_grad(attacker, model, sensitive, unrelated, probes, scale=1.0, grads=anchored,
                          anchor_features=offsets)
    numeric = numeric_gradient(
        lambda: defense_loss_and_grad(attacker, model, sensitive, unrelated, probes, anchor_features=offsets),
        model.embeddings, (4, 2))
    assert anchored.embeddings[4, 2] == pytest.approx(numeric, rel=1e-3, abs=1e-8)


def test_unrelated_sampler_avoids_visited():
    sampler = UnrelatedSampler(12, {0, 1, 2}, np.random.default_rng(0))
    for _ in range(20):
        drawn = sampler.sample(5)
        assert len(set(drawn)) == 5 and not set(drawn) & {0, 1, 2}
    assert len(UnrelatedSampler(4, {0, 1}, np.random.default_rng(0)).sample(5)) == 2
    with pytest.raises(InputError):
        UnrelatedSampler(2, {0, 1}, np.random.default_rng(0)).sample(1)


def test_attacker_samples_are_balanced(model, user_sequence, pois):
    probes = build_probe_sequences(pois, seed=1)
    samples = next_poi_samples([user_sequence])
    x, labels = attacker_samples(model, samples, np.array([3, 6, 7, 8, 9]), probes, np.random.default_rng(0))
    assert x.shape == (10, 8)
    assert labels.tolist() == [1] * 5 + [0] * 5

    anchored, _ = attacker_samples(model, samples, np.array([3, 6, 7, 8, 9]), probes, np.random.default_rng(0),
                                   anchor=model)
    np.testing.assert_allclose(anchored, 0.0, atol=1e-12)


def test_agd_config_validates():
    with pytest.raises(InputError):
        AgdConfig(mu=-1.0)
    with pytest.raises(InputError):
        AgdConfig(unrelated_count=0)


def test_agd_without_weight_is_plain_training(model, user_sequence, pois):
    probes = build_probe_sequences(pois, seed=1)
    config = TrainConfig(learning_rate=0.1, batch_size=4, max_epochs=3)
    sensitive = SensitivePoiSet(0, frozenset({1, 4}))
    plain = train_local(model, [user_sequence], config, seed=6)

    params, term = train_with_agd(model, [user_sequence], sensitive, probes,
                                  AgdConfig(mu=0.0, pretrain_epochs=2), config, pretrain_samples(8), seed=6)
    assert params.checksum() == plain.checksum()
    assert term.attacker.input_dim == 8 and term.calls == 0

    params, _ = train_with_agd(model, [user_sequence], SensitivePoiSet(0, frozenset()), probes,
                               AgdConfig(mu=0.8, pretrain_epochs=2), config, pretrain_samples(8), seed=6)
    assert params.checksum() == plain.checksum()


def test_agd_trains_against_the_attacker(model, user_sequence, pois):
    probes = build_probe_sequences(pois, seed=1)
    config = TrainConfig(learning_rate=0.1, batch_size=4, max_epochs=3)
    sensitive = SensitivePoiSet(0, frozenset({1, 4}))
    agd = AgdConfig(mu=1.0, pretrain_epochs=2, max_epochs=4, patience=2)
    before = model.checksum()
    params, term = train_with_agd(model, [user_sequence], sensitive, probes, agd, config,
                                  pretrain_samples(8), seed=6)
    assert model.checksum() == before
    assert params.is_finite()
    assert params.checksum() != train_local(model, [user_sequence], config, seed=6).checksum()
    assert term.calls > 0 and term.sensitive_ids == [1, 4]
    again, _ = train_with_agd(model, [user_sequence], sensitive, probes, agd, config, pretrain_samples(8), seed=6)
    assert again.checksum() == params.checksum()


def test_agd_result_ignores_the_log_level(model, user_sequence, pois, caplog):
    probes = build_probe_sequences(pois, seed=1)
    config = TrainConfig(learning_rate=0.1, batch_size=4, max_epochs=3)
    sensitive = SensitivePoiSet(0, frozenset({1, 4}))
    agd = AgdConfig(mu=1.0, pretrain_epochs=2, max_epochs=3)
    quiet, _ = train_with_agd(model, [user_sequence], sensitive, probes, agd, config, pretrain_samples(8), seed=6)
    with caplog.at_level("DEBUG", logger="src.defend.agd"):
        loud, term = train_with_agd(model, [user_sequence], sensitive, probes, agd, config,
                                    pretrain_samples(8), seed=6)
    assert any("L_def" in r.getMessage() for r in caplog.records)
    assert loud.checksum() == quiet.checksum()
    assert term.unrelated is not None and term.loss(loud) >= 0.0


def test_agd_needs_matching_dimensions(model, user_sequence, pois):
    probes = build_probe_sequences(pois, seed=1)
    with pytest.raises(InputError):
        train_with_agd(model, [user_sequence], SensitivePoiSet(0, frozenset({1})), probes,
                       AgdConfig(pretrain_epochs=1), TrainConfig(max_epochs=1), pretrain_samples(16), seed=0)


def test_defense_term_stays_active_in_collaboration(model, user_sequence, pois):
    probes = build_probe_sequences(pois, seed=1)
    config = TrainConfig(learning_rate=0.1, batch_size=4, max_epochs=2)
    agd = AgdConfig(mu=1.0, pretrain_epochs=2, max_epochs=2)
    trained, term = train_with_agd(model, [user_sequence], SensitivePoiSet(0, frozenset({1, 4})), probes, agd,
                                   config, pretrain_samples(8), seed=6)
    models = {0: trained, 1: train_local(model, [CheckinSequence(1, (8, 9, 10, 8))], config, seed=2)}
    sequences = {0: [user_sequence], 1: [CheckinSequence(1, (8, 9, 10, 8))]}
    regions = {0: {0, 1}, 1: {2}}

    calls = term.calls
    defended = run_model_sharing(models, sequences, regions, config, 2, 2, run_seed=1, defenses={0: term})
    assert term.calls > calls
    plain = run_model_sharing(models, sequences, regions, config, 2, 2, run_seed=1)
    assert defended[0].checksum() != plain[0].checksum()

    calls = term.calls
    distilled = run_distillation(models, sequences, regions, [CheckinSequence(None, (0, 4, 8))], config, 1, 2,
                                 1.0, run_seed=1, defenses={0: term})
    assert term.calls > calls
    assert distilled[0].is_finite()
