import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from oracles import numeric_gradient
from src.collab.distillation import (
    SoftDecisionSet,
    check_aligned,
    distill_round,
    distillation_loss,
    emit_soft_decisions,
    reference_hash,
    soft_decision_gradient,
)
from src.collab.groups import form_groups, jaccard
from src.collab.protocols import run_distillation, run_model_sharing
from src.collab.sharing import share_models_round
from src.geodata.pois import CheckinSequence
from src.recsys.model import InitSpec, init_model
from src.recsys.trainer import TrainConfig, train_local
from src.utils.errors import InputError, ProtocolError

REFERENCE = [CheckinSequence(None, ids) for ids in ((0, 1, 2), (4, 5), (8, 9, 10, 11))]


def test_jaccard():
    assert jaccard({1, 2}, {2, 3}) == pytest.approx(1 / 3)
    assert jaccard(set(), set()) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.frozensets(st.integers(0, 4), max_size=3), min_size=2, max_size=15),
       st.integers(2, 5), st.integers(0, 1000))
def test_groups_partition_users(regions, group_size, seed):
    user_regions = {u: set(r) for u, r in enumerate(regions)}
    groups = form_groups(user_regions, group_size, seed)
    members = [u for g in groups for u in g.members]
    assert sorted(members) == sorted(user_regions)
    assert all(len(g.members) >= 2 for g in groups)
    assert all(len(g.members) <= group_size + 1 for g in groups)


def test_groups_pair_similar_users():
    user_regions = {0: {0}, 1: {1}, 2: {0}, 3: {1}}
    for seed in range(5):
        groups = form_groups(user_regions, 2, seed)
        assert {g.members for g in groups} == {(0, 2), (1, 3)}


def test_groups_degenerate_and_invalid():
    groups = form_groups({7: {0}}, 3, 0)
    assert len(groups) == 1 and groups[0].degenerate
    with pytest.raises(InputError):
        form_groups({0: {0}, 1: {0}}, 1, 0)


def test_share_models_moves_halfway_to_neighbors(init_spec):
    models = [init_model(12, 8, InitSpec(std=0.1, seed=s)) for s in (1, 2, 3)]
    before = [m.checksum() for m in models]
    updated = share_models_round(models)
    expected = 0.5 * models[0].embeddings + 0.25 * (models[1].embeddings + models[2].embeddings)
    np.testing.assert_allclose(updated[0].embeddings, expected)
    assert [m.checksum() for m in models] == before

    pair = share_models_round(models[:2])
    np.testing.assert_allclose(pair[0].query_weights, pair[1].query_weights)


def test_share_models_applies_fine_tune(model):
    seen = []
    share_models_round([model, model.copy()], lambda i, p: seen.append(i) or p)
    assert seen == [0, 1]


def test_share_models_needs_equal_dimensions(init_spec):
    with pytest.raises(ProtocolError):
        share_models_round([init_model(12, 8, init_spec), init_model(12, 16, init_spec)])


def test_soft_decisions_cover_the_reference(model):
    decisions = emit_soft_decisions(model, REFERENCE)
    assert decisions.probs.shape == (3, 12)
    np.testing.assert_allclose(decisions.probs.sum(axis=1), 1.0)
    assert decisions.reference_hash == reference_hash(REFERENCE)
    assert reference_hash(REFERENCE) != reference_hash(REFERENCE[:2])
    with pytest.raises(InputError):
        emit_soft_decisions(model, [])


def test_soft_decision_snapshot(tmp_path, model):
    decisions = emit_soft_decisions(model, REFERENCE)
    path = str(tmp_path / "user.psds")
    decisions.save(path)
    loaded = SoftDecisionSet.load(path)
    assert loaded.reference_hash == decisions.reference_hash
    np.testing.assert_array_equal(loaded.probs, decisions.probs)


def test_misaligned_decisions_are_refused(model):
    own = emit_soft_decisions(model, REFERENCE)
    other = emit_soft_decisions(model, REFERENCE[:2])
    with pytest.raises(ProtocolError):
        check_aligned(own, [other])


def test_distillation_gradient_matches_finite_differences(model, init_spec):
    targets = emit_soft_decisions(init_model(12, 16, InitSpec(std=0.5, seed=9)), REFERENCE).probs
    grads = model.zeros_like()
    soft_decision_gradient(model, REFERENCE, targets, 1.0, grads)
    for name, index in (("embeddings", (1, 2)), ("embeddings", (6, 0)), ("key_weights", (2, 4)),
                        ("position_weights", (1, 3))):
        numeric = numeric_gradient(lambda: distillation_loss(model, REFERENCE, targets), getattr(model, name), index)
        assert getattr(grads, name)[index] == pytest.approx(numeric, rel=1e-4, abs=1e-10), name


def test_distill_round_without_weight_is_one_local_epoch(model, user_sequence):
    config = TrainConfig(learning_rate=0.1, batch_size=3, max_epochs=1, dropout=0.2)
    own = emit_soft_decisions(model, REFERENCE)
    neighbor = emit_soft_decisions(init_model(12, 16, InitSpec(seed=5)), REFERENCE)
    distilled = distill_round(model, [user_sequence], own, [neighbor], 0.0, REFERENCE, config, seed=4)
    local = train_local(model, [user_sequence], config, seed=4)
    assert distilled.checksum() == local.checksum()

    pulled = distill_round(model, [user_sequence], own, [neighbor], 5.0, REFERENCE, config, seed=4)
    assert pulled.checksum() != local.checksum()


def test_model_sharing_rounds(model, user_sequence):
    models = {0: model, 1: train_local(model, [user_sequence], TrainConfig(learning_rate=0.1, max_epochs=1), 1)}
    sequences = {0: [user_sequence], 1: [CheckinSequence(1, (4, 5, 6, 7, 4))]}
    regions = {0: {0, 1}, 1: {1}}
    config = TrainConfig(learning_rate=0.05, batch_size=4, max_epochs=5)
    unchanged = run_model_sharing(models, sequences, regions, config, 0, 2, run_seed=1)
    assert all(unchanged[u] is models[u] for u in models)
    first = run_model_sharing(models, sequences, regions, config, 2, 2, run_seed=1)
    second = run_model_sharing(models, sequences, regions, config, 2, 2, run_seed=1)
    assert sorted(first) == [0, 1]
    assert all(first[u].checksum() == second[u].checksum() for u in first)


def test_distillation_rounds_allow_mixed_dimensions(init_spec, user_sequence):
    models = {0: init_model(12, 8, init_spec), 1: init_model(12, 16, init_spec)}
    sequences = {0: [user_sequence], 1: [CheckinSequence(1, (4, 5, 6, 7, 4))]}
    regions = {0: {0, 1}, 1: {1}}
    config = TrainConfig(learning_rate=0.05, batch_size=4)
    result = run_distillation(models, sequences, regions, REFERENCE, config, 1, 2, 1.0, run_seed=3)
    assert result[0].latent_dim == 8 and result[1].latent_dim == 16
    assert all(p.is_finite() for p in result.values())
