from dataclasses import replace

import numpy as np
import pytest

from src.core.errors import SchemaMismatchError
from src.core.hamilton import hamilton_mask
from src.core.settings import TrainConfig
from src.domain._1fire_mission import FireOracle
from src.domain._6gnn_policy import (
    PolicyNet,
    collate,
    dropout_rng,
    policy_loss,
    probability_matrices,
    score_matrices,
)
from src.domain.nn_layers import log_sigmoid, segment_log_softmax, sigmoid
from src.ingestion._4feature_encoding import encode_features

CONFIG = TrainConfig(hidden=8, dropout=0.0)


def test_segment_log_softmax_normalizes_each_segment():
    logits = np.array([1.0, 2.0, 3.0, -5.0, 1000.0, 1001.0])
    out = segment_log_softmax(logits, np.array([0, 3, 4]))
    assert np.exp(out[:3]).sum() == pytest.approx(1.0)
    assert out[3] == 0.0
    assert np.exp(out[4:]).sum() == pytest.approx(1.0)
    assert np.all(np.isfinite(out))


def test_sigmoids_are_stable():
    z = np.array([-1000.0, 0.0, 1000.0])
    assert np.allclose(sigmoid(z), [0.0, 0.5, 1.0])
    assert np.all(np.isfinite(log_sigmoid(z)))


def test_collate_flattens_candidates(labeled_samples):
    batch = collate(labeled_samples)
    assert batch.num_samples == len(labeled_samples)
    assert batch.num_robots == sum(s.num_robots for s in labeled_samples)
    assert batch.starts.size == batch.num_robots
    assert batch.pair_robot.size == sum(int(s.candidate_mask.sum()) for s in labeled_samples)
    expected = np.concatenate([s.label + off for s, off in zip(labeled_samples, batch.team_offsets)])
    assert np.array_equal(batch.pair_team[batch.label_pair], expected)


def test_collate_rejects_labels_outside_the_mask(two_team_fire):
    mask = hamilton_mask(two_team_fire, FireOracle(two_team_fire.mission, two_team_fire.robots))
    sample = encode_features(two_team_fire, mask, label=[1, 0, 1])
    with pytest.raises(ValueError):
        collate([sample])


def test_probabilities_vanish_outside_the_candidate_mask(labeled_samples):
    net = PolicyNet(hidden=8, dropout=0.0, seed=1)
    batch = collate(labeled_samples)
    scores, _ = net.forward(batch)
    for s, probs, mat in zip(
        labeled_samples, probability_matrices(scores, batch, labeled_samples), score_matrices(scores, batch, labeled_samples)
    ):
        assert np.all(probs[~s.candidate_mask] == 0.0)
        assert np.allclose(probs.sum(axis=1), 1.0)
        assert np.all(np.isneginf(mat[~s.candidate_mask]))
        assert np.all(np.isfinite(mat[s.candidate_mask]))


def test_forward_is_deterministic_without_dropout(labeled_samples):
    batch = collate(labeled_samples)
    net = PolicyNet(hidden=8, dropout=0.5, seed=2)
    a, _ = net.forward(batch, train_mode=False, rng=dropout_rng(0, 0))
    b, _ = net.forward(batch, train_mode=False, rng=dropout_rng(0, 1))
    assert np.array_equal(a, b)
    c, _ = net.forward(batch, train_mode=True, rng=dropout_rng(0, 0))
    d, _ = net.forward(batch, train_mode=True, rng=dropout_rng(0, 0))
    assert np.array_equal(c, d)
    assert not np.array_equal(a, c)


def test_same_seed_same_weights():
    a, b = PolicyNet(hidden=8, seed=4), PolicyNet(hidden=8, seed=4)
    for (name, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
        assert np.array_equal(p.value, q.value), name


def test_state_dict_layout_is_checked():
    net = PolicyNet(hidden=8)
    state = net.state_dict()
    state["scorer.1.b"] = np.zeros(3)
    with pytest.raises(SchemaMismatchError):
        net.load_state_dict(state)
    with pytest.raises(SchemaMismatchError):
        PolicyNet(hidden=16).load_state_dict(net.state_dict())


def test_feature_width_mismatch_is_rejected(labeled_samples):
    net = PolicyNet(hidden=8, team_dim=3)
    with pytest.raises(SchemaMismatchError):
        net.forward(collate(labeled_samples))


def _loss(net, batch):
    scores, aux = net.forward(batch, train_mode=False)
    return policy_loss(scores, aux, batch, CONFIG)


def test_backward_matches_central_differences(labeled_samples):
    batch = collate(labeled_samples[:3])
    net = PolicyNet(hidden=8, dropout=0.0, seed=3)
    net.zero_grad()
    out = _loss(net, batch)
    net.backward(out.d_scores, out.d_aux)

    h = 1e-6
    mismatches = []
    for name, param in net.named_parameters():
        analytic = param.grad.reshape(-1).copy()
        flat = param.value.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + h
            up = _loss(net, batch).total
            flat[k] = original - h
            down = _loss(net, batch).total
            flat[k] = original
            numeric = (up - down) / (2 * h)
            if not np.isclose(analytic[k], numeric, rtol=1e-4, atol=1e-8):
                mismatches.append((name, k, analytic[k], numeric))
    assert not mismatches, mismatches[:5]


def test_mean_aggregation_ignores_edge_storage_order(labeled_samples):
    sample = labeled_samples[0]
    perm = np.random.default_rng(5).permutation(len(sample.edge_index))
    shuffled = replace(sample, edge_index=sample.edge_index[perm], edge_features=sample.edge_features[perm])
    net = PolicyNet(hidden=8, dropout=0.0, seed=6)

    scores, _ = net.forward(collate([sample]))
    h1 = net._cache["h1"].copy()
    shuffled_scores, _ = net.forward(collate([shuffled]))
    assert np.max(np.abs(net._cache["h1"] - h1)) == 0.0
    assert np.array_equal(scores, shuffled_scores)


def test_team_without_in_edges_gets_a_zero_message(labeled_samples):
    sample = labeled_samples[0]
    isolated = 0
    keep = sample.edge_index[:, 1] != isolated
    candidates = sample.candidate_mask.copy()
    candidates[:, isolated] = sample.cur == isolated
    stripped = replace(
        sample,
        edge_index=sample.edge_index[keep],
        edge_features=sample.edge_features[keep],
        candidate_mask=candidates,
        label=None,
    )
    net = PolicyNet(hidden=8, dropout=0.0, seed=7)
    scores, aux = net.forward(collate([stripped]))
    assert np.all(net._cache["mean_msg"][isolated] == 0.0)
    assert np.all(np.isfinite(scores))
    assert np.all(np.isfinite(aux))


def test_loss_needs_labels(two_team_fire):
    mask = hamilton_mask(two_team_fire, FireOracle(two_team_fire.mission, two_team_fire.robots))
    batch = collate([encode_features(two_team_fire, mask)])
    net = PolicyNet(hidden=8)
    scores, aux = net.forward(batch)
    with pytest.raises(ValueError):
        policy_loss(scores, aux, batch)
