import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.errors import InstanceFormatError
from src.core.hamilton import hamilton_mask
from src.core.model import Assignment, Robot, feasibility_violation
from src.domain._1fire_mission import FireOracle
from src.domain._6gnn_policy import PolicyNet
from src.domain._8gnn_inference import NetPolicy, build_proposals, compare_with_exact, infer_step, relative_gap, run_episode
from src.domain.episode_log import TERMINAL_FIRE_EXTINGUISHED, TERMINAL_MAX_STEPS, TERMINAL_NO_TRANSFERS
from src.ingestion._3instance_sampler import sample_instance
from src.ingestion._4feature_encoding import NormalizationStats, encode_features
from src.reporting.csv_export import fire_is_monotone


class TargetScorer:
    """Scores 1 for a fixed destination per robot, 0 for other candidates."""

    def __init__(self, targets, preference=None):
        self.targets = np.asarray(targets)
        self.preference = preference or {}

    def score(self, sample):
        scores = np.where(sample.candidate_mask, 0.0, -np.inf)
        for r, t in enumerate(self.targets):
            if sample.candidate_mask[r, t]:
                scores[r, t] = 1.0 + self.preference.get(r, 0.0)
        return scores


class StayScorer:
    def score(self, sample):
        scores = np.where(sample.candidate_mask, 0.0, -np.inf)
        scores[np.arange(sample.num_robots), sample.cur] = 1.0
        return scores


def _two_sensors_leaving(two_team_fire):
    """Team 0 holds sensing robots 0 and 3; fighter 1 and sensor 2 sit on the fire."""
    robots = two_team_fire.robots + (Robot(id=3, capability=(1, 0), speed=1.0),)
    return replace(two_team_fire, robots=robots, assignment=Assignment.of([0, 1, 1, 0], 2))


def test_fighter_proposal_is_accepted(two_team_fire):
    result = infer_step(two_team_fire, TargetScorer([0, 1, 1]))
    assert result.transfers == [(1, 0, 1)]
    assert result.assignment.as_tuple() == (0, 1, 1)
    assert len(result.proposals) == 1


def test_staying_policy_changes_nothing(two_team_fire):
    result = infer_step(two_team_fire, StayScorer())
    assert result.transfers == []
    assert result.assignment == two_team_fire.assignment


def test_team_keeps_its_last_sensor(two_team_fire):
    instance = _two_sensors_leaving(two_team_fire)
    result = infer_step(instance, TargetScorer([1, 1, 1, 1], preference={3: 0.5}))
    proposals = result.proposals.by_team[0]
    assert [p.robot for p in proposals] == [3, 0]
    assert result.transfers == [(3, 0, 1)]
    assert result.assignment.as_tuple() == (0, 1, 1, 1)


def test_proposals_ignore_non_candidates(two_team_fire):
    mask = hamilton_mask(two_team_fire, FireOracle(two_team_fire.mission, two_team_fire.robots))
    sample = encode_features(two_team_fire, mask)
    # Robot 0 prefers a destination outside its candidate row
    scores = np.array([[0.0, 5.0], [0.0, 1.0], [0.0, 0.0]])
    proposals = build_proposals(sample, scores)
    assert list(proposals.by_team) == [0]
    assert [p.robot for p in proposals.by_team[0]] == [1]


def test_net_policy_scores_the_candidate_mask(two_team_fire):
    policy = NetPolicy(PolicyNet(hidden=8, seed=1), NormalizationStats.identity())
    sample = encode_features(two_team_fire, hamilton_mask(two_team_fire, FireOracle(two_team_fire.mission, two_team_fire.robots)))
    scores = policy.score(sample)
    assert scores.shape == (3, 2)
    assert np.all(np.isneginf(scores[~sample.candidate_mask]))
    assert np.all(np.isfinite(scores[sample.candidate_mask]))
    # A trained or untrained net always yields a feasible step
    result = infer_step(two_team_fire, policy)
    assert result.assignment.team_sizes().sum() == 3


# ----------------------------------------------------------------------
# Episodes
# ----------------------------------------------------------------------
def test_episode_runs_until_the_fire_is_out(two_team_fire):
    log = run_episode(two_team_fire, TargetScorer([0, 1, 1]), max_steps=200)
    assert log.method == "gnn"
    assert log.terminal_reason == TERMINAL_FIRE_EXTINGUISHED
    assert log.final_fire <= 1e-3 * log.initial_fire
    assert log.steps[0].transfers == [(1, 0, 1)]
    assert all(s.transfers == [] for s in log.steps[1:])
    assert fire_is_monotone(log)
    assert log.decisions == len(log.steps)
    assert sum(s.n_robots for s in log.final_allocation) == 3


def test_flat_fire_without_transfers_stops_the_episode(two_team_fire):
    log = run_episode(two_team_fire, StayScorer(), max_steps=50, stagnation_window=3)
    assert log.terminal_reason == TERMINAL_NO_TRANSFERS
    assert len(log.steps) == 3
    assert log.final_fire == pytest.approx(log.initial_fire)


def test_step_budget_ends_the_episode(two_team_fire):
    log = run_episode(two_team_fire, StayScorer(), max_steps=2, stagnation_window=10)
    assert log.terminal_reason == TERMINAL_MAX_STEPS
    assert len(log.steps) == 2


def test_robot_count_is_conserved(small_instances):
    for instance in small_instances[:3]:
        policy = NetPolicy(PolicyNet(hidden=8, seed=instance.seed), NormalizationStats.identity())
        log = run_episode(instance, policy, max_steps=5)
        for step in log.steps:
            assert len(step.assignment) == instance.num_robots
        assert fire_is_monotone(log)


class RandomScorer:
    """Independent uniform scores over every candidate."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def score(self, sample):
        return np.where(sample.candidate_mask, self.rng.uniform(size=sample.candidate_mask.shape), -np.inf)


def _assert_step_respects_the_mask(instance, policy):
    mask = hamilton_mask(instance, FireOracle(instance.mission, instance.robots))
    result = infer_step(instance, policy)
    cur = instance.assignment.team_of
    for robot, src, dst in result.transfers:
        assert src == cur[robot] != dst
        assert mask.admissible[robot, dst]
    assert result.assignment.num_robots == instance.num_robots
    assert feasibility_violation(result.assignment.team_of, instance.robots, instance.rules, instance.num_teams) is None


@settings(deadline=None)
@given(seed=st.integers(0, 10_000), random_scores=st.booleans())
def test_accepted_transfers_stay_inside_the_mask(seed, random_scores):
    instance = sample_instance(seed, team_range=(2, 5), robots_per_team_range=(1, 4))
    if random_scores:
        policy = RandomScorer(seed)
    else:
        policy = NetPolicy(PolicyNet(hidden=8, seed=seed), NormalizationStats.identity())
    _assert_step_respects_the_mask(instance, policy)


@pytest.mark.slow
def test_accepted_transfers_stay_inside_the_mask_at_scale():
    for seed in range(500):
        instance = sample_instance(10_000 + seed, team_range=(2, 6), robots_per_team_range=(1, 4))
        policy = NetPolicy(PolicyNet(hidden=8, seed=seed), NormalizationStats.identity())
        _assert_step_respects_the_mask(instance, policy)
        _assert_step_respects_the_mask(instance, RandomScorer(seed))


def test_episode_needs_a_mission(two_team_fire):
    with pytest.raises(InstanceFormatError, match="mission_params"):
        run_episode(two_team_fire.with_mission(None), StayScorer())


# ----------------------------------------------------------------------
# Comparison with the exact optimizer
# ----------------------------------------------------------------------
def test_relative_gap():
    assert relative_gap(-10.0, -10.0) == 0.0
    assert relative_gap(-10.0, -12.0) == pytest.approx(0.2)
    assert math.isinf(relative_gap(0.0, -1.0))


def test_perfect_policy_has_no_gap(two_team_fire):
    report = compare_with_exact([two_team_fire], TargetScorer([0, 1, 1]), timeout=None)
    row = report.rows.iloc[0]
    assert row["gap"] == 0.0
    assert row["same_decision"]
    assert row["robot_agreement"] == 1.0
    assert report.summary()["identical_fraction"] == 1.0


def test_staying_policy_misses_the_whole_gain(two_team_fire):
    report = compare_with_exact([two_team_fire], StayScorer(), timeout=None)
    row = report.rows.iloc[0]
    assert row["gap"] > 0
    assert row["improvement_gap"] == pytest.approx(1.0)
    assert row["gnn_score"] == row["stay_score"]
    assert not row["same_decision"]


def test_empty_comparison_summary():
    report = compare_with_exact([], StayScorer())
    assert report.summary()["instances"] == 0
    assert report.median_gap == 0.0
