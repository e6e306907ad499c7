import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.core.model import InteractionGraph, TeamWeights
from src.domain._optional_homogeneous_bidding import (
    HomogeneousInstance,
    brute_force_homogeneous,
    count_feasible_homogeneous,
    homogeneous_objective,
    solve_homogeneous_iterative,
    sqrt_value,
    transfer_gain,
)


def _complete_graph(m):
    angles = np.linspace(0.0, 2 * math.pi, m, endpoint=False)
    positions = np.column_stack([np.cos(angles), np.sin(angles)])
    return InteractionGraph.build(m, list(itertools.combinations(range(m), 2)), positions)


def _random_instance(rng, m, n):
    cuts = sorted(rng.choice(np.arange(1, n), size=m - 1, replace=False).tolist())
    bounds = [0] + cuts + [n]
    return HomogeneousInstance(
        graph=_complete_graph(m),
        weights=TeamWeights.of(rng.uniform(0.5, 2.0, size=m)),
        team_sizes=tuple(bounds[k + 1] - bounds[k] for k in range(m)),
        value_fn=sqrt_value(rng.uniform(0.5, 5.0, size=m)),
    )


def test_feasible_count_is_stars_and_bars():
    assert count_feasible_homogeneous(5, 2) == 4
    assert count_feasible_homogeneous(12, 5) == math.comb(11, 4)
    assert count_feasible_homogeneous(3, 3) == 1
    with pytest.raises(ValueError):
        count_feasible_homogeneous(2, 3)


def test_instance_needs_nonempty_teams():
    with pytest.raises(ValueError):
        HomogeneousInstance(_complete_graph(2), TeamWeights.of([1, 1]), (0, 3), sqrt_value([1, 1]))
    with pytest.raises(ValueError):
        HomogeneousInstance(_complete_graph(2), TeamWeights.of([1, 1]), (3,), sqrt_value([1, 1]))


def test_donor_keeps_one_robot():
    inst = HomogeneousInstance(_complete_graph(2), TeamWeights.of([1, 1]), (1, 5), sqrt_value([100.0, 1.0]))
    assert transfer_gain(inst, inst.team_sizes, 0, 1) is None
    assert transfer_gain(inst, inst.team_sizes, 1, 0) > 0


def test_bidding_moves_robots_toward_the_valuable_team():
    inst = HomogeneousInstance(_complete_graph(2), TeamWeights.of([1, 1]), (1, 7), sqrt_value([3.0, 1.0]))
    trace = solve_homogeneous_iterative(inst)
    assert trace.allocations[0] == (1, 7)
    assert trace.final[0] > 1
    assert sum(trace.final) == 8
    assert all(t == (1, 0) for t in trace.transfers)
    assert trace.final == brute_force_homogeneous(inst)[0]


@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 4), extra=st.integers(0, 6))
def test_objective_increases_with_every_transfer(seed, m, extra):
    inst = _random_instance(np.random.default_rng(seed), m, m + extra + 1)
    trace = solve_homogeneous_iterative(inst)
    assert len(trace.objective) == len(trace.allocations) == len(trace.transfers) + 1
    assert all(b > a for a, b in zip(trace.objective, trace.objective[1:]))
    assert all(min(sizes) >= 1 and sum(sizes) == inst.num_robots for sizes in trace.allocations)
    assert trace.objective[-1] == pytest.approx(homogeneous_objective(inst, trace.final))


def test_round_cap_stops_bidding():
    inst = HomogeneousInstance(_complete_graph(2), TeamWeights.of([1, 1]), (1, 9), sqrt_value([5.0, 1.0]))
    trace = solve_homogeneous_iterative(inst, max_rounds=1)
    assert trace.rounds == 1
    assert len(trace.transfers) == 1


def test_bidding_reaches_the_global_optimum_on_complete_graphs():
    rng = np.random.default_rng(7)
    for _ in range(20):
        m = int(rng.integers(2, 4))
        inst = _random_instance(rng, m, int(rng.integers(m + 1, 9)))
        _, best = brute_force_homogeneous(inst)
        assert solve_homogeneous_iterative(inst).objective[-1] == pytest.approx(best)


@pytest.mark.slow
def test_bidding_reaches_the_global_optimum_at_scale():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        m = int(rng.integers(2, 6))
        n = int(rng.integers(m, 13))
        if n == m:
            inst = HomogeneousInstance(_complete_graph(m), TeamWeights.of(np.ones(m)), (1,) * m, sqrt_value(np.ones(m)))
        else:
            inst = _random_instance(rng, m, n)
        _, best = brute_force_homogeneous(inst)
        assert solve_homogeneous_iterative(inst).objective[-1] == pytest.approx(best)
