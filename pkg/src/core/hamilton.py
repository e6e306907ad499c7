"""
Hamilton-rule admissibility engine and the one-step objective.

Pure functions over the immutable model of src.core.model; safe to call
from concurrent workers.
"""

import logging
from typing import AbstractSet, Iterable, List, Sequence, Tuple

import numpy as np

from src.core.errors import InfeasibleAssignmentError
from src.core.model import (
    Assignment,
    FeasibilityRules,
    HamiltonMask,
    Instance,
    InteractionGraph,
    MissionOracle,
    Robot,
    TeamWeights,
    feasibility_violation,
)

logger = logging.getLogger(__name__)

Transfer = Tuple[int, int, int]
# (robot, source team, destination team)


# ----------------------------------------------------------------------
# Relatedness and set-dependent marginals
# ----------------------------------------------------------------------
def relatedness(weights: TeamWeights, i: int, j: int) -> float:
    """r_ij = w_j / w_i"""
    return float(weights.w[j] / weights.w[i])


def marginal_benefit(oracle: MissionOracle, j: int, S_j: AbstractSet[int], r: int) -> float:
    """
    Gain of team j when robot r joins it: F_j(S_j + r) - F_j(S_j).
    """
    if r in S_j:
        raise ValueError(f"robot {r} already belongs to team {j}")
    base = frozenset(S_j)
    return oracle.evaluate(j, base | {r}) - oracle.evaluate(j, base)


def marginal_cost(oracle: MissionOracle, i: int, S_i: AbstractSet[int], r: int) -> float:
    """
    Loss of team i when robot r leaves it: F_i(S_i) - F_i(S_i - r).
    """
    if r not in S_i:
        raise ValueError(f"robot {r} does not belong to team {i}")
    base = frozenset(S_i)
    return oracle.evaluate(i, base) - oracle.evaluate(i, base - {r})


def departure_allowed(
    robot: Robot,
    source_members: AbstractSet[int],
    robots: Sequence[Robot],
    rules: FeasibilityRules,
) -> bool:
    """
    True if the source team still meets the hard constraints without robot.
    """
    remaining = [robots[m] for m in source_members if m != robot.id]
    if len(remaining) < rules.min_team_size:
        return False
    if rules.required_capability is not None and robot.has(rules.required_capability):
        return any(m.has(rules.required_capability) for m in remaining)
    return True


# ----------------------------------------------------------------------
# Hamilton-admissible indicator
# ----------------------------------------------------------------------
def hamilton_mask(instance: Instance, oracle: MissionOracle) -> HamiltonMask:
    """
    Builds the N x M admissibility matrix.

    A transfer i -> j of robot r is admissible when (i, j) is an edge,
    r_ij * B_{r,j}(S_j) > C_{r,i}(S_i) holds strictly, and the source team
    keeps its hard constraints after the departure. "Stay" is always true.
    """
    assignment = instance.assignment
    members = [assignment.members(v) for v in range(instance.num_teams)]
    neighbors = [instance.graph.neighbors(v) for v in range(instance.num_teams)]

    admissible = np.zeros((instance.num_robots, instance.num_teams), dtype=bool)
    for robot in instance.robots:
        i = assignment.cur(robot.id)
        admissible[robot.id, i] = True

        if not neighbors[i]:
            continue
        if not departure_allowed(robot, members[i], instance.robots, instance.rules):
            continue

        cost = marginal_cost(oracle, i, members[i], robot.id)
        for j in neighbors[i]:
            benefit = marginal_benefit(oracle, j, members[j], robot.id)
            # Strict, no tolerance: ties are inadmissible
            if relatedness(instance.weights, i, j) * benefit > cost:
                admissible[robot.id, j] = True

    admissible.flags.writeable = False
    logger.debug(
        "[Hamilton] %d admissible transfers over %d robots",
        int(admissible.sum()) - instance.num_robots,
        instance.num_robots,
    )
    return HamiltonMask(admissible=admissible)


# ----------------------------------------------------------------------
# Objective and cost
# ----------------------------------------------------------------------
def global_objective(assignment: Assignment, weights: TeamWeights, oracle: MissionOracle) -> float:
    """G(X) = sum_v w_v F_v(S_v)"""
    total = 0.0
    for v in range(assignment.num_teams):
        total += float(weights.w[v]) * oracle.evaluate(v, assignment.members(v))
    return total


def transfer_cost(
    prev: Assignment,
    next: Assignment,
    graph: InteractionGraph,
    robots: Sequence[Robot],
    alpha: float,
) -> float:
    """C(X, X') = sum over moved robots of alpha * d(src, dst) / speed"""
    moved = np.flatnonzero(prev.team_of != next.team_of)
    total = 0.0
    for r in moved:
        distance = graph.pairwise_distance[prev.team_of[r], next.team_of[r]]
        total += alpha * float(distance) / robots[r].speed
    return total


def score_assignment(
    instance: Instance,
    next: Assignment,
    oracle: MissionOracle,
    lam: float,
    alpha: float,
) -> float:
    """One-step objective G(X') - lambda * C(X, X')."""
    gain = global_objective(next, instance.weights, oracle)
    if lam == 0.0:
        return gain
    return gain - lam * transfer_cost(instance.assignment, next, instance.graph, instance.robots, alpha)


def moved_robots(prev: Assignment, next: Assignment) -> List[Transfer]:
    moved = np.flatnonzero(prev.team_of != next.team_of)
    return [(int(r), prev.cur(int(r)), next.cur(int(r))) for r in moved]


# ----------------------------------------------------------------------
# Transfers
# ----------------------------------------------------------------------
def apply_transfers(
    assignment: Assignment,
    transfers: Iterable[Transfer],
    robots: Sequence[Robot],
    rules: FeasibilityRules,
) -> Assignment:
    """
    Executes (robot, src, dst) transfers; raises InfeasibleAssignmentError
    if the result breaks a hard constraint.
    """
    team_of = np.array(assignment.team_of, copy=True)
    seen = set()
    for robot, src, dst in transfers:
        if robot in seen:
            raise ValueError(f"robot {robot} listed in more than one transfer")
        seen.add(robot)
        if assignment.cur(robot) != src:
            raise ValueError(f"robot {robot} is in team {assignment.cur(robot)}, not {src}")
        if not 0 <= dst < assignment.num_teams:
            raise ValueError(f"unknown destination team {dst}")
        team_of[robot] = dst

    violation = feasibility_violation(team_of, robots, rules, assignment.num_teams)
    if violation is not None:
        team, constraint = violation
        raise InfeasibleAssignmentError(team, constraint, "after applying transfers")

    result = Assignment.of(team_of, assignment.num_teams)
    assert np.all(result.team_sizes() >= max(rules.min_team_size, 0))
    return result
