"""
Exhaustive one-step optimizer (the labeling oracle) and its
multi-step exact baseline.
"""

import itertools
import logging
import time
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import InstanceFormatError
from src.core.hamilton import apply_transfers, hamilton_mask, moved_robots, score_assignment
from src.core.model import Assignment, FeasibilityRules, HamiltonMask, Instance, MissionOracle, Robot, feasibility_violation
from src.core.settings import SETTINGS
from src.domain._1fire_mission import FireOracle, advance_fire, team_statuses
from src.domain.episode_log import (
    TERMINAL_FIRE_EXTINGUISHED,
    TERMINAL_MAX_STEPS,
    TERMINAL_OPTIMAL,
    TERMINAL_TIMEOUT,
    EpisodeLog,
    allocation_snapshot,
    record_step,
)

logger = logging.getLogger(__name__)


@dataclass
class SolveResult:
    """
    Output container of one exhaustive solve.
    timed_out => best_* hold the best candidate seen before the deadline.
    """
    best_assignment: Assignment
    best_score: float
    evaluated_count: int
    elapsed: float
    # seconds
    timed_out: bool
    num_moves: int = 0

    def to_dict(self) -> Dict:
        return {
            "best_assignment": list(self.best_assignment.as_tuple()),
            "best_score": self.best_score,
            "evaluated_count": self.evaluated_count,
            "elapsed": self.elapsed,
            "timed_out": self.timed_out,
            "num_moves": self.num_moves,
        }


# ----------------------------------------------------------------------
# Enumeration
# ----------------------------------------------------------------------
def enumerate_feasible(
    assignment: Assignment,
    mask: HamiltonMask,
    robots: Sequence[Robot],
    rules: FeasibilityRules,
) -> Iterator[Assignment]:
    """
    Every assignment reachable by giving each robot one admissible
    destination, filtered by the hard constraints.

    Robots are visited by id and destinations in ascending team id, so
    candidates come out in lexicographic order of team_of. A branch is cut
    as soon as a team can no longer reach its minimum size (or keep a
    required-capability robot) even if every remaining robot that may end
    in it does so.
    """
    n_robots, n_teams = assignment.num_robots, assignment.num_teams
    options = [mask.destinations(r) for r in range(n_robots)]
    required = rules.required_capability
    is_holder = np.array(
        [required is not None and robots[r].has(required) for r in range(n_robots)], dtype=bool
    )

    # reach[k, v]: robots with index >= k that may end in team v
    reach = np.zeros((n_robots + 1, n_teams), dtype=np.int64)
    holder_reach = np.zeros((n_robots + 1, n_teams), dtype=np.int64)
    for k in range(n_robots - 1, -1, -1):
        reach[k] = reach[k + 1]
        holder_reach[k] = holder_reach[k + 1]
        for v in options[k]:
            reach[k, v] += 1
            if is_holder[k]:
                holder_reach[k, v] += 1

    team_of = np.array(assignment.team_of, copy=True)
    counts = np.zeros(n_teams, dtype=np.int64)
    holders = np.zeros(n_teams, dtype=np.int64)

    def reachable(team: int, k: int) -> bool:
        if counts[team] + reach[k, team] < rules.min_team_size:
            return False
        if required is not None and holders[team] + holder_reach[k, team] < 1:
            return False
        return True

    if not all(reachable(v, 0) for v in range(n_teams)):
        return

    def descend(k: int) -> Iterator[Assignment]:
        if k == n_robots:
            yield Assignment.of(team_of, n_teams)
            return
        for dest in options[k]:
            team_of[k] = dest
            counts[dest] += 1
            holders[dest] += int(is_holder[k])
            if all(reachable(v, k + 1) for v in options[k]):
                yield from descend(k + 1)
            counts[dest] -= 1
            holders[dest] -= int(is_holder[k])

    yield from descend(0)


def _better(score: float, moves: int, best_score: float, best_moves: int) -> bool:
    # Candidates arrive in lexicographic order, so the earlier one wins full ties
    if score != best_score:
        return score > best_score
    return moves < best_moves


def solve_one_step(
    instance: Instance,
    oracle: MissionOracle,
    lam: float = SETTINGS.ALLOCATION.LAMBDA,
    alpha: float = SETTINGS.ALLOCATION.ALPHA,
    timeout: Optional[float] = SETTINGS.ALLOCATION.SOLVER_TIMEOUT_S,
    mask: Optional[HamiltonMask] = None,
    max_evals: Optional[int] = None,
) -> SolveResult:
    """
    argmax over enumerate_feasible of G(X') - lambda C(X, X').

    Ties: fewest moved robots, then lexicographically smallest team_of.
    timeout (seconds) and max_evals both truncate the search; the
    unchanged assignment is always evaluated first.
    """
    start = time.perf_counter()
    if mask is None:
        mask = hamilton_mask(instance, oracle)

    current = instance.assignment
    best = current
    best_score = score_assignment(instance, current, oracle, lam, alpha)
    best_moves = 0
    evaluated = 1
    timed_out = False
    check_every = SETTINGS.ALLOCATION.DEADLINE_CHECK_EVERY
    deadline = None if timeout is None else start + timeout

    for candidate in enumerate_feasible(current, mask, instance.robots, instance.rules):
        if candidate == current:
            continue
        if max_evals is not None and evaluated >= max_evals:
            timed_out = True
            break
        if deadline is not None and evaluated % check_every == 0 and time.perf_counter() > deadline:
            timed_out = True
            break

        score = score_assignment(instance, candidate, oracle, lam, alpha)
        moves = int(np.count_nonzero(candidate.team_of != current.team_of))
        evaluated += 1
        if _better(score, moves, best_score, best_moves):
            best, best_score, best_moves = candidate, score, moves

    elapsed = time.perf_counter() - start
    if timed_out:
        logger.warning("[Solver] search truncated after %d candidates (%.3fs)", evaluated, elapsed)
    else:
        logger.debug("[Solver] %d candidates in %.3fs, best %.6f", evaluated, elapsed, best_score)

    return SolveResult(
        best_assignment=best,
        best_score=best_score,
        evaluated_count=evaluated,
        elapsed=elapsed,
        timed_out=timed_out,
        num_moves=best_moves,
    )


def enumerate_all_materialized(
    instance: Instance,
    oracle: MissionOracle,
    mask: HamiltonMask,
    lam: float = SETTINGS.ALLOCATION.LAMBDA,
    alpha: float = SETTINGS.ALLOCATION.ALPHA,
) -> List[Tuple[float, int, Tuple[int, ...]]]:
    """
    Slow cross-check: full Cartesian product of admissible destinations,
    filtered afterwards, scored and sorted best first as
    (score, moves, team_of).
    """
    current = instance.assignment
    options = [mask.destinations(r) for r in range(instance.num_robots)]
    rows = []
    for combo in itertools.product(*options):
        if feasibility_violation(combo, instance.robots, instance.rules, instance.num_teams) is not None:
            continue
        candidate = Assignment.of(combo, instance.num_teams)
        score = score_assignment(instance, candidate, oracle, lam, alpha)
        moves = sum(1 for a, b in zip(combo, current.as_tuple()) if a != b)
        rows.append((score, moves, tuple(combo)))
    rows.sort(key=lambda row: (-row[0], row[1], row[2]))
    return rows


# ----------------------------------------------------------------------
# Multi-step exact baseline
# ----------------------------------------------------------------------
def solve_iterative_exact(
    instance: Instance,
    lam: float = SETTINGS.ALLOCATION.LAMBDA,
    alpha: float = SETTINGS.ALLOCATION.ALPHA,
    timeout: Optional[float] = SETTINGS.ALLOCATION.SOLVER_TIMEOUT_S,
    max_steps: int = SETTINGS.SIMULATION.MAX_STEPS,
    fire_eps: float = SETTINGS.SIMULATION.FIRE_EPS,
) -> EpisodeLog:
    """
    Repeats solve_one_step and the fire update until the unchanged
    assignment is optimal, the fire is out, a solve times out or
    max_steps is reached.
    """
    if instance.mission is None:
        raise InstanceFormatError("the exact episode needs mission_params in the instance")

    log = EpisodeLog(method="exact")
    log.initial_fire = instance.mission.total_fire()
    log.initial_allocation = allocation_snapshot(instance)
    threshold = fire_eps * log.initial_fire
    state = instance
    run_start = time.perf_counter()

    for step in range(max_steps):
        if state.mission.total_fire() <= threshold:
            log.terminal_reason = TERMINAL_FIRE_EXTINGUISHED
            break

        t0 = time.perf_counter()
        oracle = FireOracle(state.mission, state.robots)
        result = solve_one_step(state, oracle, lam, alpha, timeout)
        log.decisions += 1
        if result.timed_out:
            log.timed_out = True
            log.terminal_reason = TERMINAL_TIMEOUT
            break
        if result.best_assignment == state.assignment:
            log.terminal_reason = TERMINAL_OPTIMAL
            break

        transfers = moved_robots(state.assignment, result.best_assignment)
        new_assignment = apply_transfers(state.assignment, transfers, state.robots, state.rules)
        statuses = team_statuses(state.mission, new_assignment, state.robots)
        mission = advance_fire(state.mission, new_assignment, state.robots)
        state = state.with_assignment(new_assignment).with_mission(mission)
        log.steps.append(record_step(step, state, transfers, time.perf_counter() - t0, statuses))
        logger.info("[Solver] exact step %d: %d transfers, fire %.4f", step, len(transfers), mission.total_fire())
    else:
        log.terminal_reason = TERMINAL_MAX_STEPS

    log.wall_seconds = time.perf_counter() - run_start
    log.final_fire = state.mission.total_fire()
    log.final_allocation = allocation_snapshot(state)
    return log
