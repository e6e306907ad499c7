"""
Decentralized policy execution: per-robot proposals from the graph
policy, per-team conflict resolution, full episodes with fire decay and
one-step comparison against the exact optimizer.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.errors import InstanceFormatError
from src.core.hamilton import apply_transfers, departure_allowed, hamilton_mask, score_assignment
from src.core.model import Assignment, Instance
from src.core.settings import SETTINGS
from src.domain._1fire_mission import FireOracle, advance_fire, team_statuses
from src.domain._2exact_solver import solve_one_step
from src.domain._6gnn_policy import PolicyNet, collate, score_matrices
from src.domain.episode_log import (
    TERMINAL_FIRE_EXTINGUISHED,
    TERMINAL_MAX_STEPS,
    TERMINAL_NO_TRANSFERS,
    EpisodeLog,
    allocation_snapshot,
    record_step,
)
from src.ingestion._4feature_encoding import GraphSample, NormalizationStats, encode_features

logger = logging.getLogger(__name__)


class ActionScorer(Protocol):
    """N x M action scores for a raw (unnormalized) sample, -inf where infeasible."""

    def score(self, sample: GraphSample) -> np.ndarray:
        ...


class NetPolicy:
    """Graph policy plus the normalization it was trained with."""

    def __init__(self, net: PolicyNet, stats: NormalizationStats):
        self.net = net
        self.stats = stats
        self._stay = stats.stay_edge()

    def score(self, sample: GraphSample) -> np.ndarray:
        normalized = self.stats.normalize(sample)
        batch = collate([normalized], self._stay)
        scores, _ = self.net.forward(batch, train_mode=False)
        return score_matrices(scores, batch, [normalized])[0]


# ----------------------------------------------------------------------
# One decision step
# ----------------------------------------------------------------------
@dataclass
class Proposal:
    robot: int
    source: int
    destination: int
    score: float


@dataclass
class ProposalSet:
    """Per source team, proposals sorted by descending score (robot id on ties)."""
    by_team: Dict[int, List[Proposal]] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_team.values())


@dataclass
class InferStepResult:
    assignment: Assignment
    transfers: List[Tuple[int, int, int]]
    proposals: ProposalSet
    sample: GraphSample


def build_proposals(sample: GraphSample, scores: np.ndarray) -> ProposalSet:
    masked = np.where(sample.candidate_mask, scores, -np.inf)
    choice = np.argmax(masked, axis=1)
    proposals = ProposalSet()
    for r in range(sample.num_robots):
        src, dst = int(sample.cur[r]), int(choice[r])
        if dst != src:
            proposals.by_team.setdefault(src, []).append(Proposal(r, src, dst, float(masked[r, dst])))
    for team in proposals.by_team:
        proposals.by_team[team].sort(key=lambda p: (-p.score, p.robot))
    return proposals


def infer_step(instance: Instance, policy: ActionScorer) -> InferStepResult:
    """
    Proposals from the policy, then each team (ascending id) accepts its
    proposals in score order while its remaining members still meet the
    hard constraints.
    """
    oracle = FireOracle(instance.mission, instance.robots)
    mask = hamilton_mask(instance, oracle)
    sample = encode_features(instance, mask)
    proposals = build_proposals(sample, policy.score(sample))

    accepted: List[Tuple[int, int, int]] = []
    for team in sorted(proposals.by_team):
        remaining = set(instance.assignment.members(team))
        for p in proposals.by_team[team]:
            if not mask.admissible[p.robot, p.destination]:
                continue
            if departure_allowed(instance.robots[p.robot], remaining, instance.robots, instance.rules):
                remaining.discard(p.robot)
                accepted.append((p.robot, p.source, p.destination))

    assignment = apply_transfers(instance.assignment, accepted, instance.robots, instance.rules)
    return InferStepResult(assignment=assignment, transfers=accepted, proposals=proposals, sample=sample)


# ----------------------------------------------------------------------
# Episodes
# ----------------------------------------------------------------------
def run_episode(
    instance: Instance,
    policy: ActionScorer,
    max_steps: int = SETTINGS.SIMULATION.MAX_STEPS,
    fire_eps: float = SETTINGS.SIMULATION.FIRE_EPS,
    stagnation_window: int = SETTINGS.SIMULATION.STAGNATION_WINDOW,
) -> EpisodeLog:
    """
    Alternates infer_step and the fire update. Ends when total fire drops
    under fire_eps times its initial value, when `stagnation_window` steps
    in a row accept no transfer while the fire stays flat, or at max_steps.
    """
    if instance.mission is None:
        raise InstanceFormatError("an episode needs mission_params in the instance")

    log = EpisodeLog(method="gnn")
    log.initial_fire = instance.mission.total_fire()
    log.initial_allocation = allocation_snapshot(instance)
    threshold = fire_eps * log.initial_fire
    fire_trace = [log.initial_fire]
    idle = 0
    state = instance
    run_start = time.perf_counter()
    log.terminal_reason = TERMINAL_MAX_STEPS

    for step in range(max_steps):
        if state.mission.total_fire() <= threshold:
            log.terminal_reason = TERMINAL_FIRE_EXTINGUISHED
            break

        t0 = time.perf_counter()
        result = infer_step(state, policy)
        log.decisions += 1
        statuses = team_statuses(state.mission, result.assignment, state.robots)
        mission = advance_fire(state.mission, result.assignment, state.robots)
        state = state.with_assignment(result.assignment).with_mission(mission)
        log.steps.append(record_step(step, state, result.transfers, time.perf_counter() - t0, statuses))

        fire_trace.append(mission.total_fire())
        idle = idle + 1 if not result.transfers else 0
        if idle >= stagnation_window:
            before = fire_trace[-1 - stagnation_window]
            if before - fire_trace[-1] <= SETTINGS.SIMULATION.STAGNATION_TOL * max(before, 1e-300):
                log.terminal_reason = TERMINAL_NO_TRANSFERS
                break
    else:
        if state.mission.total_fire() <= threshold:
            log.terminal_reason = TERMINAL_FIRE_EXTINGUISHED

    log.wall_seconds = time.perf_counter() - run_start
    log.final_fire = state.mission.total_fire()
    log.final_allocation = allocation_snapshot(state)
    logger.info(
        "[Infer] episode ended (%s) after %d steps, fire %.4f -> %.4f",
        log.terminal_reason,
        len(log.steps),
        log.initial_fire,
        log.final_fire,
    )
    return log


# ----------------------------------------------------------------------
# Comparison with the exact optimizer
# ----------------------------------------------------------------------
@dataclass
class GapReport:
    rows: pd.DataFrame
    # seed, teams, robots, exact_score, gnn_score, stay_score, gap, improvement_gap, same_decision, robot_agreement

    @property
    def median_gap(self) -> float:
        return float(self.rows["gap"].median()) if len(self.rows) else 0.0

    @property
    def identical_fraction(self) -> float:
        return float(self.rows["same_decision"].mean()) if len(self.rows) else 0.0

    def summary(self) -> Dict[str, float]:
        return {
            "instances": int(len(self.rows)),
            "median_gap": self.median_gap,
            "mean_gap": float(self.rows["gap"].mean()) if len(self.rows) else 0.0,
            "median_improvement_gap": float(self.rows["improvement_gap"].median()) if len(self.rows) else 0.0,
            "identical_fraction": self.identical_fraction,
            "robot_agreement": float(self.rows["robot_agreement"].mean()) if len(self.rows) else 0.0,
        }


def relative_gap(exact: float, gnn: float) -> float:
    """(S_exact - S_gnn) / |S_exact|, zero when both agree."""
    if exact == gnn:
        return 0.0
    if exact == 0.0:
        return float("inf")
    return (exact - gnn) / abs(exact)


def compare_with_exact(
    instances: Sequence[Instance],
    policy: ActionScorer,
    lam: float = SETTINGS.ALLOCATION.LAMBDA,
    alpha: float = SETTINGS.ALLOCATION.ALPHA,
    timeout: Optional[float] = SETTINGS.ALLOCATION.SOLVER_TIMEOUT_S,
) -> GapReport:
    """
    One exact step and one policy step from the same state per instance.
    improvement_gap normalizes by the exact gain over staying put.
    """
    rows = []
    for instance in instances:
        oracle = FireOracle(instance.mission, instance.robots)
        exact = solve_one_step(instance, oracle, lam, alpha, timeout)
        step = infer_step(instance, policy)
        gnn_score = score_assignment(instance, step.assignment, oracle, lam, alpha)
        stay_score = score_assignment(instance, instance.assignment, oracle, lam, alpha)
        gain = exact.best_score - stay_score
        rows.append(
            {
                "seed": instance.seed,
                "teams": instance.num_teams,
                "robots": instance.num_robots,
                "exact_score": exact.best_score,
                "gnn_score": gnn_score,
                "stay_score": stay_score,
                "gap": relative_gap(exact.best_score, gnn_score),
                "improvement_gap": (exact.best_score - gnn_score) / gain if gain > 0 else 0.0,
                "same_decision": bool(step.assignment == exact.best_assignment),
                "robot_agreement": float(np.mean(step.assignment.team_of == exact.best_assignment.team_of)),
                "exact_timed_out": exact.timed_out,
            }
        )
    report = GapReport(rows=pd.DataFrame(rows))
    logger.info("[Infer] compared %d instances, median gap %.4f", len(rows), report.median_gap)
    return report
