"""
Homogeneous allocation: identical robots, team value depends on the
team size only. Local Hamilton tests plus one-to-one bidding move robots
between adjacent teams until no admissible transfer is left.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.core.model import InteractionGraph, TeamWeights

logger = logging.getLogger(__name__)

ValueFn = Callable[[int, int], float]
# (team, team size) -> F_v(n)


def sqrt_value(scales: Sequence[float]) -> ValueFn:
    """F_v(n) = c_v sqrt(n): strictly increasing with diminishing returns."""
    c = [float(s) for s in scales]
    return lambda team, n: c[team] * math.sqrt(n)


@dataclass(frozen=True)
class HomogeneousInstance:
    graph: InteractionGraph
    weights: TeamWeights
    team_sizes: Tuple[int, ...]
    value_fn: ValueFn

    def __post_init__(self) -> None:
        if len(self.team_sizes) != self.graph.num_teams:
            raise ValueError("one team size per team is required")
        if any(n < 1 for n in self.team_sizes):
            raise ValueError("every team needs at least one robot")

    @property
    def num_robots(self) -> int:
        return int(sum(self.team_sizes))


@dataclass
class HomogeneousTrace:
    """
    allocations[0] is the input; one entry is appended per executed transfer.
    """
    allocations: List[Tuple[int, ...]] = field(default_factory=list)
    transfers: List[Tuple[int, int]] = field(default_factory=list)
    objective: List[float] = field(default_factory=list)
    rounds: int = 0

    @property
    def final(self) -> Tuple[int, ...]:
        return self.allocations[-1]


# ----------------------------------------------------------------------
# Size-dependent marginals
# ----------------------------------------------------------------------
def homogeneous_benefit(value_fn: ValueFn, team: int, n: int) -> float:
    """B_j(n_j) = F_j(n_j + 1) - F_j(n_j)"""
    return value_fn(team, n + 1) - value_fn(team, n)


def homogeneous_cost(value_fn: ValueFn, team: int, n: int) -> float:
    """C_i(n_i) = F_i(n_i) - F_i(n_i - 1)"""
    return value_fn(team, n) - value_fn(team, n - 1)


def transfer_gain(inst: HomogeneousInstance, sizes: Sequence[int], i: int, j: int) -> Optional[float]:
    """
    Delta_{i->j} = r_ij B_j - C_i when the transfer is Hamilton-admissible,
    else None. A donor keeps at least one robot.
    """
    if sizes[i] < 2:
        return None
    r_ij = float(inst.weights.w[j] / inst.weights.w[i])
    delta = r_ij * homogeneous_benefit(inst.value_fn, j, sizes[j]) - homogeneous_cost(inst.value_fn, i, sizes[i])
    return delta if delta > 0 else None


def homogeneous_objective(inst: HomogeneousInstance, sizes: Sequence[int]) -> float:
    return float(sum(inst.weights.w[v] * inst.value_fn(v, sizes[v]) for v in range(len(sizes))))


# ----------------------------------------------------------------------
# Iterative bidding
# ----------------------------------------------------------------------
def _best_pairs(inst: HomogeneousInstance, sizes: Sequence[int]) -> List[Tuple[int, int]]:
    """
    Transfers that are both the donor's best outgoing and the receiver's
    best incoming bid. Equal gains go to the lowest team id.
    """
    m = inst.graph.num_teams
    gains = {}
    for i in range(m):
        for j in inst.graph.neighbors(i):
            delta = transfer_gain(inst, sizes, i, j)
            if delta is not None:
                gains[(i, j)] = delta

    best_out = {}
    best_in = {}
    for (i, j), delta in sorted(gains.items()):
        if i not in best_out or delta > gains[best_out[i]]:
            best_out[i] = (i, j)
        if j not in best_in or delta > gains[best_in[j]]:
            best_in[j] = (i, j)

    return sorted(pair for pair in best_out.values() if best_in.get(pair[1]) == pair)


def solve_homogeneous_iterative(inst: HomogeneousInstance, max_rounds: Optional[int] = None) -> HomogeneousTrace:
    """
    Repeats bid / accept rounds until no admissible transfer remains.
    Accepted transfers run one at a time and are re-tested on the current
    sizes, so the objective strictly increases at every executed move.
    """
    sizes = list(inst.team_sizes)
    trace = HomogeneousTrace(allocations=[tuple(sizes)], objective=[homogeneous_objective(inst, sizes)])
    if max_rounds is None:
        max_rounds = count_feasible_homogeneous(inst.num_robots, inst.graph.num_teams)

    while trace.rounds < max_rounds:
        pairs = _best_pairs(inst, sizes)
        if not pairs:
            break
        trace.rounds += 1

        for i, j in pairs:
            if transfer_gain(inst, sizes, i, j) is None:
                continue
            sizes[i] -= 1
            sizes[j] += 1
            trace.allocations.append(tuple(sizes))
            trace.transfers.append((i, j))
            trace.objective.append(homogeneous_objective(inst, sizes))

    logger.info(
        "[Bidding] %d transfers in %d rounds, final sizes %s", len(trace.transfers), trace.rounds, trace.final
    )
    return trace


# ----------------------------------------------------------------------
# Brute force and counting
# ----------------------------------------------------------------------
def count_feasible_homogeneous(N: int, M: int) -> int:
    """Allocations of N identical robots to M nonempty teams: C(N-1, M-1)."""
    if M < 1 or N < M:
        raise ValueError(f"need N >= M >= 1, got N={N}, M={M}")
    return math.comb(N - 1, M - 1)


def brute_force_homogeneous(inst: HomogeneousInstance) -> Tuple[Tuple[int, ...], float]:
    """Best allocation over the discrete simplex, first in stars-and-bars order."""
    n, m = inst.num_robots, inst.graph.num_teams
    best_sizes: Tuple[int, ...] = tuple(inst.team_sizes)
    best_value = -np.inf
    for cuts in itertools.combinations(range(1, n), m - 1):
        bounds = (0,) + cuts + (n,)
        sizes = tuple(bounds[k + 1] - bounds[k] for k in range(m))
        value = homogeneous_objective(inst, sizes)
        if value > best_value:
            best_sizes, best_value = sizes, value
    return best_sizes, float(best_value)
