"""
Domain model shared by the solver, the data generator and the simulator.

Every type here is an immutable value: numpy payloads are copied and
flagged read-only at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, FrozenSet, Iterable, Optional, Protocol, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.spatial.distance import cdist

if TYPE_CHECKING:
    from src.domain._1fire_mission import FireMissionState


def _frozen(values: Any, dtype: Any = float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


# ----------------------------------------------------------------------
# Team interaction graph
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """
    Undirected, connected graph of teams with their positions (meters).
    """

    num_teams: int
    edges: FrozenSet[Tuple[int, int]]
    team_positions: np.ndarray
    pairwise_distance: np.ndarray

    @classmethod
    def build(
        cls, num_teams: int, edges: Iterable[Sequence[int]], positions: Any
    ) -> "InteractionGraph":
        if num_teams < 1:
            raise ValueError(f"num_teams must be positive, got {num_teams}")

        normalized = set()
        for edge in edges:
            i, j = int(edge[0]), int(edge[1])
            if i == j:
                raise ValueError(f"self-loop on team {i}")
            if not (0 <= i < num_teams and 0 <= j < num_teams):
                raise ValueError(f"edge ({i}, {j}) references an unknown team")
            normalized.add((min(i, j), max(i, j)))

        pos = np.asarray(positions, dtype=float).reshape(num_teams, 2)

        graph = nx.Graph()
        graph.add_nodes_from(range(num_teams))
        graph.add_edges_from(normalized)
        if not nx.is_connected(graph):
            raise ValueError("interaction graph must be connected")

        return cls(
            num_teams=num_teams,
            edges=frozenset(normalized),
            team_positions=_frozen(pos),
            pairwise_distance=_frozen(cdist(pos, pos)),
        )

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, team: int) -> Tuple[int, ...]:
        """Neighbors of a team in ascending id order."""
        out = [j if i == team else i for i, j in self.edges if team in (i, j)]
        return tuple(sorted(out))

    def directed_edges(self) -> Tuple[Tuple[int, int], ...]:
        """Both orientations of every edge, sorted by (dst, src)."""
        pairs = [(i, j) for i, j in self.edges] + [(j, i) for i, j in self.edges]
        return tuple(sorted(pairs, key=lambda e: (e[1], e[0])))


# ----------------------------------------------------------------------
# Robots, weights, constraints
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Robot:
    id: int
    capability: Tuple[int, ...]
    # Binary capability vector; [sensing, fire-fighting] in the fire mission
    speed: float
    # meters / second
    capacity: float = 0.0
    # Suppression units, zero for robots that cannot fight fire

    def __post_init__(self) -> None:
        if self.speed <= 0:
            raise ValueError(f"robot {self.id}: speed must be positive")
        if self.capacity < 0:
            raise ValueError(f"robot {self.id}: capacity must be nonnegative")
        if any(c not in (0, 1) for c in self.capability):
            raise ValueError(f"robot {self.id}: capability must be binary")

    def has(self, capability_index: int) -> bool:
        return self.capability[capability_index] == 1


@dataclass(frozen=True, eq=False)
class TeamWeights:
    """Mission-importance weights, one strictly positive entry per team."""

    w: np.ndarray

    @classmethod
    def of(cls, values: Sequence[float]) -> "TeamWeights":
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0 or np.any(arr <= 0):
            raise ValueError("team weights must be a nonempty vector of positive reals")
        return cls(w=_frozen(arr))


@dataclass(frozen=True)
class FeasibilityRules:
    """
    Hard constraints every assignment must satisfy.

    min_team_size:
    Robots each team keeps at all times (1 in the general model).

    required_capability:
    Capability index each team must retain at least one robot of
    (the sensing capability in the fire mission), or None.
    """

    min_team_size: int = 1
    required_capability: Optional[int] = None


# ----------------------------------------------------------------------
# Assignment
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Assignment:
    """
    Dense robot -> team encoding of the one-hot assignment matrix X.
    """

    team_of: np.ndarray
    num_teams: int

    @classmethod
    def of(cls, team_of: Sequence[int], num_teams: int) -> "Assignment":
        arr = np.asarray(team_of, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("team_of must be a vector")
        if arr.size and (arr.min() < 0 or arr.max() >= num_teams):
            raise ValueError("team_of references an unknown team")
        return cls(team_of=_frozen(arr, dtype=np.int64), num_teams=num_teams)

    @property
    def num_robots(self) -> int:
        return int(self.team_of.size)

    def cur(self, robot: int) -> int:
        return int(self.team_of[robot])

    def members(self, team: int) -> FrozenSet[int]:
        return frozenset(int(r) for r in np.flatnonzero(self.team_of == team))

    def team_sizes(self) -> np.ndarray:
        return np.bincount(self.team_of, minlength=self.num_teams)

    def as_tuple(self) -> Tuple[int, ...]:
        return tuple(int(t) for t in self.team_of)

    def to_one_hot(self) -> np.ndarray:
        """N x M binary matrix X."""
        x = np.zeros((self.num_robots, self.num_teams), dtype=np.int8)
        x[np.arange(self.num_robots), self.team_of] = 1
        return x

    @classmethod
    def from_one_hot(cls, x: Any) -> "Assignment":
        mat = np.asarray(x)
        if mat.ndim != 2 or np.any(mat.sum(axis=1) != 1):
            raise ValueError("every robot must be assigned to exactly one team")
        return cls.of(np.argmax(mat, axis=1), mat.shape[1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Assignment):
            return NotImplemented
        return self.num_teams == other.num_teams and np.array_equal(self.team_of, other.team_of)

    def __hash__(self) -> int:
        return hash((self.num_teams, self.as_tuple()))


def feasibility_violation(
    team_of: Sequence[int],
    robots: Sequence[Robot],
    rules: FeasibilityRules,
    num_teams: int,
) -> Optional[Tuple[int, str]]:
    """
    First violated (team, constraint) of an assignment, or None.
    """
    team_arr = np.asarray(team_of, dtype=np.int64)
    sizes = np.bincount(team_arr, minlength=num_teams)
    for team in range(num_teams):
        if sizes[team] < rules.min_team_size:
            return team, "team-nonempty"
    if rules.required_capability is not None:
        holders = np.zeros(num_teams, dtype=np.int64)
        for robot in robots:
            if robot.has(rules.required_capability):
                holders[team_arr[robot.id]] += 1
        for team in range(num_teams):
            if holders[team] < 1:
                return team, "required-capability"
    return None


# ----------------------------------------------------------------------
# Hamilton mask and mission oracle
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class HamiltonMask:
    """
    admissible[r, j] is True iff robot r may end the step in team j
    ("stay" included).
    """

    admissible: np.ndarray

    def destinations(self, robot: int) -> Tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.admissible[robot]))

    def is_all_stay(self) -> bool:
        return bool(np.all(self.admissible.sum(axis=1) == 1))


class MissionOracle(Protocol):
    """Set-dependent team mission evaluation F_v(S_v)."""

    def evaluate(self, team_id: int, robot_set: FrozenSet[int]) -> float:
        ...


# ----------------------------------------------------------------------
# Full problem state
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Instance:
    graph: InteractionGraph
    robots: Tuple[Robot, ...]
    weights: TeamWeights
    assignment: Assignment
    rules: FeasibilityRules = field(default_factory=FeasibilityRules)
    mission: Optional["FireMissionState"] = None
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.weights.w.size != self.graph.num_teams:
            raise ValueError("one weight per team is required")
        if self.assignment.num_teams != self.graph.num_teams:
            raise ValueError("assignment and graph disagree on the team count")
        if self.assignment.num_robots != len(self.robots):
            raise ValueError("assignment and robot list disagree on the robot count")
        for idx, robot in enumerate(self.robots):
            if robot.id != idx:
                raise ValueError("robots must be listed by ascending id starting at 0")

    @property
    def num_teams(self) -> int:
        return self.graph.num_teams

    @property
    def num_robots(self) -> int:
        return len(self.robots)

    def with_assignment(self, assignment: Assignment) -> "Instance":
        return replace(self, assignment=assignment)

    def with_mission(self, mission: "FireMissionState") -> "Instance":
        return replace(self, mission=mission)
