"""
Graph features of a live state and their JSON-lines record form.

Team features:  [w, n, n_sensing, n_fighting, total_fire, psi, power, L]
Robot features: [sensing, fighting, speed, capacity]
Edge features:  [dx, dy, distance, w_dst / w_src, adjacency]
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import InstanceFormatError, SchemaMismatchError
from src.core.hamilton import departure_allowed, relatedness
from src.core.model import HamiltonMask, Instance
from src.core.settings import SETTINGS
from src.domain._1fire_mission import FIGHTING, SENSING, TeamFireStatus, team_statuses

TEAM_FEATURES = ("weight", "n_robots", "n_sensing", "n_fighting", "total_fire", "psi", "power", "L")
ROBOT_FEATURES = ("sensing", "fighting", "speed", "capacity")
EDGE_FEATURES = ("dx", "dy", "distance", "weight_ratio", "adjacency")

STAY_EDGE = np.array([0.0, 0.0, 0.0, 1.0, 0.0])
# Edge vector of the "stay" action (a team to itself)


@dataclass(frozen=True, eq=False)
class GraphSample:
    """
    One supervised record: features of state X^k, masks, and the
    optimizer's destinations y* (None at inference time).
    """
    team_features: np.ndarray
    robot_features: np.ndarray
    edge_index: np.ndarray
    # (E, 2) directed (src, dst) pairs sorted by (dst, src)
    edge_features: np.ndarray
    cur: np.ndarray
    hamilton_mask: np.ndarray
    candidate_mask: np.ndarray
    distance_row: np.ndarray
    label: Optional[np.ndarray] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def num_teams(self) -> int:
        return int(self.team_features.shape[0])

    @property
    def num_robots(self) -> int:
        return int(self.robot_features.shape[0])

    def moves(self) -> np.ndarray:
        """Boolean per robot: label differs from the current team."""
        if self.label is None:
            raise ValueError("sample has no label")
        return self.label != self.cur

    def edge_lookup(self) -> Dict[Tuple[int, int], int]:
        return {(int(s), int(d)): k for k, (s, d) in enumerate(self.edge_index)}

    def to_record(self) -> Dict[str, Any]:
        return {
            "team_features": self.team_features.tolist(),
            "robot_features": self.robot_features.tolist(),
            "edge_index": self.edge_index.tolist(),
            "edge_features": self.edge_features.tolist(),
            "cur": self.cur.tolist(),
            "hamilton_mask": self.hamilton_mask.astype(int).tolist(),
            "candidate_mask": self.candidate_mask.astype(int).tolist(),
            "distance_row": self.distance_row.tolist(),
            "label": None if self.label is None else self.label.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "GraphSample":
        n_edges = len(record["edge_index"])
        return cls(
            team_features=np.asarray(record["team_features"], dtype=float).reshape(-1, len(TEAM_FEATURES)),
            robot_features=np.asarray(record["robot_features"], dtype=float).reshape(-1, len(ROBOT_FEATURES)),
            edge_index=np.asarray(record["edge_index"], dtype=np.int64).reshape(n_edges, 2),
            edge_features=np.asarray(record["edge_features"], dtype=float).reshape(n_edges, len(EDGE_FEATURES)),
            cur=np.asarray(record["cur"], dtype=np.int64),
            hamilton_mask=np.asarray(record["hamilton_mask"], dtype=bool),
            candidate_mask=np.asarray(record["candidate_mask"], dtype=bool),
            distance_row=np.asarray(record["distance_row"], dtype=float),
            label=None if record.get("label") is None else np.asarray(record["label"], dtype=np.int64),
            meta=dict(record.get("meta", {})),
        )


# ----------------------------------------------------------------------
# Encoding
# ----------------------------------------------------------------------
def candidate_mask_of(instance: Instance, mask: HamiltonMask) -> np.ndarray:
    """Hamilton mask restricted to single moves the hard constraints allow."""
    out = np.array(mask.admissible, copy=True)
    members = [instance.assignment.members(v) for v in range(instance.num_teams)]
    for robot in instance.robots:
        i = instance.assignment.cur(robot.id)
        if not departure_allowed(robot, members[i], instance.robots, instance.rules):
            out[robot.id, :] = False
        out[robot.id, i] = True
    return out


def encode_features(
    instance: Instance,
    mask: HamiltonMask,
    statuses: Optional[Sequence[TeamFireStatus]] = None,
    label: Optional[np.ndarray] = None,
) -> GraphSample:
    """
    statuses are the per-team fire quantities of the current assignment;
    computed from the mission state when omitted.
    """
    if instance.mission is None:
        raise InstanceFormatError("feature encoding needs mission_params in the instance")
    if statuses is None:
        statuses = team_statuses(instance.mission, instance.assignment, instance.robots)

    M, N = instance.num_teams, instance.num_robots
    sizes = instance.assignment.team_sizes()
    team = np.zeros((M, len(TEAM_FEATURES)))
    for v, status in enumerate(statuses):
        members = instance.assignment.members(v)
        team[v] = [
            instance.weights.w[v],
            sizes[v],
            status.n_sensing,
            sum(1 for r in members if instance.robots[r].has(FIGHTING)),
            status.total_fire,
            status.psi,
            status.power,
            status.L,
        ]

    robot = np.array(
        [[float(r.has(SENSING)), float(r.has(FIGHTING)), r.speed, r.capacity] for r in instance.robots]
    ).reshape(N, len(ROBOT_FEATURES))

    directed = instance.graph.directed_edges()
    pos = instance.graph.team_positions
    edge_index = np.array(directed, dtype=np.int64).reshape(-1, 2)
    edge = np.array(
        [
            [
                pos[j, 0] - pos[i, 0],
                pos[j, 1] - pos[i, 1],
                instance.graph.pairwise_distance[i, j],
                relatedness(instance.weights, i, j),
                1.0,
            ]
            for i, j in directed
        ]
    ).reshape(-1, len(EDGE_FEATURES))

    cur = np.array(instance.assignment.team_of, dtype=np.int64)
    speeds = np.array([r.speed for r in instance.robots])
    distance_row = instance.graph.pairwise_distance[cur] / speeds[:, None]

    sample = GraphSample(
        team_features=team,
        robot_features=robot,
        edge_index=edge_index,
        edge_features=edge,
        cur=cur,
        hamilton_mask=np.array(mask.admissible, dtype=bool),
        candidate_mask=candidate_mask_of(instance, mask),
        distance_row=distance_row,
        label=None if label is None else np.asarray(label, dtype=np.int64),
        meta={"seed": instance.seed, "M": M, "N": N},
    )
    for name in ("team_features", "robot_features", "edge_features", "distance_row"):
        if not np.all(np.isfinite(getattr(sample, name))):
            raise ValueError(f"non-finite values in {name}")
    return sample


# ----------------------------------------------------------------------
# Normalization
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class NormalizationStats:
    """
    Per-feature mean / std computed on the training split only.
    Constant features keep std = 1 and are listed in constant.
    """
    team_mean: Tuple[float, ...]
    team_std: Tuple[float, ...]
    robot_mean: Tuple[float, ...]
    robot_std: Tuple[float, ...]
    edge_mean: Tuple[float, ...]
    edge_std: Tuple[float, ...]
    xi_mean: float
    xi_std: float
    constant: Tuple[str, ...] = ()
    source_split: str = "train"
    feature_schema: str = SETTINGS.FEATURE_SCHEMA

    def to_dict(self) -> Dict[str, Any]:
        return {
            "team_mean": list(self.team_mean),
            "team_std": list(self.team_std),
            "robot_mean": list(self.robot_mean),
            "robot_std": list(self.robot_std),
            "edge_mean": list(self.edge_mean),
            "edge_std": list(self.edge_std),
            "xi_mean": self.xi_mean,
            "xi_std": self.xi_std,
            "constant": list(self.constant),
            "source_split": self.source_split,
            "feature_schema": self.feature_schema,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormalizationStats":
        return cls(
            team_mean=tuple(data["team_mean"]),
            team_std=tuple(data["team_std"]),
            robot_mean=tuple(data["robot_mean"]),
            robot_std=tuple(data["robot_std"]),
            edge_mean=tuple(data["edge_mean"]),
            edge_std=tuple(data["edge_std"]),
            xi_mean=float(data["xi_mean"]),
            xi_std=float(data["xi_std"]),
            constant=tuple(data.get("constant", ())),
            source_split=data.get("source_split", "train"),
            feature_schema=data.get("feature_schema", SETTINGS.FEATURE_SCHEMA),
        )

    @classmethod
    def identity(cls) -> "NormalizationStats":
        return cls(
            team_mean=(0.0,) * len(TEAM_FEATURES),
            team_std=(1.0,) * len(TEAM_FEATURES),
            robot_mean=(0.0,) * len(ROBOT_FEATURES),
            robot_std=(1.0,) * len(ROBOT_FEATURES),
            edge_mean=(0.0,) * len(EDGE_FEATURES),
            edge_std=(1.0,) * len(EDGE_FEATURES),
            xi_mean=0.0,
            xi_std=1.0,
            source_split="identity",
        )

    def normalize(self, sample: GraphSample) -> GraphSample:
        return replace(
            sample,
            team_features=(sample.team_features - np.asarray(self.team_mean)) / np.asarray(self.team_std),
            robot_features=(sample.robot_features - np.asarray(self.robot_mean)) / np.asarray(self.robot_std),
            edge_features=(sample.edge_features - np.asarray(self.edge_mean)) / np.asarray(self.edge_std),
            distance_row=(sample.distance_row - self.xi_mean) / self.xi_std,
        )

    def stay_edge(self) -> np.ndarray:
        return (STAY_EDGE - np.asarray(self.edge_mean)) / np.asarray(self.edge_std)


def _moments(rows: np.ndarray, names: Sequence[str], constant: List[str]) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    mean = rows.mean(axis=0) if rows.size else np.zeros(len(names))
    std = rows.std(axis=0) if rows.size else np.ones(len(names))
    for k, name in enumerate(names):
        if not std[k] > 1e-12:
            std[k] = 1.0
            constant.append(name)
    return tuple(float(x) for x in mean), tuple(float(x) for x in std)


def compute_normalization(train: Sequence[GraphSample]) -> NormalizationStats:
    if not train:
        return NormalizationStats.identity()
    constant: List[str] = []
    team_mean, team_std = _moments(np.vstack([s.team_features for s in train]), [f"team.{n}" for n in TEAM_FEATURES], constant)
    robot_mean, robot_std = _moments(np.vstack([s.robot_features for s in train]), [f"robot.{n}" for n in ROBOT_FEATURES], constant)
    edges = [s.edge_features for s in train if s.edge_features.size]
    edge_rows = np.vstack(edges) if edges else np.zeros((0, len(EDGE_FEATURES)))
    edge_mean, edge_std = _moments(edge_rows, [f"edge.{n}" for n in EDGE_FEATURES], constant)
    xi = np.concatenate([s.distance_row.ravel() for s in train])
    (xi_mean,), (xi_std,) = _moments(xi.reshape(-1, 1), ["xi"], constant)
    return NormalizationStats(
        team_mean=team_mean,
        team_std=team_std,
        robot_mean=robot_mean,
        robot_std=robot_std,
        edge_mean=edge_mean,
        edge_std=edge_std,
        xi_mean=xi_mean,
        xi_std=xi_std,
        constant=tuple(constant),
    )


def check_schema(found: str, expected: str = SETTINGS.FEATURE_SCHEMA) -> None:
    if found != expected:
        raise SchemaMismatchError(f"feature schema '{found}' does not match '{expected}'")
