"""
Graph policy: team / robot encoders, one round of edge-conditioned
message passing with mean aggregation, a per-candidate action scorer and
a move/stay head. Variable team counts are handled by scoring candidate
(robot, team) pairs only, never through a fixed-size output layer.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import SchemaMismatchError
from src.core.settings import SETTINGS, TrainConfig
from src.domain.nn_layers import MLP, Parameter, log_sigmoid, named_parameters, segment_log_softmax, sigmoid
from src.ingestion._4feature_encoding import EDGE_FEATURES, ROBOT_FEATURES, STAY_EDGE, TEAM_FEATURES, GraphSample

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# Batching
# ----------------------------------------------------------------------
@dataclass
class Batch:
    """
    Disjoint union of samples. Candidate (robot, team) pairs are stored
    flat, robot-major with ascending team id inside each robot segment.
    """
    team_x: np.ndarray
    robot_x: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_x: np.ndarray
    cur: np.ndarray
    # Global current-team index per robot
    pair_robot: np.ndarray
    pair_team: np.ndarray
    pair_edge_x: np.ndarray
    pair_xi: np.ndarray
    starts: np.ndarray
    # First pair index of every robot segment
    label_pair: Optional[np.ndarray]
    moves: Optional[np.ndarray]
    team_offsets: np.ndarray
    robot_offsets: np.ndarray
    seeds: List[Optional[int]]

    @property
    def num_robots(self) -> int:
        return int(self.robot_x.shape[0])

    @property
    def num_samples(self) -> int:
        return len(self.seeds)


def collate(samples: Sequence[GraphSample], stay_edge: np.ndarray = STAY_EDGE) -> Batch:
    team_x, robot_x, edge_x, src, dst, cur = [], [], [], [], [], []
    p_robot, p_team, p_edge, p_xi, label_pair, moves = [], [], [], [], [], []
    team_offsets, robot_offsets, seeds = [], [], []
    t_off = r_off = 0
    labeled = all(s.label is not None for s in samples)

    for s in samples:
        team_offsets.append(t_off)
        robot_offsets.append(r_off)
        seeds.append(s.meta.get("seed"))
        team_x.append(s.team_features)
        robot_x.append(s.robot_features)

        # Fixed (dst, src) order keeps the aggregation sum order storage-independent
        order = np.lexsort((s.edge_index[:, 0], s.edge_index[:, 1])) if len(s.edge_index) else np.zeros(0, int)
        edges = s.edge_index[order]
        feats = s.edge_features[order]
        src.append(edges[:, 0] + t_off)
        dst.append(edges[:, 1] + t_off)
        edge_x.append(feats)
        lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}

        cur.append(s.cur + t_off)
        rr, jj = np.nonzero(s.candidate_mask)
        for r, j in zip(rr, jj):
            c = int(s.cur[r])
            if j == c:
                p_edge.append(stay_edge)
            else:
                k = lookup.get((c, int(j)))
                if k is None:
                    raise ValueError(f"candidate team {j} of robot {r} is not adjacent to team {c}")
                p_edge.append(feats[k])
            if labeled and j == s.label[r]:
                label_pair.append(len(p_robot))
            p_robot.append(r + r_off)
            p_team.append(int(j) + t_off)
            p_xi.append(s.distance_row[r, j])
        if labeled:
            moves.append(s.label != s.cur)

        t_off += s.num_teams
        r_off += s.num_robots

    pair_robot = np.asarray(p_robot, dtype=np.int64)
    starts = np.flatnonzero(np.r_[True, pair_robot[1:] != pair_robot[:-1]]) if pair_robot.size else np.zeros(0, int)
    if starts.size != r_off:
        raise ValueError("every robot needs at least one candidate (its current team)")

    n_label = np.asarray(label_pair, dtype=np.int64) if labeled else None
    if labeled and n_label.size != r_off:
        raise ValueError("a label lies outside the candidate mask")

    return Batch(
        team_x=np.vstack(team_x),
        robot_x=np.vstack(robot_x),
        edge_src=np.concatenate(src).astype(np.int64),
        edge_dst=np.concatenate(dst).astype(np.int64),
        edge_x=np.vstack(edge_x).reshape(-1, len(EDGE_FEATURES)),
        cur=np.concatenate(cur).astype(np.int64),
        pair_robot=pair_robot,
        pair_team=np.asarray(p_team, dtype=np.int64),
        pair_edge_x=np.vstack(p_edge).reshape(-1, len(EDGE_FEATURES)),
        pair_xi=np.asarray(p_xi, dtype=float),
        starts=starts,
        label_pair=n_label,
        moves=np.concatenate(moves) if labeled else None,
        team_offsets=np.asarray(team_offsets, dtype=np.int64),
        robot_offsets=np.asarray(robot_offsets, dtype=np.int64),
        seeds=seeds,
    )


# ----------------------------------------------------------------------
# Network
# ----------------------------------------------------------------------
class PolicyNet:
    """
    Encoders, message / update functions, action scorer and move/stay
    head, all two-layer ReLU MLPs of width `hidden`.
    """

    def __init__(
        self,
        hidden: int = 128,
        dropout: float = 0.1,
        seed: int = 0,
        team_dim: int = len(TEAM_FEATURES),
        robot_dim: int = len(ROBOT_FEATURES),
        edge_dim: int = len(EDGE_FEATURES),
        feature_schema: str = SETTINGS.FEATURE_SCHEMA,
    ):
        self.hidden = hidden
        self.dropout = dropout
        self.seed = seed
        self.dims = {"team": team_dim, "robot": robot_dim, "edge": edge_dim}
        self.feature_schema = feature_schema

        rng = np.random.default_rng(seed)
        H = hidden
        self.modules: Dict[str, MLP] = OrderedDict(
            team_encoder=MLP(team_dim, H, H, dropout, rng),
            robot_encoder=MLP(robot_dim, H, H, dropout, rng),
            message=MLP(2 * H + edge_dim, H, H, dropout, rng),
            update=MLP(2 * H, H, H, dropout, rng),
            scorer=MLP(3 * H + edge_dim + 1, H, 1, dropout, rng),
            aux_head=MLP(2 * H, H, 1, dropout, rng),
        )
        self._cache: Dict[str, np.ndarray] = {}

    @classmethod
    def from_config(cls, config: TrainConfig) -> "PolicyNet":
        return cls(hidden=config.hidden, dropout=config.dropout, seed=config.seed)

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------
    def named_parameters(self) -> List[Tuple[str, Parameter]]:
        return named_parameters(self.modules)

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.value.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        if set(params) != set(state):
            raise SchemaMismatchError("parameter names do not match the network layout")
        for name, value in state.items():
            if params[name].shape != np.shape(value):
                raise SchemaMismatchError(f"{name}: shape {np.shape(value)} != {params[name].shape}")
            params[name].value = np.array(value, dtype=np.float64, copy=True)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p.value)) for p in self.parameters())

    # ------------------------------------------------------------------
    # Forward / backward
    # ------------------------------------------------------------------
    def check_batch(self, batch: Batch) -> None:
        got = (batch.team_x.shape[1], batch.robot_x.shape[1], batch.pair_edge_x.shape[1])
        want = (self.dims["team"], self.dims["robot"], self.dims["edge"])
        if got != want:
            raise SchemaMismatchError(f"feature dimensions {got} do not match the network {want}")

    def forward(
        self, batch: Batch, train_mode: bool = False, rng: Optional[np.random.Generator] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns (pair scores, move logits). Dropout runs only in train_mode
        with a generator.
        """
        self.check_batch(batch)
        drop = rng if train_mode else None
        m = self.modules

        h0 = m["team_encoder"].forward(batch.team_x, drop)
        g = m["robot_encoder"].forward(batch.robot_x, drop)

        msg_in = np.hstack([h0[batch.edge_src], h0[batch.edge_dst], batch.edge_x])
        msgs = m["message"].forward(msg_in, drop)
        n_teams = h0.shape[0]
        deg = np.bincount(batch.edge_dst, minlength=n_teams).astype(float)
        agg = np.zeros((n_teams, self.hidden))
        np.add.at(agg, batch.edge_dst, msgs)
        # Teams without in-edges aggregate to the zero vector
        mean_msg = agg / np.maximum(deg, 1.0)[:, None]

        h1 = m["update"].forward(np.hstack([h0, mean_msg]), drop)

        pair_cur = batch.cur[batch.pair_robot]
        score_in = np.hstack(
            [g[batch.pair_robot], h1[pair_cur], h1[batch.pair_team], batch.pair_edge_x, batch.pair_xi[:, None]]
        )
        scores = m["scorer"].forward(score_in, drop)[:, 0]
        aux = m["aux_head"].forward(np.hstack([g, h1[batch.cur]]), drop)[:, 0]

        self._cache = {
            "deg": deg,
            "pair_cur": pair_cur,
            "n_teams": n_teams,
            "n_robots": g.shape[0],
            "mean_msg": mean_msg,
            "h1": h1,
        }
        self._batch = batch
        return scores, aux

    def backward(self, d_scores: np.ndarray, d_aux: np.ndarray) -> None:
        """Accumulates parameter gradients of the last forward."""
        batch, H, m = self._batch, self.hidden, self.modules
        deg, pair_cur = self._cache["deg"], self._cache["pair_cur"]

        dg = np.zeros((self._cache["n_robots"], H))
        dh1 = np.zeros((self._cache["n_teams"], H))

        d_score_in = m["scorer"].backward(d_scores[:, None])
        np.add.at(dg, batch.pair_robot, d_score_in[:, :H])
        np.add.at(dh1, pair_cur, d_score_in[:, H : 2 * H])
        np.add.at(dh1, batch.pair_team, d_score_in[:, 2 * H : 3 * H])

        d_aux_in = m["aux_head"].backward(d_aux[:, None])
        dg += d_aux_in[:, :H]
        np.add.at(dh1, batch.cur, d_aux_in[:, H:])

        d_update_in = m["update"].backward(dh1)
        dh0 = d_update_in[:, :H].copy()
        d_mean = d_update_in[:, H:]

        d_msgs = d_mean[batch.edge_dst] / np.maximum(deg, 1.0)[batch.edge_dst][:, None]
        d_msg_in = m["message"].backward(d_msgs)
        np.add.at(dh0, batch.edge_src, d_msg_in[:, :H])
        np.add.at(dh0, batch.edge_dst, d_msg_in[:, H : 2 * H])

        m["team_encoder"].backward(dh0)
        m["robot_encoder"].backward(dg)


# ----------------------------------------------------------------------
# Loss and outputs
# ----------------------------------------------------------------------
@dataclass
class LossBreakdown:
    total: float
    cross_entropy: float
    auxiliary: float
    d_scores: np.ndarray
    d_aux: np.ndarray


def policy_loss(
    scores: np.ndarray, aux: np.ndarray, batch: Batch, config: TrainConfig = TrainConfig()
) -> LossBreakdown:
    """
    Masked cross-entropy averaged over robots (transfer labels weighted by
    move_emphasis) plus aux_weight times the move/stay binary cross-entropy.
    Non-candidate actions never enter the softmax.
    """
    if batch.label_pair is None:
        raise ValueError("loss needs a labeled batch")
    n = batch.num_robots
    log_p = segment_log_softmax(scores, batch.starts)
    weights = np.where(batch.moves, config.move_emphasis, 1.0)
    ce = float(np.sum(weights * -log_p[batch.label_pair]) / n)

    y = batch.moves.astype(float)
    bce = float(np.mean(-(y * log_sigmoid(aux) + (1.0 - y) * log_sigmoid(-aux))))

    lengths = np.diff(np.append(batch.starts, scores.size))
    d_scores = np.exp(log_p) * np.repeat(weights / n, lengths)
    d_scores[batch.label_pair] -= weights / n
    d_aux = config.aux_weight * (sigmoid(aux) - y) / n

    return LossBreakdown(
        total=ce + config.aux_weight * bce, cross_entropy=ce, auxiliary=bce, d_scores=d_scores, d_aux=d_aux
    )


def dropout_rng(seed: int, step: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, optimizer step)."""
    return np.random.Generator(np.random.Philox([seed, step]))


def _sample_pairs(batch: Batch, sample: GraphSample, k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    lo = batch.robot_offsets[k]
    sel = (batch.pair_robot >= lo) & (batch.pair_robot < lo + sample.num_robots)
    return sel, batch.pair_robot[sel] - lo, batch.pair_team[sel] - batch.team_offsets[k]


def score_matrices(scores: np.ndarray, batch: Batch, samples: Sequence[GraphSample]) -> List[np.ndarray]:
    """Per-sample N x M action scores, -inf outside the candidate mask."""
    out = []
    for k, s in enumerate(samples):
        sel, rows, cols = _sample_pairs(batch, s, k)
        mat = np.full((s.num_robots, s.num_teams), -np.inf)
        mat[rows, cols] = scores[sel]
        out.append(mat)
    return out


def probability_matrices(scores: np.ndarray, batch: Batch, samples: Sequence[GraphSample]) -> List[np.ndarray]:
    """Masked softmax per robot; infeasible actions get exactly 0."""
    probs = np.exp(segment_log_softmax(scores, batch.starts))
    out = []
    for k, s in enumerate(samples):
        sel, rows, cols = _sample_pairs(batch, s, k)
        mat = np.zeros((s.num_robots, s.num_teams))
        mat[rows, cols] = probs[sel]
        out.append(mat)
    return out
