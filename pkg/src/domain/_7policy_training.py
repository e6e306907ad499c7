"""
Supervised training of the graph policy on exact one-step labels:
AdamW with decoupled weight decay, per-epoch metrics, best-validation
checkpoint selection and the multi-seed robustness protocol.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, confusion_matrix, precision_score, recall_score

from src.core.errors import TrainingDivergedError
from src.core.settings import TrainConfig
from src.domain._6gnn_policy import Batch, PolicyNet, collate, dropout_rng, policy_loss, score_matrices
from src.domain.nn_layers import Parameter
from src.ingestion._4feature_encoding import GraphSample, NormalizationStats

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = [
    "epoch",
    "train_loss",
    "val_loss",
    "exact_acc",
    "ms_acc",
    "top3",
    "move_target",
    "move_precision",
    "move_recall",
]


# ----------------------------------------------------------------------
# Optimizer
# ----------------------------------------------------------------------
class AdamW:
    """
    Adam with decoupled weight decay:
    p *= 1 - lr wd, then p -= lr_t m / (sqrt(v) + eps).
    """

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float,
        weight_decay: float,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        lr_t = self.lr * np.sqrt(1 - self.b2**self.t) / (1 - self.b1**self.t)
        for k, p in enumerate(self.params):
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * p.grad
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * p.grad**2
            p.value *= 1.0 - self.lr * self.weight_decay
            p.value -= lr_t * self.m[k] / (np.sqrt(self.v[k]) + self.eps)


# ----------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------
@dataclass
class EvalMetrics:
    exact_acc: float
    ms_acc: float
    top3: float
    move_target: float
    move_precision: float
    move_recall: float
    mean_loss: float
    confusion: Dict[str, int] = field(default_factory=dict)
    # Move/stay decision counts: tp, fp, fn, tn with "move" as positive
    n_robots: int = 0

    def to_dict(self) -> Dict:
        return asdict(self)


def classification_metrics(
    pred: np.ndarray,
    label: np.ndarray,
    cur: np.ndarray,
    top3_hit: np.ndarray,
    mean_loss: float = float("nan"),
) -> EvalMetrics:
    """Robot-level metrics from predicted and optimal destinations."""
    pred_move = pred != cur
    label_move = label != cur
    cm = confusion_matrix(label_move, pred_move, labels=[False, True])
    tn, fp, fn, tp = (int(x) for x in cm.ravel())
    return EvalMetrics(
        exact_acc=float(accuracy_score(label, pred)) if label.size else 0.0,
        ms_acc=float(accuracy_score(label_move, pred_move)) if label.size else 0.0,
        top3=float(np.mean(top3_hit)) if label.size else 0.0,
        move_target=float(np.mean(pred[label_move] == label[label_move])) if label_move.any() else 0.0,
        move_precision=float(precision_score(label_move, pred_move, zero_division=0)),
        move_recall=float(recall_score(label_move, pred_move, zero_division=0)),
        mean_loss=mean_loss,
        confusion={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        n_robots=int(label.size),
    )


def _batches(samples: Sequence[GraphSample], size: int, order: Optional[np.ndarray] = None) -> List[List[GraphSample]]:
    idx = np.arange(len(samples)) if order is None else order
    return [[samples[i] for i in idx[k : k + size]] for k in range(0, len(idx), size)]


def evaluate(
    net: PolicyNet,
    samples: Sequence[GraphSample],
    config: TrainConfig = TrainConfig(),
    stay_edge: Optional[np.ndarray] = None,
) -> EvalMetrics:
    """
    Metrics of the deterministic (no dropout) policy on normalized samples.
    Predictions are the argmax over candidate actions, lowest team id on ties.
    """
    preds, labels, curs, hits = [], [], [], []
    loss_sum, robots = 0.0, 0
    for chunk in _batches(samples, config.batch_size):
        batch = _collate(chunk, stay_edge)
        scores, aux = net.forward(batch, train_mode=False)
        loss = policy_loss(scores, aux, batch, config)
        loss_sum += loss.total * batch.num_robots
        robots += batch.num_robots
        for s, mat in zip(chunk, score_matrices(scores, batch, chunk)):
            pred = np.argmax(mat, axis=1)
            # Stable sort: equal scores keep ascending team order
            top = np.argsort(-mat, axis=1, kind="stable")[:, :3]
            n_cand = s.candidate_mask.sum(axis=1)
            hit = np.array(
                [s.label[r] in top[r, : min(3, n_cand[r])] for r in range(s.num_robots)], dtype=bool
            )
            preds.append(pred)
            labels.append(s.label)
            curs.append(s.cur)
            hits.append(hit)

    if not preds:
        return classification_metrics(np.zeros(0, int), np.zeros(0, int), np.zeros(0, int), np.zeros(0, bool), 0.0)
    return classification_metrics(
        np.concatenate(preds),
        np.concatenate(labels),
        np.concatenate(curs),
        np.concatenate(hits),
        loss_sum / max(robots, 1),
    )


def _collate(chunk: Sequence[GraphSample], stay_edge: Optional[np.ndarray]) -> Batch:
    return collate(chunk) if stay_edge is None else collate(chunk, stay_edge)


# ----------------------------------------------------------------------
# Training loop
# ----------------------------------------------------------------------
@dataclass
class TrainResult:
    net: PolicyNet
    history: pd.DataFrame
    best_epoch: Optional[int]
    best_val: Optional[EvalMetrics]
    stats: NormalizationStats


def train(
    net: PolicyNet,
    train_samples: Sequence[GraphSample],
    val_samples: Sequence[GraphSample],
    config: TrainConfig = TrainConfig(),
    stats: Optional[NormalizationStats] = None,
) -> TrainResult:
    """
    Shuffled mini-batch AdamW. Samples are raw; stats (train-split
    normalization) are applied here. The returned net holds the parameters
    of the epoch with the best validation exact accuracy.
    """
    stats = stats or NormalizationStats.identity()
    train_n = [stats.normalize(s) for s in train_samples]
    val_n = [stats.normalize(s) for s in val_samples]
    stay = stats.stay_edge()

    history = pd.DataFrame(columns=HISTORY_COLUMNS)
    if config.epochs == 0 or not train_n:
        return TrainResult(net=net, history=history, best_epoch=None, best_val=None, stats=stats)

    optimizer = AdamW(net.parameters(), config.lr, config.weight_decay, config.betas, config.eps)
    shuffle_rng = np.random.default_rng(config.seed)
    best_state, best_epoch, best_val = net.state_dict(), None, None
    rows = []

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_n))
        loss_sum, robots = 0.0, 0
        for batch_index, chunk in enumerate(_batches(train_n, config.batch_size, order)):
            batch = collate(chunk, stay)
            scores, aux = net.forward(batch, train_mode=True, rng=dropout_rng(config.seed, optimizer.t))
            loss = policy_loss(scores, aux, batch, config)
            if not np.isfinite(loss.total):
                raise TrainingDivergedError(epoch, batch_index, [s for s in batch.seeds if s is not None])
            net.zero_grad()
            net.backward(loss.d_scores, loss.d_aux)
            optimizer.step()
            loss_sum += loss.total * batch.num_robots
            robots += batch.num_robots

        val = evaluate(net, val_n, config, stay) if val_n else evaluate(net, train_n, config, stay)
        row = {
            "epoch": epoch,
            "train_loss": loss_sum / max(robots, 1),
            "val_loss": val.mean_loss,
            "exact_acc": val.exact_acc,
            "ms_acc": val.ms_acc,
            "top3": val.top3,
            "move_target": val.move_target,
            "move_precision": val.move_precision,
            "move_recall": val.move_recall,
        }
        rows.append(row)
        logger.info(
            "[Train] epoch %d/%d train %.4f val %.4f exact %.4f ms %.4f top3 %.4f",
            epoch,
            config.epochs,
            row["train_loss"],
            row["val_loss"],
            val.exact_acc,
            val.ms_acc,
            val.top3,
        )
        if best_val is None or val.exact_acc > best_val.exact_acc:
            best_state, best_epoch, best_val = net.state_dict(), epoch, val

    net.load_state_dict(best_state)
    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    return TrainResult(net=net, history=history, best_epoch=best_epoch, best_val=best_val, stats=stats)


def multi_seed_robustness(
    train_samples: Sequence[GraphSample],
    val_samples: Sequence[GraphSample],
    test_samples: Sequence[GraphSample],
    seeds: Sequence[int],
    config: TrainConfig = TrainConfig(),
    stats: Optional[NormalizationStats] = None,
) -> pd.DataFrame:
    """
    Trains one net per seed and reports test metrics per seed plus
    mean / std / min / max rows.
    """
    stats = stats or NormalizationStats.identity()
    test_n = [stats.normalize(s) for s in test_samples]
    rows = []
    for seed in seeds:
        run_config = replace(config, seed=int(seed))
        result = train(PolicyNet.from_config(run_config), train_samples, val_samples, run_config, stats)
        metrics = evaluate(result.net, test_n, run_config, stats.stay_edge())
        rows.append(
            {
                "seed": str(seed),
                "exact_acc": metrics.exact_acc,
                "ms_acc": metrics.ms_acc,
                "top3": metrics.top3,
                "move_target": metrics.move_target,
                "move_precision": metrics.move_precision,
                "move_recall": metrics.move_recall,
            }
        )
        logger.info("[Train] seed %s: exact %.4f", seed, metrics.exact_acc)

    table = pd.DataFrame(rows)
    metric_cols = [c for c in table.columns if c != "seed"]
    summary = [
        {"seed": name, **getattr(table[metric_cols], name)(**({"ddof": 0} if name == "std" else {})).to_dict()}
        for name in ("mean", "std", "min", "max")
    ]
    return pd.concat([table, pd.DataFrame(summary)], ignore_index=True)
