"""
Synthetic one-step dataset: sample, label with the exact solver, encode,
split and persist as JSON lines with a manifest.
"""

import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from src.core.errors import DatasetGenerationError
from src.core.hamilton import hamilton_mask
from src.core.model import Instance
from src.core.settings import SETTINGS
from src.domain._1fire_mission import FireOracle, team_statuses
from src.domain._2exact_solver import solve_one_step
from src.ingestion._3instance_sampler import sample_instance
from src.ingestion._4feature_encoding import (
    EDGE_FEATURES,
    ROBOT_FEATURES,
    TEAM_FEATURES,
    GraphSample,
    check_schema,
    compute_normalization,
    encode_features,
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetConfig:
    n_samples: int
    team_range: Tuple[int, int] = SETTINGS.GENERATION.TEAM_RANGE
    robots_per_team: Tuple[int, int] = SETTINGS.GENERATION.ROBOTS_PER_TEAM
    seed: int = 0
    timeout: Optional[float] = SETTINGS.ALLOCATION.SOLVER_TIMEOUT_S
    max_evals: Optional[int] = None
    # Deterministic evaluation budget, an alternative to the wall clock
    lam: float = SETTINGS.ALLOCATION.LAMBDA
    alpha: float = SETTINGS.ALLOCATION.ALPHA
    split: Tuple[float, float, float] = SETTINGS.GENERATION.SPLIT
    threads: int = 1
    max_attempts: int = SETTINGS.GENERATION.MAX_ATTEMPTS
    max_skip_rate: float = SETTINGS.GENERATION.MAX_SKIP_RATE

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"split fractions must be nonnegative and sum to 1, got {self.split}")


@dataclass
class SlotOutcome:
    sample: Optional[GraphSample]
    attempts: Dict[int, int] = field(default_factory=dict)
    # team count -> instances tried
    skips: Dict[int, int] = field(default_factory=dict)
    # team count -> instances skipped on timeout


# ----------------------------------------------------------------------
# Labeling
# ----------------------------------------------------------------------
def label_instance(
    instance: Instance,
    lam: float = SETTINGS.ALLOCATION.LAMBDA,
    alpha: float = SETTINGS.ALLOCATION.ALPHA,
    timeout: Optional[float] = SETTINGS.ALLOCATION.SOLVER_TIMEOUT_S,
    max_evals: Optional[int] = None,
) -> Optional[GraphSample]:
    """
    Exact one-step label of an instance, or None when the solve was
    truncated (the caller replaces the instance).
    """
    oracle = FireOracle(instance.mission, instance.robots)
    mask = hamilton_mask(instance, oracle)
    result = solve_one_step(instance, oracle, lam, alpha, timeout, mask=mask, max_evals=max_evals)
    if result.timed_out:
        return None

    statuses = team_statuses(instance.mission, instance.assignment, instance.robots)
    sample = encode_features(instance, mask, statuses, label=result.best_assignment.team_of)
    rows = np.arange(sample.num_robots)
    if not np.all(sample.candidate_mask[rows, sample.label]):
        raise AssertionError("label outside the candidate mask")
    return sample


def slot_seed(base_seed: int, slot: int, attempt: int) -> int:
    return int(np.random.SeedSequence([base_seed, slot, attempt]).generate_state(1)[0])


def _fill_slot(args: Tuple[int, DatasetConfig]) -> SlotOutcome:
    slot, config = args
    outcome = SlotOutcome(sample=None)
    for attempt in range(config.max_attempts):
        seed = slot_seed(config.seed, slot, attempt)
        instance = sample_instance(seed, config.team_range, config.robots_per_team)
        m = instance.num_teams
        outcome.attempts[m] = outcome.attempts.get(m, 0) + 1
        sample = label_instance(instance, config.lam, config.alpha, config.timeout, config.max_evals)
        if sample is not None:
            outcome.sample = sample
            return outcome
        outcome.skips[m] = outcome.skips.get(m, 0) + 1
        logger.warning("[Datagen] slot %d: seed %d (M=%d) timed out, drawing a fresh seed", slot, seed, m)
    return outcome


# ----------------------------------------------------------------------
# Splitting
# ----------------------------------------------------------------------
def split_indices(strata: Sequence[int], fractions: Tuple[float, float, float], seed: int) -> Dict[str, List[int]]:
    """
    Shuffled train / val / test indices stratified by team count, with a
    plain shuffled split when some stratum is too small.
    """
    indices = np.arange(len(strata))
    strata = np.asarray(strata)
    train_frac, val_frac, test_frac = fractions
    rest_frac = val_frac + test_frac

    def _split(idx: np.ndarray, labels: np.ndarray, test_size: float) -> Tuple[np.ndarray, np.ndarray]:
        if test_size <= 0.0:
            return idx, idx[:0]
        if test_size >= 1.0:
            return idx[:0], idx
        try:
            return train_test_split(idx, test_size=test_size, stratify=labels, random_state=seed)
        except ValueError:
            logger.warning("[Datagen] stratified split impossible, falling back to a plain shuffle")
            return train_test_split(idx, test_size=test_size, random_state=seed)

    train, rest = _split(indices, strata, rest_frac)
    if rest_frac > 0 and len(rest):
        val, test = _split(rest, strata[rest], test_frac / rest_frac)
    else:
        val, test = rest[:0], rest[:0]
    return {"train": [int(i) for i in train], "val": [int(i) for i in val], "test": [int(i) for i in test]}


# ----------------------------------------------------------------------
# Files
# ----------------------------------------------------------------------
def write_split(path: Path, split: str, samples: Sequence[GraphSample]) -> None:
    header = {"header": {"feature_schema": SETTINGS.FEATURE_SCHEMA, "split": split, "count": len(samples)}}
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for sample in samples:
            f.write(json.dumps(sample.to_record(), sort_keys=True) + "\n")


def load_split(path: Path) -> List[GraphSample]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
        header = json.loads(first).get("header") if first.strip() else None
        if header is None:
            raise DatasetGenerationError(f"{path}: missing header line")
        check_schema(header.get("feature_schema", ""))
        for line in f:
            if line.strip():
                samples.append(GraphSample.from_record(json.loads(line)))
    return samples


def load_manifest(out_dir: Path) -> Dict[str, Any]:
    path = Path(out_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


# ----------------------------------------------------------------------
# Pipeline
# ----------------------------------------------------------------------
def generate_samples(config: DatasetConfig) -> Tuple[List[GraphSample], Dict[int, int], Dict[int, int]]:
    """Labeled samples in slot order plus per-team-count attempt / skip counts."""
    jobs = [(k, config) for k in range(config.n_samples)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(_fill_slot, jobs, chunksize=max(1, len(jobs) // (4 * config.threads))))
    else:
        outcomes = [_fill_slot(job) for job in jobs]

    attempts: Counter = Counter()
    skips: Counter = Counter()
    for outcome in outcomes:
        attempts.update(outcome.attempts)
        skips.update(outcome.skips)

    for m in sorted(attempts):
        rate = skips[m] / attempts[m]
        if rate > config.max_skip_rate:
            raise DatasetGenerationError(
                f"timeout skip rate {rate:.0%} for {m} teams exceeds {config.max_skip_rate:.0%} "
                f"({skips[m]} of {attempts[m]} instances); raise the timeout or narrow the team range"
            )

    missing = [k for k, o in enumerate(outcomes) if o.sample is None]
    if missing:
        raise DatasetGenerationError(f"{len(missing)} slots exhausted {config.max_attempts} attempts (first: {missing[0]})")

    return [o.sample for o in outcomes], dict(attempts), dict(skips)


def generate_dataset(config: DatasetConfig, out_dir: Path) -> Dict[str, Any]:
    """
    Writes train.jsonl, val.jsonl, test.jsonl and manifest.json; returns
    the manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("[Datagen] labeling %d samples (teams %s, seed %d)", config.n_samples, config.team_range, config.seed)

    samples, attempts, skips = generate_samples(config)
    strata = [s.num_teams for s in samples]
    splits = split_indices(strata, config.split, config.seed)
    stats = compute_normalization([samples[i] for i in splits["train"]])

    for name in SPLITS:
        write_split(out_dir / f"{name}.jsonl", name, [samples[i] for i in splits[name]])

    moves = int(sum(int(s.moves().sum()) for s in samples))
    decisions = int(sum(s.num_robots for s in samples))
    manifest = {
        "feature_schema": SETTINGS.FEATURE_SCHEMA,
        "features": {"team": list(TEAM_FEATURES), "robot": list(ROBOT_FEATURES), "edge": list(EDGE_FEATURES)},
        "num_samples": len(samples),
        "split_sizes": {name: len(splits[name]) for name in SPLITS},
        "team_histogram": {str(k): v for k, v in sorted(Counter(strata).items())},
        "robot_histogram": {str(k): v for k, v in sorted(Counter(s.num_robots for s in samples).items())},
        "labels": {"stay": decisions - moves, "move": moves, "move_fraction": moves / decisions if decisions else 0.0},
        "normalization": stats.to_dict(),
        "attempts": {str(k): v for k, v in sorted(attempts.items())},
        "skips": {str(k): v for k, v in sorted(skips.items())},
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")

    logger.info(
        "[Datagen] wrote %s, move fraction %.2f%%",
        manifest["split_sizes"],
        100.0 * manifest["labels"]["move_fraction"],
    )
    return manifest
