"""
Runtime scaling of the exact iterative optimizer against policy episodes.
One seeded instance per team count; both methods run on the same instance.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import pandas as pd

from src.core.settings import SETTINGS
from src.domain._2exact_solver import solve_iterative_exact
from src.domain._8gnn_inference import ActionScorer, run_episode
from src.domain.episode_log import EpisodeLog
from src.ingestion._3instance_sampler import sample_instance

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ["teams", "robots", "method", "total_seconds", "mean_step_seconds", "steps", "timed_out"]


@dataclass
class BenchRow:
    teams: int
    robots: int
    method: str
    # exact | gnn
    total_seconds: float
    mean_step_seconds: float
    steps: int
    timed_out: bool


def _row(teams: int, robots: int, method: str, log: EpisodeLog) -> BenchRow:
    decisions = max(log.decisions, 1)
    return BenchRow(
        teams=teams,
        robots=robots,
        method=method,
        total_seconds=log.wall_seconds,
        mean_step_seconds=log.wall_seconds / decisions,
        steps=len(log.steps),
        timed_out=log.timed_out,
    )


def _bench_size(args: Tuple[int, int, float, Optional[ActionScorer], int, int, bool]) -> List[BenchRow]:
    teams, robots_per_team, exact_timeout, policy, seed, max_steps, run_exact = args
    instance = sample_instance(
        seed + teams,
        team_range=(teams, teams),
        robots_per_team_range=(robots_per_team, robots_per_team),
    )
    rows = []
    if run_exact:
        exact = solve_iterative_exact(instance, timeout=exact_timeout, max_steps=max_steps)
        rows.append(_row(teams, instance.num_robots, "exact", exact))
        logger.info(
            "[Bench] exact M=%d N=%d: %.3fs%s",
            teams,
            instance.num_robots,
            exact.wall_seconds,
            " (timed out)" if exact.timed_out else "",
        )
    if policy is not None:
        gnn = run_episode(instance, policy, max_steps=max_steps)
        rows.append(_row(teams, instance.num_robots, "gnn", gnn))
        logger.info("[Bench] gnn M=%d N=%d: %.3fs", teams, instance.num_robots, gnn.wall_seconds)
    return rows


def run_bench(
    sizes: Sequence[int],
    robots_per_team: int,
    exact_timeout: float,
    policy: Optional[ActionScorer],
    seed: int = 0,
    max_steps: int = SETTINGS.SIMULATION.MAX_STEPS,
    threads: int = 1,
    exact_max_teams: Optional[int] = None,
) -> pd.DataFrame:
    """
    BenchRow table in size order. exact_max_teams skips the exact method
    above that team count (its timeout is then certain).
    """
    jobs = [
        (m, robots_per_team, exact_timeout, policy, seed, max_steps, exact_max_teams is None or m <= exact_max_teams)
        for m in sizes
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_bench_size, jobs))
    else:
        results = [_bench_size(job) for job in jobs]

    rows = [asdict(row) for per_size in results for row in per_size]
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)
