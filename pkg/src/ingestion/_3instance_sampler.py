"""
Random heterogeneous instances for data generation and benchmarks.
Everything is drawn from a single numpy Generator seeded by the caller,
so one seed always yields the same instance.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from src.core.model import Assignment, FeasibilityRules, Instance, InteractionGraph, Robot, TeamWeights
from src.core.settings import SETTINGS, FireSettings, GenerationSettings
from src.domain._1fire_mission import SENSING, FireMissionState, default_regions, gaussian_blob_field

logger = logging.getLogger(__name__)

MAX_PLACEMENT_TRIES = 2000
MAX_ASSIGNMENT_TRIES = 1000


# ----------------------------------------------------------------------
# Graph and geometry
# ----------------------------------------------------------------------
def _sample_edges(rng: np.random.Generator, M: int, extra_prob: float) -> List[Tuple[int, int]]:
    """Random attachment spanning tree plus independent extra edges."""
    edges = set()
    for v in range(1, M):
        parent = int(rng.integers(0, v))
        edges.add((parent, v))
    for i in range(M):
        for j in range(i + 1, M):
            if (i, j) not in edges and rng.random() < extra_prob:
                edges.add((i, j))
    return sorted(edges)


def _sample_positions(rng: np.random.Generator, M: int, gen: GenerationSettings) -> np.ndarray:
    """Uniform positions in a square workspace with a minimum pairwise separation."""
    side = gen.WORKSPACE_SCALE * math.sqrt(M)
    positions: List[np.ndarray] = []
    tries = 0
    while len(positions) < M:
        candidate = rng.uniform(0.0, side, size=2)
        if all(np.linalg.norm(candidate - p) >= gen.MIN_SEPARATION for p in positions):
            positions.append(candidate)
        tries += 1
        if tries % MAX_PLACEMENT_TRIES == 0:
            side *= 1.1
    return np.array(positions)


# ----------------------------------------------------------------------
# Robots and initial assignment
# ----------------------------------------------------------------------
def _sample_robots(rng: np.random.Generator, N: int, M: int, gen: GenerationSettings) -> Tuple[Robot, ...]:
    # Re-roll capabilities until every team can get a sensing robot
    while True:
        sensing = rng.random(N) < gen.SENSING_PROB
        if sensing.sum() >= M:
            break

    robots = []
    for r in range(N):
        speed = float(rng.uniform(*gen.SPEED_RANGE))
        if sensing[r]:
            robots.append(Robot(id=r, capability=(1, 0), speed=speed, capacity=0.0))
        else:
            robots.append(Robot(id=r, capability=(0, 1), speed=speed, capacity=float(rng.uniform(*gen.CAPACITY_RANGE))))
    return tuple(robots)


def _sample_assignment(rng: np.random.Generator, robots: Tuple[Robot, ...], sizes: np.ndarray) -> np.ndarray:
    """
    Random assignment with the drawn team sizes in which every team holds
    a sensing robot. Rejection first, then a seeded construction that seeds
    each team with one sensing robot.
    """
    M = len(sizes)
    slots = np.repeat(np.arange(M), sizes)
    is_sensing = np.array([r.has(SENSING) for r in robots])

    for _ in range(MAX_ASSIGNMENT_TRIES):
        team_of = rng.permutation(slots)
        if np.all(np.bincount(team_of[is_sensing], minlength=M) >= 1):
            return team_of

    logger.debug("[Datagen] assignment rejection exhausted, seeding sensing robots")
    team_of = np.empty(len(robots), dtype=np.int64)
    sensing_ids = rng.permutation(np.flatnonzero(is_sensing))
    team_of[sensing_ids[:M]] = np.arange(M)
    rest = np.setdiff1d(np.arange(len(robots)), sensing_ids[:M])
    remaining_slots = np.repeat(np.arange(M), sizes - 1)
    team_of[rng.permutation(rest)] = remaining_slots
    return team_of


def sample_instance(
    seed: int,
    team_range: Tuple[int, int] = SETTINGS.GENERATION.TEAM_RANGE,
    robots_per_team_range: Tuple[int, int] = SETTINGS.GENERATION.ROBOTS_PER_TEAM,
    gen: GenerationSettings = SETTINGS.GENERATION,
    fire: FireSettings = SETTINGS.FIRE,
    num_teams: Optional[int] = None,
) -> Instance:
    """
    Connected team graph, separated positions, fire regions, weights,
    robots and a feasible initial assignment, all drawn from one seed.
    num_teams pins the team count (benchmarks).
    """
    if team_range[0] > team_range[1] or robots_per_team_range[0] > robots_per_team_range[1]:
        raise ValueError("ranges must be nonempty")
    if team_range[0] < 1 or robots_per_team_range[0] < 1:
        raise ValueError("ranges must be positive")

    rng = np.random.default_rng(seed)
    M = int(num_teams) if num_teams is not None else int(rng.integers(team_range[0], team_range[1] + 1))

    edges = _sample_edges(rng, M, gen.EXTRA_EDGE_PROB)
    positions = _sample_positions(rng, M, gen)
    graph = InteractionGraph.build(M, edges, positions)
    weights = TeamWeights.of(rng.uniform(*gen.WEIGHT_RANGE, size=M))

    sizes = rng.integers(robots_per_team_range[0], robots_per_team_range[1] + 1, size=M)
    robots = _sample_robots(rng, int(sizes.sum()), M, gen)
    team_of = _sample_assignment(rng, robots, sizes)

    regions = default_regions(positions, fire)
    mission = FireMissionState(
        regions=regions,
        densities=tuple(gaussian_blob_field(region, rng, fire) for region in regions),
        lloyd_seed=int(seed),
    )

    return Instance(
        graph=graph,
        robots=robots,
        weights=weights,
        assignment=Assignment.of(team_of, M),
        rules=FeasibilityRules(min_team_size=1, required_capability=SENSING),
        mission=mission,
        seed=int(seed),
    )
