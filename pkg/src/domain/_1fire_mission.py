"""
Fire-fighting mission oracle.

Each team owns a square region discretized into a uniform cell grid with a
piecewise-constant fire density. Sensing robots are placed by Lloyd's
algorithm (centroidal Voronoi configuration), their coverage quality is
turned into a sensing effectiveness in [0, 1], and fire-fighting robots
decay the density exponentially at a rate set by their summed capacity.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from src.core.errors import InstanceFormatError
from src.core.model import Assignment, Robot
from src.core.settings import SETTINGS, FireSettings

logger = logging.getLogger(__name__)

SENSING = 0
FIGHTING = 1
# Capability indices of the fire application


# ----------------------------------------------------------------------
# Regions, fields and configuration
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class TeamRegion:
    origin: Tuple[float, float]
    width: float
    height: float
    grid_resolution: int
    # Cells per side

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("region width and height must be positive")
        if self.grid_resolution < SETTINGS.FIRE.MIN_GRID_RESOLUTION:
            raise ValueError(f"grid_resolution must be at least {SETTINGS.FIRE.MIN_GRID_RESOLUTION}")

    @property
    def cell_area(self) -> float:
        return self.width * self.height / self.grid_resolution**2

    @property
    def num_cells(self) -> int:
        return self.grid_resolution**2

    def cell_centers(self) -> np.ndarray:
        """(R*R, 2) midpoints, row-major (rows along y, columns along x)."""
        res = self.grid_resolution
        xs = self.origin[0] + (np.arange(res) + 0.5) * self.width / res
        ys = self.origin[1] + (np.arange(res) + 0.5) * self.height / res
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def center(self) -> np.ndarray:
        return np.array([self.origin[0] + self.width / 2, self.origin[1] + self.height / 2])

    def overlaps(self, other: "TeamRegion") -> bool:
        return not (
            self.origin[0] + self.width <= other.origin[0]
            or other.origin[0] + other.width <= self.origin[0]
            or self.origin[1] + self.height <= other.origin[1]
            or other.origin[1] + other.height <= self.origin[1]
        )


@dataclass(frozen=True, eq=False)
class DensityField:
    values: np.ndarray
    # Row-major fire intensity per unit area, one entry per cell
    cell_area: float

    @classmethod
    def of(cls, values: Sequence[float], cell_area: float) -> "DensityField":
        arr = np.array(values, dtype=float, copy=True).ravel()
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("density values must be finite and nonnegative")
        if cell_area <= 0:
            raise ValueError("cell_area must be positive")
        arr.flags.writeable = False
        return cls(values=arr, cell_area=float(cell_area))

    def total(self) -> float:
        """Integral of the field over the region."""
        return float(self.values.sum() * self.cell_area)

    def is_zero(self) -> bool:
        return not np.any(self.values > 0)


@dataclass(frozen=True)
class CoverageConfig:
    lloyd_max_iters: int = SETTINGS.FIRE.LLOYD_MAX_ITERS
    lloyd_tol: float = SETTINGS.FIRE.LLOYD_TOL
    sigmoid_a: float = SETTINGS.FIRE.SIGMOID_A
    sigmoid_b: float = SETTINGS.FIRE.SIGMOID_B

    def __post_init__(self) -> None:
        if self.lloyd_tol <= 0:
            raise ValueError("lloyd_tol must be positive")
        if self.lloyd_max_iters < 1:
            raise ValueError("lloyd_max_iters must be at least 1")


@dataclass(frozen=True)
class FireDynamicsConfig:
    eta: float = SETTINGS.FIRE.ETA
    dt: float = SETTINGS.FIRE.DT

    def __post_init__(self) -> None:
        if self.eta <= 0 or self.dt <= 0:
            raise ValueError("eta and dt must be positive")


@dataclass
class LloydResult:
    """
    Converged sensor positions plus diagnostics of the run.
    """
    positions: np.ndarray
    iterations: int
    converged: bool
    initial_cost: float
    final_cost: float
    substituted_uniform: bool = False


# ----------------------------------------------------------------------
# Coverage
# ----------------------------------------------------------------------
def _jittered_grid(region: TeamRegion, n: int, rng: np.random.Generator) -> np.ndarray:
    cols = max(1, math.ceil(math.sqrt(n * region.width / region.height)))
    rows = math.ceil(n / cols)
    dx, dy = region.width / cols, region.height / rows

    slots = np.arange(n)
    px = region.origin[0] + (slots % cols + 0.5) * dx
    py = region.origin[1] + (slots // cols + 0.5) * dy
    jitter = rng.uniform(-0.25, 0.25, size=(n, 2)) * np.array([dx, dy])
    pos = np.column_stack([px, py]) + jitter

    pos[:, 0] = np.clip(pos[:, 0], region.origin[0], region.origin[0] + region.width)
    pos[:, 1] = np.clip(pos[:, 1], region.origin[1], region.origin[1] + region.height)
    return pos


def _nearest(centers: np.ndarray, positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d2 = cdist(centers, positions, metric="sqeuclidean")
    # argmin returns the lowest index on ties
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(centers)), labels]


def locational_cost(positions: np.ndarray, region: TeamRegion, density: DensityField) -> float:
    """
    Density-weighted squared distance of every cell to its nearest sensor.
    Zero when there is no sensor.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if pos.shape[0] == 0:
        return 0.0
    _, d2 = _nearest(region.cell_centers(), pos)
    return float(np.sum(d2 * density.values) * density.cell_area)


def lloyd_cvt(
    region: TeamRegion,
    density: DensityField,
    n_sensors: int,
    config: CoverageConfig = CoverageConfig(),
    seed: int = 0,
) -> LloydResult:
    """
    Lloyd iterations restricted to grid cells.

    Each step assigns cells to their nearest sensor and moves every sensor
    to the mass-weighted centroid of its cells. A sensor whose cell has no
    mass keeps its position.
    """
    if n_sensors < 1:
        raise ValueError(f"n_sensors must be at least 1, got {n_sensors}")

    substituted = False
    if density.is_zero():
        logger.warning("[Fire] zero density field, substituting uniform density for Lloyd")
        density = DensityField.of(np.ones(region.num_cells), density.cell_area)
        substituted = True

    centers = region.cell_centers()
    mass = density.values * density.cell_area
    rng = np.random.default_rng(seed)
    positions = _jittered_grid(region, n_sensors, rng)
    initial_cost = locational_cost(positions, region, density)

    converged = False
    iterations = 0
    for iterations in range(1, config.lloyd_max_iters + 1):
        labels, _ = _nearest(centers, positions)
        cell_mass = np.bincount(labels, weights=mass, minlength=n_sensors)
        sum_x = np.bincount(labels, weights=mass * centers[:, 0], minlength=n_sensors)
        sum_y = np.bincount(labels, weights=mass * centers[:, 1], minlength=n_sensors)

        updated = positions.copy()
        has_mass = cell_mass > 0
        updated[has_mass, 0] = sum_x[has_mass] / cell_mass[has_mass]
        updated[has_mass, 1] = sum_y[has_mass] / cell_mass[has_mass]

        shift = float(np.max(np.linalg.norm(updated - positions, axis=1)))
        positions = updated
        if shift < config.lloyd_tol:
            converged = True
            break

    if not converged:
        logger.warning(
            "[Fire] Lloyd did not converge in %d iterations (n=%d)", config.lloyd_max_iters, n_sensors
        )

    return LloydResult(
        positions=positions,
        iterations=iterations,
        converged=converged,
        initial_cost=initial_cost,
        final_cost=locational_cost(positions, region, density),
        substituted_uniform=substituted,
    )


def sensing_effectiveness(n_sensing: int, L: float, config: CoverageConfig = CoverageConfig()) -> float:
    """
    psi = 0 without sensing robots, 1 at perfect coverage (L = 0),
    sigmoid(a (1/L - b)) otherwise.
    """
    if L < 0:
        raise ValueError("locational cost must be nonnegative")
    if n_sensing == 0:
        return 0.0
    if L == 0.0:
        return 1.0
    if math.isinf(L):
        return float(expit(-config.sigmoid_a * config.sigmoid_b))
    return float(expit(config.sigmoid_a * (1.0 / L - config.sigmoid_b)))


# ----------------------------------------------------------------------
# Suppression
# ----------------------------------------------------------------------
def fire_power(robot_set: FrozenSet[int], robots: Sequence[Robot]) -> float:
    """Summed capacity of the fire-fighting robots of a set."""
    return float(sum(robots[r].capacity for r in sorted(robot_set) if robots[r].has(FIGHTING)))


def count_sensing(robot_set: FrozenSet[int], robots: Sequence[Robot]) -> int:
    return sum(1 for r in robot_set if robots[r].has(SENSING))


def decay_density(
    density: DensityField,
    P: float,
    psi: float,
    config: FireDynamicsConfig = FireDynamicsConfig(),
) -> DensityField:
    """phi' = phi * exp(-P psi dt / eta), cell by cell."""
    if P < 0 or not 0.0 <= psi <= 1.0:
        raise ValueError("P must be nonnegative and psi lie in [0, 1]")
    factor = math.exp(-P * psi * config.dt / config.eta)
    return DensityField.of(density.values * factor, density.cell_area)


def gaussian_blob_field(region: TeamRegion, rng: np.random.Generator, fire: FireSettings = SETTINGS.FIRE) -> DensityField:
    """
    Initial fire: sum of 1-3 isotropic Gaussian blobs inside the region.
    """
    centers = region.cell_centers()
    values = np.zeros(region.num_cells)
    n_blobs = int(rng.integers(fire.BLOB_COUNT[0], fire.BLOB_COUNT[1] + 1))
    for _ in range(n_blobs):
        mu = np.asarray(region.origin) + rng.uniform(0.0, 1.0, size=2) * [region.width, region.height]
        peak = rng.uniform(*fire.BLOB_PEAK)
        sigma = rng.uniform(*fire.BLOB_SPREAD) * min(region.width, region.height)
        d2 = np.sum((centers - mu) ** 2, axis=1)
        values += peak * np.exp(-d2 / (2 * sigma**2))
    return DensityField.of(values, region.cell_area)


# ----------------------------------------------------------------------
# Mission state
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class TeamFireStatus:
    """
    Per-team quantities the feature encoder consumes.
    """
    n_sensing: int
    power: float
    L: float
    psi: float
    total_fire: float


@dataclass(frozen=True, eq=False)
class FireMissionState:
    regions: Tuple[TeamRegion, ...]
    densities: Tuple[DensityField, ...]
    coverage: CoverageConfig = field(default_factory=CoverageConfig)
    dynamics: FireDynamicsConfig = field(default_factory=FireDynamicsConfig)
    version: int = 0
    # Incremented by every committed density update
    lloyd_seed: int = 0
    last_statuses: Optional[Tuple[TeamFireStatus, ...]] = None
    _coverage_cache: Dict[Tuple[int, int, int], Tuple[float, float]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self) -> None:
        if len(self.regions) != len(self.densities):
            raise ValueError("one density field per region is required")
        for region, density in zip(self.regions, self.densities):
            if density.values.size != region.num_cells:
                raise ValueError("density size does not match the region grid")

    @property
    def num_teams(self) -> int:
        return len(self.regions)

    def team_totals(self) -> np.ndarray:
        return np.array([d.total() for d in self.densities])

    def total_fire(self) -> float:
        return float(self.team_totals().sum())

    def coverage_of(self, team: int, n_sensing: int) -> Tuple[float, float]:
        """
        (L, psi) of a team with n_sensing robots at their Lloyd positions,
        memoized per (team, sensing count, density version).
        """
        key = (team, n_sensing, self.version)
        cached = self._coverage_cache.get(key)
        if cached is not None:
            return cached

        if n_sensing == 0:
            result = (0.0, 0.0)
        else:
            region, density = self.regions[team], self.densities[team]
            lloyd = lloyd_cvt(
                region, density, n_sensing, self.coverage, seed=self.lloyd_seed * 1009 + team * 31 + n_sensing
            )
            L = locational_cost(lloyd.positions, region, density)
            result = (L, sensing_effectiveness(n_sensing, L, self.coverage))

        self._coverage_cache[key] = result
        return result

    def status(self, team: int, robot_set: FrozenSet[int], robots: Sequence[Robot]) -> TeamFireStatus:
        n_s = count_sensing(robot_set, robots)
        L, psi = self.coverage_of(team, n_s)
        return TeamFireStatus(
            n_sensing=n_s,
            power=fire_power(robot_set, robots),
            L=L,
            psi=psi,
            total_fire=self.densities[team].total(),
        )


def team_statuses(
    state: FireMissionState, assignment: Assignment, robots: Sequence[Robot]
) -> Tuple[TeamFireStatus, ...]:
    return tuple(state.status(v, assignment.members(v), robots) for v in range(state.num_teams))


def mission_value(
    team_id: int, robot_set: FrozenSet[int], state: FireMissionState, robots: Sequence[Robot]
) -> float:
    """
    Minus the total fire the team would have after one decay step with
    robot_set assigned. Does not mutate the state.
    """
    density = state.densities[team_id]
    if density.is_zero():
        return 0.0
    status = state.status(team_id, robot_set, robots)
    return -decay_density(density, status.power, status.psi, state.dynamics).total()


def advance_fire(
    state: FireMissionState, assignment: Assignment, robots: Sequence[Robot]
) -> FireMissionState:
    """
    Commits one decay step for every team with its actual assigned set.
    """
    statuses = team_statuses(state, assignment, robots)
    densities = tuple(
        decay_density(state.densities[v], s.power, s.psi, state.dynamics) if s.power > 0 else state.densities[v]
        for v, s in enumerate(statuses)
    )
    logger.debug(
        "[Fire] step %d -> %d, total fire %.6f -> %.6f",
        state.version,
        state.version + 1,
        state.total_fire(),
        sum(d.total() for d in densities),
    )
    return replace(
        state,
        densities=densities,
        version=state.version + 1,
        last_statuses=statuses,
        _coverage_cache={},
    )


class FireOracle:
    """
    MissionOracle over a fixed mission state and robot population.
    Values are memoized per (team, robot set).
    """

    def __init__(self, state: Optional[FireMissionState], robots: Sequence[Robot]):
        if state is None:
            raise InstanceFormatError("fire mission values need mission_params in the instance")
        self.state = state
        self.robots = tuple(robots)
        self._values: Dict[Tuple[int, FrozenSet[int]], float] = {}

    def evaluate(self, team_id: int, robot_set: FrozenSet[int]) -> float:
        key = (team_id, frozenset(robot_set))
        value = self._values.get(key)
        if value is None:
            value = mission_value(team_id, key[1], self.state, self.robots)
            self._values[key] = value
        return value


def default_regions(positions: np.ndarray, fire: FireSettings = SETTINGS.FIRE) -> Tuple[TeamRegion, ...]:
    """Square regions of side REGION_SIZE centered on the team positions."""
    half = fire.REGION_SIZE / 2
    return tuple(
        TeamRegion(
            origin=(float(x - half), float(y - half)),
            width=fire.REGION_SIZE,
            height=fire.REGION_SIZE,
            grid_resolution=fire.GRID_RESOLUTION,
        )
        for x, y in np.asarray(positions).reshape(-1, 2)
    )
