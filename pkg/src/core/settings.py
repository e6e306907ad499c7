from dataclasses import dataclass, field
from typing import Tuple


@dataclass(frozen=True)
class FireSettings:
    """
    Fire-fighting mission model.
    Purpose: keep every constant of the coverage / suppression model in one
    place so the oracle, the sampler and the simulator agree on it.
    """

    # ------------------------------------------------------------------
    # Suppression dynamics
    # ------------------------------------------------------------------

    ETA: float = 1.0
    # Decay-rate scale of the exponential fire update

    DT: float = 1.0
    # Seconds per decision iteration

    # ------------------------------------------------------------------
    # Sensing effectiveness sigmoid, psi = 1 / (1 + exp(-a (1/L - b)))
    # ------------------------------------------------------------------

    SIGMOID_A: float = 1.0
    SIGMOID_B: float = 0.0

    # ------------------------------------------------------------------
    # Coverage discretization and Lloyd iterations
    # ------------------------------------------------------------------

    GRID_RESOLUTION: int = 16
    # Cells per side of every team region

    MIN_GRID_RESOLUTION: int = 4
    # Smallest grid of any team region

    REGION_SIZE: float = 4.0
    # Side of the square region of interest of each team (meters)

    LLOYD_MAX_ITERS: int = 100

    LLOYD_TOL: float = 1e-4
    # Centroid displacement threshold (meters)

    # ------------------------------------------------------------------
    # Initial fire fields (Gaussian blobs)
    # ------------------------------------------------------------------

    BLOB_COUNT: Tuple[int, int] = (1, 3)
    BLOB_PEAK: Tuple[float, float] = (0.5, 2.0)
    BLOB_SPREAD: Tuple[float, float] = (0.15, 0.35)
    # Blob standard deviation as a fraction of the region side


@dataclass(frozen=True)
class AllocationSettings:
    """
    One-step objective G(X') - lambda * C(X, X') and its exact solver.
    """

    ALPHA: float = 0.1
    # Transfer cost scale per second of travel

    LAMBDA: float = 1.0
    # Trade-off between mission value and transfer cost

    SOLVER_TIMEOUT_S: float = 10.0
    # Wall-clock budget of one exhaustive one-step solve

    DEADLINE_CHECK_EVERY: int = 256
    # Candidates evaluated between two clock reads


@dataclass(frozen=True)
class GenerationSettings:
    """
    Random instance sampling and dataset assembly.
    """

    TEAM_RANGE: Tuple[int, int] = (3, 7)
    ROBOTS_PER_TEAM: Tuple[int, int] = (3, 5)

    EXTRA_EDGE_PROB: float = 0.3
    # Probability of each non-tree edge on top of the spanning tree

    WEIGHT_RANGE: Tuple[float, float] = (1.0, 2.0)
    SENSING_PROB: float = 0.5
    SPEED_RANGE: Tuple[float, float] = (0.5, 2.0)
    # meters / second
    CAPACITY_RANGE: Tuple[float, float] = (0.5, 2.0)

    MIN_SEPARATION: float = 8.0
    # Minimum distance between team positions (meters), > region diagonal

    WORKSPACE_SCALE: float = 10.0
    # Workspace side grows as WORKSPACE_SCALE * sqrt(M)

    SPLIT: Tuple[float, float, float] = (0.8, 0.1, 0.1)

    MAX_SKIP_RATE: float = 0.5
    # Abort generation if more than this share of attempts time out
    # for any team count

    MAX_ATTEMPTS: int = 25
    # Fresh seeds tried per sample slot before giving up on the slot


@dataclass(frozen=True)
class TrainConfig:
    """
    Supervised training of the graph policy.
    """

    epochs: int = 50
    lr: float = 1e-3
    weight_decay: float = 1e-4
    dropout: float = 0.1
    batch_size: int = 128
    aux_weight: float = 0.15
    # Weight of the auxiliary move/stay binary loss
    move_emphasis: float = 1.25
    # Cross-entropy multiplier for robots whose label is a transfer
    hidden: int = 128
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size <= 0 or self.hidden <= 0:
            raise ValueError("epochs, batch_size and hidden must be positive")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be positive and weight_decay nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass(frozen=True)
class SimulationSettings:
    """
    Episode termination rules for the decentralized inference loop.
    """

    MAX_STEPS: int = 200

    FIRE_EPS: float = 1e-3
    # Fraction of the initial total fire below which it counts as extinguished

    STAGNATION_WINDOW: int = 3
    # Consecutive no-transfer steps checked for stagnant fire

    STAGNATION_TOL: float = 1e-9
    # Relative fire decrease under which the window counts as stagnant


@dataclass(frozen=True)
class EngineSettings:
    FIRE: FireSettings = field(default_factory=FireSettings)
    ALLOCATION: AllocationSettings = field(default_factory=AllocationSettings)
    GENERATION: GenerationSettings = field(default_factory=GenerationSettings)
    SIMULATION: SimulationSettings = field(default_factory=SimulationSettings)

    FEATURE_SCHEMA: str = "fire-features-v1"
    # Version tag written into datasets and checkpoints

    OUT_DIR_ENV: str = "ALTRUIST_OUT_DIR"
    # Overrides the default output directory of the command line

    VERSION: str = "0.3.0"


# Global immutable settings instance
# Acts as a single source of truth across the project
SETTINGS = EngineSettings()
