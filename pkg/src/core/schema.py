"""
Instance document: JSON layout of a full problem state.

Validated with pydantic and converted to / from the immutable model.
The exported JSON schema is committed as instance.schema.json.
"""

import json
from pathlib import Path
from typing import List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.errors import InstanceFormatError
from src.core.model import (
    Assignment,
    FeasibilityRules,
    Instance,
    InteractionGraph,
    Robot,
    TeamWeights,
    feasibility_violation,
)
from src.core.settings import SETTINGS
from src.domain._1fire_mission import (
    SENSING,
    CoverageConfig,
    DensityField,
    FireDynamicsConfig,
    FireMissionState,
    TeamRegion,
)


class RobotDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int = Field(ge=0)
    capability: List[int]
    speed: float = Field(gt=0)
    capacity: float = Field(default=0.0, ge=0)


class RegionDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    origin: Tuple[float, float]
    width: float = Field(gt=0)
    height: float = Field(gt=0)
    grid_resolution: int = Field(ge=SETTINGS.FIRE.MIN_GRID_RESOLUTION)
    density: List[float]
    # Row-major cell intensities

    @model_validator(mode="after")
    def _density_matches_grid(self) -> "RegionDocument":
        if len(self.density) != self.grid_resolution**2:
            raise ValueError(
                f"density has {len(self.density)} cells, expected {self.grid_resolution**2}"
            )
        if any(v < 0 for v in self.density):
            raise ValueError("density values must be nonnegative")
        return self


class MissionParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    regions: List[RegionDocument]
    eta: float = Field(default=SETTINGS.FIRE.ETA, gt=0)
    dt: float = Field(default=SETTINGS.FIRE.DT, gt=0)
    sigmoid_a: float = SETTINGS.FIRE.SIGMOID_A
    sigmoid_b: float = SETTINGS.FIRE.SIGMOID_B
    lloyd_max_iters: int = Field(default=SETTINGS.FIRE.LLOYD_MAX_ITERS, ge=1)
    lloyd_tol: float = Field(default=SETTINGS.FIRE.LLOYD_TOL, gt=0)
    version: int = Field(default=0, ge=0)


class RulesDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    min_team_size: int = Field(default=1, ge=0)
    required_capability: Optional[int] = SENSING


class InstanceDocument(BaseModel):
    """
    Wire format of an Instance.
    """

    model_config = ConfigDict(extra="forbid")

    teams: int = Field(ge=1)
    edges: List[Tuple[int, int]]
    positions: List[Tuple[float, float]]
    weights: List[float]
    robots: List[RobotDocument]
    assignment: List[int]
    mission_params: Optional[MissionParams] = None
    rules: RulesDocument = Field(default_factory=RulesDocument)
    seed: Optional[int] = None

    @field_validator("weights")
    @classmethod
    def _positive_weights(cls, value: List[float]) -> List[float]:
        if any(w <= 0 for w in value):
            raise ValueError("team weights must be strictly positive")
        return value

    @model_validator(mode="after")
    def _consistent_sizes(self) -> "InstanceDocument":
        if len(self.positions) != self.teams or len(self.weights) != self.teams:
            raise ValueError("positions and weights need one entry per team")
        if len(self.assignment) != len(self.robots):
            raise ValueError("assignment needs one entry per robot")
        if self.mission_params is not None and len(self.mission_params.regions) != self.teams:
            raise ValueError("mission_params needs one region per team")
        return self


# ----------------------------------------------------------------------
# Model <-> document
# ----------------------------------------------------------------------
def instance_from_document(doc: InstanceDocument) -> Instance:
    try:
        graph = InteractionGraph.build(doc.teams, doc.edges, doc.positions)
        robots = tuple(
            Robot(id=r.id, capability=tuple(r.capability), speed=r.speed, capacity=r.capacity)
            for r in sorted(doc.robots, key=lambda r: r.id)
        )
        mission = None
        if doc.mission_params is not None:
            mp = doc.mission_params
            regions = tuple(
                TeamRegion(
                    origin=(float(reg.origin[0]), float(reg.origin[1])),
                    width=reg.width,
                    height=reg.height,
                    grid_resolution=reg.grid_resolution,
                )
                for reg in mp.regions
            )
            for a in range(len(regions)):
                for b in range(a + 1, len(regions)):
                    if regions[a].overlaps(regions[b]):
                        raise ValueError(f"regions of teams {a} and {b} overlap")
            mission = FireMissionState(
                regions=regions,
                densities=tuple(DensityField.of(reg.density, region.cell_area) for reg, region in zip(mp.regions, regions)),
                coverage=CoverageConfig(mp.lloyd_max_iters, mp.lloyd_tol, mp.sigmoid_a, mp.sigmoid_b),
                dynamics=FireDynamicsConfig(mp.eta, mp.dt),
                version=mp.version,
                lloyd_seed=doc.seed or 0,
            )
        assignment = Assignment.of(doc.assignment, doc.teams)
        rules = FeasibilityRules(doc.rules.min_team_size, doc.rules.required_capability)
        violation = feasibility_violation(assignment.team_of, robots, rules, doc.teams)
        if violation is not None:
            raise ValueError(f"initial assignment: team {violation[0]} violates '{violation[1]}'")
        return Instance(
            graph=graph,
            robots=robots,
            weights=TeamWeights.of(doc.weights),
            assignment=assignment,
            rules=rules,
            mission=mission,
            seed=doc.seed,
        )
    except ValueError as exc:
        raise InstanceFormatError(str(exc)) from exc


def document_from_instance(instance: Instance) -> InstanceDocument:
    mission_params = None
    if instance.mission is not None:
        state = instance.mission
        mission_params = MissionParams(
            regions=[
                RegionDocument(
                    origin=region.origin,
                    width=region.width,
                    height=region.height,
                    grid_resolution=region.grid_resolution,
                    density=[float(v) for v in density.values],
                )
                for region, density in zip(state.regions, state.densities)
            ],
            eta=state.dynamics.eta,
            dt=state.dynamics.dt,
            sigmoid_a=state.coverage.sigmoid_a,
            sigmoid_b=state.coverage.sigmoid_b,
            lloyd_max_iters=state.coverage.lloyd_max_iters,
            lloyd_tol=state.coverage.lloyd_tol,
            version=state.version,
        )
    return InstanceDocument(
        teams=instance.num_teams,
        edges=sorted(instance.graph.edges),
        positions=[(float(x), float(y)) for x, y in instance.graph.team_positions],
        weights=[float(w) for w in instance.weights.w],
        robots=[
            RobotDocument(id=r.id, capability=list(r.capability), speed=r.speed, capacity=r.capacity)
            for r in instance.robots
        ],
        assignment=instance.assignment.as_tuple(),
        mission_params=mission_params,
        rules=RulesDocument(
            min_team_size=instance.rules.min_team_size,
            required_capability=instance.rules.required_capability,
        ),
        seed=instance.seed,
    )


def instance_to_json(instance: Instance) -> str:
    return document_from_instance(instance).model_dump_json(indent=2)


def instance_from_json(text: Union[str, bytes]) -> Instance:
    try:
        doc = InstanceDocument.model_validate_json(text)
    except ValidationError as exc:
        raise InstanceFormatError(f"invalid instance document: {exc}") from exc
    return instance_from_document(doc)


def load_instance(path: Union[str, Path]) -> Instance:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"instance file not found: {path}")
    return instance_from_json(path.read_text(encoding="utf-8"))


def save_instance(instance: Instance, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(instance_to_json(instance), encoding="utf-8")
    return path


def instance_json_schema() -> str:
    return json.dumps(InstanceDocument.model_json_schema(), indent=2, sort_keys=True)
