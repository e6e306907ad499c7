from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import pandas as pd

from src.core.model import Instance
from src.domain._1fire_mission import FIGHTING, SENSING, team_statuses

TERMINAL_NO_TRANSFERS = "no-transfers"
TERMINAL_FIRE_EXTINGUISHED = "fire-extinguished"
TERMINAL_MAX_STEPS = "max-steps"
TERMINAL_OPTIMAL = "unchanged-optimal"
TERMINAL_TIMEOUT = "timeout"


@dataclass
class TeamSnapshot:
    team: int
    weight: float
    n_robots: int
    n_sensing: int
    n_fighting: int
    total_fire: float


@dataclass
class StepRecord:
    """
    One decision iteration: transfers accepted, then one fire update.
    Fire quantities are measured after the update.
    """
    step: int
    assignment: Tuple[int, ...]
    transfers: List[Tuple[int, int, int]]
    team_fire: List[float]
    psi: List[float]
    power: List[float]
    L: List[float]
    step_seconds: float


@dataclass
class EpisodeLog:
    method: str
    steps: List[StepRecord] = field(default_factory=list)
    terminal_reason: str = TERMINAL_MAX_STEPS
    initial_fire: float = 0.0
    final_fire: float = 0.0
    timed_out: bool = False
    wall_seconds: float = 0.0
    # Whole run, including the final decision that changed nothing
    decisions: int = 0
    initial_allocation: List[TeamSnapshot] = field(default_factory=list)
    final_allocation: List[TeamSnapshot] = field(default_factory=list)

    @property
    def total_seconds(self) -> float:
        return float(sum(s.step_seconds for s in self.steps))

    @property
    def mean_step_seconds(self) -> float:
        return self.total_seconds / len(self.steps) if self.steps else 0.0

    @property
    def num_transfers(self) -> int:
        return sum(len(s.transfers) for s in self.steps)

    def to_dict(self) -> Dict:
        out = asdict(self)
        out["total_seconds"] = self.total_seconds
        out["mean_step_seconds"] = self.mean_step_seconds
        return out

    def step_table(self) -> pd.DataFrame:
        """Long format: step, team, total_fire, psi, power, L."""
        rows = [
            {
                "step": s.step,
                "team": v,
                "total_fire": s.team_fire[v],
                "psi": s.psi[v],
                "power": s.power[v],
                "L": s.L[v],
            }
            for s in self.steps
            for v in range(len(s.team_fire))
        ]
        return pd.DataFrame(rows, columns=["step", "team", "total_fire", "psi", "power", "L"])


def allocation_snapshot(instance: Instance) -> List[TeamSnapshot]:
    """Per-team capability counts and fire of the current state."""
    out = []
    for v in range(instance.num_teams):
        members = instance.assignment.members(v)
        out.append(
            TeamSnapshot(
                team=v,
                weight=float(instance.weights.w[v]),
                n_robots=len(members),
                n_sensing=sum(1 for r in members if instance.robots[r].has(SENSING)),
                n_fighting=sum(1 for r in members if instance.robots[r].has(FIGHTING)),
                total_fire=instance.mission.densities[v].total() if instance.mission is not None else 0.0,
            )
        )
    return out


def record_step(
    step: int,
    instance: Instance,
    transfers: List[Tuple[int, int, int]],
    step_seconds: float,
    statuses: Optional[tuple] = None,
) -> StepRecord:
    """
    Builds the record of a step from the post-update state. statuses are
    the coverage quantities the update used.
    """
    mission = instance.mission
    if statuses is None:
        statuses = team_statuses(mission, instance.assignment, instance.robots)
    return StepRecord(
        step=step,
        assignment=instance.assignment.as_tuple(),
        transfers=[tuple(t) for t in transfers],
        team_fire=[float(x) for x in mission.team_totals()],
        psi=[s.psi for s in statuses],
        power=[s.power for s in statuses],
        L=[s.L for s in statuses],
        # Clock resolution can round very fast steps to zero
        step_seconds=max(step_seconds, 1e-9),
    )
