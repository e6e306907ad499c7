"""
Two-team allocation instances built from integer Partition instances.

Each integer becomes a robot; a team scores minus the distance of its
integer sum to half the total, so the best assignment scores 0 exactly
when the integers split into two equal halves.
"""

from dataclasses import dataclass
from typing import FrozenSet, Sequence

import numpy as np

from src.core.model import Assignment, FeasibilityRules, HamiltonMask, Instance, InteractionGraph, Robot, TeamWeights


class PartitionOracle:
    def __init__(self, integers: Sequence[int]):
        self.integers = tuple(int(a) for a in integers)
        self.half = sum(self.integers) / 2.0

    def evaluate(self, team_id: int, robot_set: FrozenSet[int]) -> float:
        return -abs(sum(self.integers[r] for r in robot_set) - self.half)


@dataclass(frozen=True)
class PartitionReduction:
    instance: Instance
    oracle: PartitionOracle
    mask: HamiltonMask
    lam: float = 0.0
    alpha: float = 0.0


def build_partition_instance(integers: Sequence[int]) -> PartitionReduction:
    """
    Equal weights, lambda = 0, every robot free to end in either team.
    Teams may end up empty; all integers start in team 0.
    """
    if len(integers) == 0:
        raise ValueError("integer list must be nonempty")
    if any(int(a) <= 0 for a in integers):
        raise ValueError("integers must be positive")

    n = len(integers)
    instance = Instance(
        graph=InteractionGraph.build(2, [(0, 1)], [(0.0, 0.0), (1.0, 0.0)]),
        robots=tuple(Robot(id=r, capability=(0, 0), speed=1.0) for r in range(n)),
        weights=TeamWeights.of([1.0, 1.0]),
        assignment=Assignment.of([0] * n, 2),
        rules=FeasibilityRules(min_team_size=0, required_capability=None),
    )
    admissible = np.ones((n, 2), dtype=bool)
    admissible.flags.writeable = False
    return PartitionReduction(instance=instance, oracle=PartitionOracle(integers), mask=HamiltonMask(admissible))


def subset_sum_partition_exists(integers: Sequence[int]) -> bool:
    """Dynamic programming over reachable subset sums."""
    total = int(sum(integers))
    if total % 2:
        return False
    target = total // 2
    reachable = np.zeros(target + 1, dtype=bool)
    reachable[0] = True
    for a in integers:
        a = int(a)
        if a <= target:
            reachable[a:] = reachable[a:] | reachable[:-a]
    return bool(reachable[target])
