import math
import os

import hypothesis
import numpy as np
import pytest

from src.core.model import Assignment, FeasibilityRules, Instance, InteractionGraph, Robot, TeamWeights
from src.domain._1fire_mission import SENSING, DensityField, FireMissionState, TeamRegion
from src.ingestion._3instance_sampler import sample_instance

hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


class CardinalityOracle:
    """F_v(S) = scale_v * sqrt(|S|)."""

    def __init__(self, scales):
        self.scales = list(scales)

    def evaluate(self, team_id, robot_set):
        return self.scales[team_id] * math.sqrt(len(robot_set))


class ConstantOracle:
    def __init__(self, value=0.0):
        self.value = value

    def evaluate(self, team_id, robot_set):
        return self.value


def _region(origin, resolution=4, side=4.0):
    return TeamRegion(origin=origin, width=side, height=side, grid_resolution=resolution)


def build_two_team_fire(weights=(1.0, 1.0), distance=10.0, speed=1.0, burning=1.0):
    """
    Team 0 holds sensing robot 0 and fighter robot 1 (capacity 1) over a
    fire-free region; team 1 holds sensing robot 2 over a uniform fire of
    intensity `burning` on a 4 x 4 grid (cell area 1).
    """
    graph = InteractionGraph.build(2, [(0, 1)], [(0.0, 0.0), (distance, 0.0)])
    robots = (
        Robot(id=0, capability=(1, 0), speed=speed),
        Robot(id=1, capability=(0, 1), speed=speed, capacity=1.0),
        Robot(id=2, capability=(1, 0), speed=speed),
    )
    regions = (_region((-2.0, -2.0)), _region((distance - 2.0, -2.0)))
    densities = (
        DensityField.of(np.zeros(16), regions[0].cell_area),
        DensityField.of(np.full(16, burning), regions[1].cell_area),
    )
    return Instance(
        graph=graph,
        robots=robots,
        weights=TeamWeights.of(weights),
        assignment=Assignment.of([0, 0, 1], 2),
        rules=FeasibilityRules(min_team_size=1, required_capability=SENSING),
        mission=FireMissionState(regions=regions, densities=densities),
        seed=0,
    )


@pytest.fixture
def two_team_fire():
    return build_two_team_fire()


@pytest.fixture
def two_team_factory():
    return build_two_team_fire


@pytest.fixture
def cardinality_oracle():
    return CardinalityOracle


@pytest.fixture
def constant_oracle():
    return ConstantOracle


@pytest.fixture(scope="session")
def small_instances():
    """Three-team, three-robots-per-team fire instances."""
    return [sample_instance(seed, team_range=(3, 3), robots_per_team_range=(3, 3)) for seed in range(6)]


@pytest.fixture(scope="session")
def labeled_samples(small_instances):
    from src.ingestion._5dataset_builder import label_instance

    return [label_instance(instance, timeout=None) for instance in small_instances]
