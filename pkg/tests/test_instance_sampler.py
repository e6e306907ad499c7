import numpy as np
import pytest

from src.core.model import feasibility_violation
from src.core.schema import instance_to_json
from src.domain._1fire_mission import SENSING
from src.ingestion._3instance_sampler import sample_instance


def test_same_seed_same_instance():
    assert instance_to_json(sample_instance(42)) == instance_to_json(sample_instance(42))
    assert instance_to_json(sample_instance(42)) != instance_to_json(sample_instance(43))


@pytest.mark.parametrize("seed", range(10))
def test_sampled_instances_are_feasible(seed):
    instance = sample_instance(seed, team_range=(2, 6), robots_per_team_range=(2, 4))
    assert 2 <= instance.num_teams <= 6
    sizes = instance.assignment.team_sizes()
    assert np.all((sizes >= 2) & (sizes <= 4))
    assert feasibility_violation(instance.assignment.team_of, instance.robots, instance.rules, instance.num_teams) is None
    assert instance.rules.required_capability == SENSING
    assert instance.mission is not None
    assert len(instance.mission.regions) == instance.num_teams
    assert instance.seed == seed


def test_team_positions_are_separated():
    instance = sample_instance(5, team_range=(6, 6))
    d = instance.graph.pairwise_distance + np.eye(instance.num_teams) * 1e9
    assert d.min() >= 8.0
    regions = instance.mission.regions
    for a in range(len(regions)):
        for b in range(a + 1, len(regions)):
            assert not regions[a].overlaps(regions[b])


def test_team_count_can_be_pinned():
    instance = sample_instance(3, num_teams=9, robots_per_team_range=(1, 1))
    assert instance.num_teams == 9
    assert instance.num_robots == 9
    assert all(r.has(SENSING) for r in instance.robots)


@pytest.mark.parametrize("teams, robots", [((4, 3), (1, 2)), ((0, 2), (1, 2)), ((2, 3), (0, 1))])
def test_bad_ranges_are_rejected(teams, robots):
    with pytest.raises(ValueError):
        sample_instance(0, team_range=teams, robots_per_team_range=robots)
