"""Generated site archetypes and the synthetic bottleneck family."""

import random

from sitepath.cbs import find_conflicts, solve
from sitepath.grid import Cell
from sitepath.mapgen import (
    ARCHETYPES,
    ROUGHNESS_LEVELS,
    SAFETY_LEVELS,
    SLOPE_LEVELS,
    archetype_scenario,
    bottleneck_scenario,
    mining_site,
    obstacle_field,
    open_field,
    random_agents,
    two_side_site,
)
from sitepath.lowlevel import Unreachable, bidirectional_astar


def test_weight_levels():
    assert ROUGHNESS_LEVELS == (1, 5, 9)
    assert SLOPE_LEVELS == (1, 5)
    assert SAFETY_LEVELS == (1, 15)


def test_archetype_catalog():
    assert set(ARCHETYPES) == {
        "archetype-1-open-20",
        "archetype-2-open-50",
        "archetype-3-obstacles",
        "archetype-4-bridge",
        "archetype-5-mining",
    }
    assert ARCHETYPES["archetype-2-open-50"][1] == 50
    assert ARCHETYPES["archetype-4-bridge"][1] == 12


def test_field_dimensions():
    assert (open_field(0).width, open_field(0).height) == (20, 13)
    assert (obstacle_field(0).width, obstacle_field(0).height) == (17, 12)


def test_generators_deterministic_per_seed():
    for name in ARCHETYPES:
        a = archetype_scenario(name, seed=9)
        b = archetype_scenario(name, seed=9)
        assert a.grid == b.grid
        assert a.agents == b.agents
        c = archetype_scenario(name, seed=10)
        assert c.grid != a.grid or c.agents != a.agents


def test_layers_use_published_levels():
    grid = open_field(seed=3)
    names = [layer.name for layer in grid.layers]
    assert names == ["roughness", "slope", "safety"]
    for layer, levels in zip(grid.layers, (ROUGHNESS_LEVELS, SLOPE_LEVELS, SAFETY_LEVELS)):
        for c in grid.passable_cells():
            assert layer.weight_at(c) in levels


def test_agents_valid_and_connected():
    for name in ARCHETYPES:
        scenario = archetype_scenario(name, seed=1)
        starts = [a.start for a in scenario.agents]
        goals = [a.goal for a in scenario.agents]
        assert len(set(starts)) == len(starts)
        assert len(set(goals)) == len(goals)
        for a in scenario.agents:
            assert scenario.grid.is_passable(a.start)
            assert scenario.grid.is_passable(a.goal)
            bidirectional_astar(scenario.grid, a.start, a.goal)  # must not raise


def test_two_side_site_has_exactly_one_crossing():
    grid = two_side_site(seed=2)
    wall_x = grid.width // 2
    open_rows = [y for y in range(grid.height) if grid.is_passable(Cell(wall_x, y))]
    assert len(open_rows) == 1


def test_random_agents_stays_on_one_component():
    grid = obstacle_field(seed=5)
    agents = random_agents(grid, 10, random.Random(1), prefix="m")
    for a in agents:
        bidirectional_astar(grid, a.start, a.goal)


def test_bottleneck_solves_optimally_and_fast():
    scenario = bottleneck_scenario(seed=0)
    result = solve(scenario)
    assert result.status == "optimal"
    assert find_conflicts(result.schedule) == []
    assert result.conflict_log, "the opposer must actually contest the bridge"


def test_bottleneck_has_single_bridge_cell():
    scenario = bottleneck_scenario(seed=3)
    grid = scenario.grid
    xs = {c.x for c in grid.obstacles}
    wall_x = max(xs, key=lambda x: sum(1 for c in grid.obstacles if c.x == x))
    open_cells = [
        Cell(wall_x, y) for y in range(grid.height) if grid.is_passable(Cell(wall_x, y))
    ]
    assert len(open_cells) == 1
