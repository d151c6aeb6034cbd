"""Acceptance suite: one test per shipping criterion, printed pass/fail.

Each test exercises a criterion end to end at its stated tolerance and
prints a single summary line.  Slow by design; run with `pytest -v` (or
`-s` to watch the lines appear).
"""

import random
import time
from dataclasses import replace

import pytest

from sitepath.analysis import (
    apply_layout_suggestion,
    collect_stats,
    suggest_layout,
    suggest_removal,
)
from sitepath.cbs import Scenario, find_conflicts, solve
from sitepath.grid import parse_map, serialize_map
from sitepath.lowlevel import Agent, Unreachable, bidirectional_astar, path_cost
from sitepath.mapgen import ARCHETYPES, archetype_scenario, bottleneck_scenario
from sitepath.replan import ExecutionState, IMMOBILE, inject_delay, replan
from oracles import dijkstra_cost, joint_state_cost, random_free_cell, random_map
from scenarios import CORRIDOR_TEXT, bridging_scenario


def _report(line: str) -> None:
    print(f"\n[acceptance] {line}")


def test_criterion_1_conflict_free_archetype_corpus():
    """200 seeded archetype scenarios all yield conflict-free schedules."""
    t0 = time.monotonic()
    count = 0
    for seed in range(40):
        for name in ARCHETYPES:
            scenario = archetype_scenario(name, seed=seed)
            result = solve(scenario)
            residual = find_conflicts(result.schedule)
            assert residual == [], f"{name} seed={seed}: {residual[:3]}"
            assert set(result.schedule) == {a.id for a in scenario.agents}
            count += 1
    elapsed = time.monotonic() - t0
    assert count == 200
    assert elapsed < 600.0
    _report(
        f"criterion 1: 200/200 archetype scenarios conflict-free "
        f"in {elapsed:.1f}s (< 600s): PASS"
    )


def test_criterion_2_sum_of_costs_matches_joint_oracle():
    """Solver SIC equals an exhaustive joint-state optimum, 100 instances."""
    rng = random.Random(2024)
    t0 = time.monotonic()
    done = 0
    while done < 100:
        grid = random_map(rng, max_side=5, obstacle_p=0.2)
        free = list(grid.passable_cells())
        if len(free) < 6:
            continue
        n = rng.randint(2, 3)
        starts = rng.sample(free, n)
        goals = rng.sample(free, n)
        agents = [
            Agent(id=f"a{i}", start=starts[i], goal=goals[i], priority=1.0)
            for i in range(n)
        ]
        truth = joint_state_cost(grid, agents)
        if truth is None:
            continue
        result = solve(
            Scenario(grid=grid, agents=agents, conflict_threshold=100_000)
        )
        assert result.status == "optimal"
        assert result.total_cost == pytest.approx(truth), (
            f"instance {done}: solver {result.total_cost} vs oracle {truth}"
        )
        done += 1
    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    _report(
        f"criterion 2: 100/100 instances match the joint-state oracle "
        f"in {elapsed:.1f}s (< 120s): PASS"
    )


def test_criterion_3_bidirectional_matches_dijkstra():
    """Bidirectional search equals reference Dijkstra on 500 random maps."""
    rng = random.Random(777)
    t0 = time.monotonic()
    done = 0
    while done < 500:
        grid = random_map(rng, max_side=12)
        start = random_free_cell(grid, rng)
        goal = random_free_cell(grid, rng)
        if start is None or goal is None:
            continue
        truth = dijkstra_cost(grid, start, goal)
        try:
            cells, cost = bidirectional_astar(grid, start, goal)
        except Unreachable:
            assert truth is None
            done += 1
            continue
        assert truth is not None and cost == pytest.approx(truth)
        assert cost == pytest.approx(path_cost(grid, cells))
        done += 1
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    _report(
        f"criterion 3: 500/500 maps agree with Dijkstra "
        f"in {elapsed:.1f}s (< 60s): PASS"
    )


def test_criterion_4_deadline_contract():
    """Crowded and adversarial scenarios return within deadline + 0.5s."""
    cases = [archetype_scenario("archetype-2-open-50", seed=s) for s in (0, 1)]
    cases += [bottleneck_scenario(seed=s) for s in (0, 1)]
    statuses = []
    for scenario in cases:
        t0 = time.monotonic()
        result = solve(scenario)
        wall = time.monotonic() - t0
        assert wall < scenario.deadline_s + 0.5, f"{scenario.name}: {wall:.2f}s"
        assert result.status in {"optimal", "feasible_after_removal", "stop_all"}
        assert find_conflicts(result.schedule) == []
        statuses.append(f"{scenario.name}={result.status}@{wall:.2f}s")
    _report(f"criterion 4: deadline contract held ({'; '.join(statuses)}): PASS")


def test_criterion_5_initial_phase_under_half_second():
    """The independent-proposal phase stays under 0.5s on every archetype."""
    worst = 0.0
    for name in ARCHETYPES:
        for seed in (0, 1, 2):
            result = solve(archetype_scenario(name, seed=seed))
            assert result.elapsed_initial_s < 0.5, (
                f"{name} seed={seed}: {result.elapsed_initial_s:.3f}s"
            )
            worst = max(worst, result.elapsed_initial_s)
    _report(
        f"criterion 5: initial phase worst case {worst * 1000:.0f}ms "
        f"(< 500ms) across all archetypes: PASS"
    )


def test_criterion_6_advisories_speed_up_the_bottleneck():
    """Layout fix and top-agent removal each cut update time >= 2x."""

    def mean_update(scenario):
        _, results = collect_stats(scenario, repetitions=20)
        return sum(r.elapsed_update_s for r in results) / len(results)

    scenario = bottleneck_scenario(seed=0)
    stats, _ = collect_stats(scenario, repetitions=20)
    baseline = mean_update(scenario)

    suggestion = suggest_layout(scenario.grid, stats)
    assert suggestion.cells, "no layout advisory produced"
    fixed = replace(
        scenario, grid=apply_layout_suggestion(scenario.grid, suggestion)
    )
    layout_time = mean_update(fixed)

    removal = suggest_removal(stats, k=1)
    assert removal, "no removal advisory produced"
    kept = [a for a in scenario.agents if a.id not in removal]
    reduced = replace(scenario, agents=kept)
    removal_time = mean_update(reduced)

    assert layout_time * 2.0 <= baseline, (
        f"layout: {baseline:.4f}s -> {layout_time:.4f}s"
    )
    assert removal_time * 2.0 <= baseline, (
        f"removal: {baseline:.4f}s -> {removal_time:.4f}s"
    )
    _report(
        "criterion 6: bottleneck mean update time "
        f"{baseline * 1000:.1f}ms -> {layout_time * 1000:.1f}ms after layout fix, "
        f"{removal_time * 1000:.1f}ms after removing {removal[0]} (both >= 2x): PASS"
    )


def test_criterion_7_emergency_replanning():
    """Two-step lag earns a midway goal fast; a corked corridor stops all."""
    scenario = bridging_scenario()
    base = solve(replace(scenario, conflict_threshold=512))
    assert base.status == "optimal"
    state = inject_delay(
        ExecutionState(scenario=scenario, planned=base, now=3), "hauler", 2
    )
    t0 = time.monotonic()
    result = replan(state, deadline_s=1.0)
    lag_wall = time.monotonic() - t0
    assert lag_wall < 1.0, f"replan took {lag_wall:.2f}s"
    assert "hauler" in result.midway_goals
    assert result.schedule["hauler"].cells[-1] == result.midway_goals["hauler"]
    assert find_conflicts(result.schedule) == []

    grid = parse_map(CORRIDOR_TEXT)
    from sitepath.grid import Cell

    corridor = Scenario(
        grid=grid,
        agents=[
            Agent(id="m0", start=Cell(0, 1), goal=Cell(6, 1), priority=1.0),
            Agent(id="m1", start=Cell(4, 1), goal=Cell(5, 1), priority=1.0),
        ],
    )
    broken = inject_delay(
        ExecutionState(scenario=corridor, planned=solve(corridor), now=0),
        "m1",
        IMMOBILE,
    )
    stopped = replan(broken, deadline_s=1.0)
    assert stopped.status == "stop_all"
    _report(
        f"criterion 7: midway goal {tuple(result.midway_goals['hauler'])} "
        f"assigned in {lag_wall:.2f}s (< 1s); corked corridor -> stop_all: PASS"
    )


def test_criterion_8_invariant_suites():
    """Representative re-run of the per-module property invariants.

    The full suites live in the sibling test modules; this spot-checks
    one invariant per module so the acceptance run is self-contained.
    """
    rng = random.Random(88)
    # map model: round trip + cost floor
    for _ in range(10):
        grid = random_map(rng)
        assert parse_map(serialize_map(grid)) == grid
        assert all(grid.cell_cost(c) >= 0 for c in grid.passable_cells())
    # searches: optimality vs Dijkstra
    for _ in range(25):
        grid = random_map(rng)
        start, goal = random_free_cell(grid, rng), random_free_cell(grid, rng)
        if start is None or goal is None:
            continue
        truth = dijkstra_cost(grid, start, goal)
        try:
            _, cost = bidirectional_astar(grid, start, goal)
        except Unreachable:
            assert truth is None
            continue
        assert cost == pytest.approx(truth)
    # solver: schedules self-validate
    for seed in (0, 5):
        result = solve(archetype_scenario("archetype-3-obstacles", seed=seed))
        assert find_conflicts(result.schedule) == []
    _report(
        "criterion 8: invariant spot checks pass; full property suites in "
        "test_grid/test_lowlevel/test_cbs/test_analysis/test_replan/"
        "test_scenario_io/test_cli: PASS"
    )
