"""Multi working-machine pathfinding on weighted construction-site maps."""

from .cbs import PlanResult, Scenario, find_conflicts, sic, solve
from .grid import Cell, DangerObject, Layer, WeightedGridMap, parse_map, serialize_map
from .lowlevel import (
    Agent,
    Constraint,
    TimedPath,
    Unreachable,
    balanced_heuristics,
    bidirectional_astar,
    constrained_astar,
    heuristic,
)

__all__ = [
    "Agent",
    "Cell",
    "Constraint",
    "DangerObject",
    "Layer",
    "PlanResult",
    "Scenario",
    "TimedPath",
    "Unreachable",
    "WeightedGridMap",
    "balanced_heuristics",
    "bidirectional_astar",
    "constrained_astar",
    "find_conflicts",
    "heuristic",
    "parse_map",
    "serialize_map",
    "sic",
    "solve",
]
