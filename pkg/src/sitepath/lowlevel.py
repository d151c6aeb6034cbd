"""Single-agent search on weighted grid maps.

Two searchers are provided. `bidirectional_astar` produces the initial
path proposal for an agent while ignoring everybody else: two A*
frontiers with balanced front-to-front heuristics meet in the middle and
the cheapest meeting node is selected. `constrained_astar` runs in the
time-expanded graph (cell, timestep) with wait moves, honours vertex and
swap constraints handed down by the high level, and scales step costs by
the agent's soft priority.

Path cost convention: entering a cell costs its `cell_cost`; the start
cell itself is free. A wait charges the current cell again, so idling on
bad terrain is penalized.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

from .grid import Cell, ORTHOGONAL, WeightedGridMap


class Unreachable(Exception):
    """No path exists (or none within the time horizon)."""


class DeadlineExceeded(Exception):
    """Internal signal: the wall-clock budget ran out mid-search."""


@dataclass(frozen=True)
class Agent:
    id: str
    start: Cell
    goal: Cell
    priority: float = 1.0

    def __post_init__(self):
        if self.priority <= 0:
            raise ValueError(f"agent {self.id}: priority must be positive")


@dataclass
class TimedPath:
    """Cell occupied at each timestep 0..T, waits included."""

    cells: list
    cost: float

    def __len__(self) -> int:
        return len(self.cells)

    def at(self, t: int) -> Cell:
        """Position at timestep t with goal-stay semantics."""
        return self.cells[t] if t < len(self.cells) else self.cells[-1]


@dataclass(frozen=True)
class Constraint:
    """Forbids `agent` from being at `vertex` at `time`.

    When `from_cell` is set the constraint only bans the single move
    from_cell -> vertex arriving at `time` (the no-swap form used for
    edge conflicts); occupying the vertex via any other move stays legal.

    When `length_only` is set (vertex must be the agent's goal) the
    constraint just forbids the path from *ending* at or before `time`;
    passing through the goal earlier stays legal.  Used to push a parked
    agent's arrival past a stretch of traffic in one split.
    """

    agent: str
    vertex: Cell
    time: int
    from_cell: Cell | None = None
    length_only: bool = False


def path_cost(grid: WeightedGridMap, cells: list, priority: float = 1.0) -> float:
    """Recompute a timed path's cost from the map."""
    return priority * sum(grid.cell_cost(c) for c in cells[1:])


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a.x - b.x) + abs(a.y - b.y)


def heuristic(grid: WeightedGridMap, c: Cell, goal: Cell) -> float:
    """Admissible remaining-cost estimate: Manhattan distance scaled by
    the cheapest passable cell on the map."""
    return manhattan(c, goal) * grid.min_cell_cost()


def balanced_heuristics(
    grid: WeightedGridMap, c: Cell, start: Cell, goal: Cell
) -> tuple[float, float]:
    """Front-to-front balanced heuristics for the two frontiers.

    h_f + h_r is identically zero, which keeps the forward and backward
    searches consistent with each other so the meeting-point stopping
    rule stays exact.
    """
    pi_f = heuristic(grid, c, goal)
    pi_r = heuristic(grid, c, start)
    h_f = (pi_f - pi_r) / 2.0
    return h_f, -h_f


def bidirectional_astar(
    grid: WeightedGridMap, start: Cell, goal: Cell
) -> tuple[list, float]:
    """Minimum-cost start->goal path ignoring other agents and time.

    Returns (cells, cost). Raises Unreachable when no path exists.
    Forward labels charge the cell being entered; backward labels charge
    the cell being left, so dist_f[u] + dist_r[u] is exactly the cost of
    the best path through u.
    """
    if not grid.is_passable(start) or not grid.is_passable(goal):
        raise Unreachable(f"unreachable: {tuple(start)} -> {tuple(goal)}")
    if start == goal:
        return [start], 0.0

    dist = ({start: 0.0}, {goal: 0.0})
    parent: tuple[dict, dict] = ({start: None}, {goal: None})
    closed: tuple[set, set] = (set(), set())
    tie = itertools.count()
    h0 = balanced_heuristics(grid, start, start, goal)[0]
    hg = balanced_heuristics(grid, goal, start, goal)[1]
    open_f = [(h0, next(tie), start)]
    open_r = [(hg, next(tie), goal)]
    heaps = (open_f, open_r)

    best = math.inf
    meet: Cell | None = None

    def settle(side: int, u: Cell) -> None:
        nonlocal best, meet
        other = dist[1 - side]
        if u in other:
            total = dist[side][u] + other[u]
            if total < best:
                best, meet = total, u

    while heaps[0] and heaps[1]:
        top_f = heaps[0][0][0]
        top_r = heaps[1][0][0]
        if best < math.inf and top_f + top_r >= best:
            break
        side = 0 if top_f <= top_r else 1
        f_val, _, u = heapq.heappop(heaps[side])
        if u in closed[side]:
            continue
        closed[side].add(u)
        settle(side, u)
        g_u = dist[side][u]
        for d in ORTHOGONAL:
            v = Cell(u.x + d.x, u.y + d.y)
            if not grid.is_passable(v):
                continue
            # forward: pay to enter v; backward: pay to leave u
            step = grid.cell_cost(v) if side == 0 else grid.cell_cost(u)
            g_v = g_u + step
            if g_v < dist[side].get(v, math.inf):
                dist[side][v] = g_v
                parent[side][v] = u
                h = balanced_heuristics(grid, v, start, goal)[side]
                heapq.heappush(heaps[side], (g_v + h, next(tie), v))
                settle(side, v)

    # best meeting node over everything either direction has labeled
    for u, g_f in dist[0].items():
        g_r = dist[1].get(u)
        if g_r is not None and g_f + g_r < best:
            best, meet = g_f + g_r, u

    if meet is None:
        raise Unreachable(f"unreachable: {tuple(start)} -> {tuple(goal)}")

    path = [meet]
    u = parent[0][meet]
    while u is not None:
        path.append(u)
        u = parent[0][u]
    path.reverse()
    u = parent[1][meet]
    while u is not None:
        path.append(u)
        u = parent[1][u]
    return path, best


def default_horizon(grid: WeightedGridMap) -> int:
    return 4 * (grid.width + grid.height)


def goal_distances(grid: WeightedGridMap, goal: Cell) -> dict:
    """True unconstrained cost-to-goal for every reachable cell.

    Backward Dijkstra charging the cell being left, matching the
    forward convention of paying to enter a cell. Usable as an exact
    (hence admissible and consistent) heuristic in the time-expanded
    search, where waiting can only add cost.
    """
    dist = {goal: 0.0}
    heap = [(0.0, goal.x, goal.y)]
    while heap:
        d, x, y = heapq.heappop(heap)
        u = Cell(x, y)
        if d > dist.get(u, math.inf):
            continue
        step = grid.cell_cost(u)
        for dxy in ORTHOGONAL:
            v = Cell(u.x + dxy.x, u.y + dxy.y)
            if not grid.is_passable(v):
                continue
            nd = d + step
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v.x, v.y))
    return dist


@dataclass
class SearchLimits:
    """Shared wall-clock budget for low-level searches.

    `check` is consulted every `stride` expansions; it returns True when
    the budget is gone.
    """

    check: object = None
    stride: int = 1024
    expansions: int = field(default=0)

    def tick(self) -> None:
        self.expansions += 1
        if self.check is not None and self.expansions % self.stride == 0:
            if self.check():
                raise DeadlineExceeded()


def constrained_astar(
    grid: WeightedGridMap,
    agent: Agent,
    constraints=(),
    horizon: int | None = None,
    limits: SearchLimits | None = None,
    h_map: dict | None = None,
) -> TimedPath:
    """Cheapest constraint-respecting timed path in the (cell, t) graph.

    The agent may wait in place; steps cost priority * cell_cost of the
    destination (waits re-charge the current cell). The path terminates
    at the first goal arrival with no vertex constraint at any later
    timestep, matching goal-stay occupancy.
    """
    if not grid.is_passable(agent.start) or not grid.is_passable(agent.goal):
        raise Unreachable(f"agent {agent.id}: start or goal blocked")
    if horizon is None:
        horizon = default_horizon(grid)

    vertex_banned: set[tuple[Cell, int]] = set()
    move_banned: set[tuple[Cell, Cell, int]] = set()
    last_goal_ban = -1
    for con in constraints:
        if con.agent != agent.id:
            continue
        if con.length_only:
            if con.vertex == agent.goal:
                last_goal_ban = max(last_goal_ban, con.time)
        elif con.from_cell is None:
            vertex_banned.add((con.vertex, con.time))
            if con.vertex == agent.goal:
                last_goal_ban = max(last_goal_ban, con.time)
        else:
            move_banned.add((con.from_cell, con.vertex, con.time))

    if (agent.start, 0) in vertex_banned:
        raise Unreachable(f"agent {agent.id}: start is constrained at t=0")

    p = agent.priority

    if h_map is not None:
        def h_at(c: Cell) -> float:
            return p * h_map.get(c, math.inf)
    else:
        def h_at(c: Cell) -> float:
            return p * heuristic(grid, c, agent.goal)

    tie = itertools.count()
    start_state = (agent.start, 0)
    g_best = {start_state: 0.0}
    parent: dict = {start_state: None}
    h0 = h_at(agent.start)
    if math.isinf(h0):
        raise Unreachable(f"agent {agent.id}: goal not reachable")
    open_heap = [(h0, h0, next(tie), start_state)]
    closed: set = set()

    while open_heap:
        f, h, _, state = heapq.heappop(open_heap)
        if state in closed:
            continue
        closed.add(state)
        if limits is not None:
            limits.tick()
        cell, t = state
        if cell == agent.goal and t > last_goal_ban:
            cells = []
            s = state
            while s is not None:
                cells.append(s[0])
                s = parent[s]
            cells.reverse()
            return TimedPath(cells=cells, cost=g_best[state])
        if t >= horizon:
            continue
        g_u = g_best[state]
        for nxt in grid.neighbors(cell):
            if (nxt, t + 1) in vertex_banned:
                continue
            if (cell, nxt, t + 1) in move_banned:
                continue
            ns = (nxt, t + 1)
            g_v = g_u + p * grid.cell_cost(nxt)
            if g_v < g_best.get(ns, math.inf):
                h_v = h_at(nxt)
                if math.isinf(h_v):
                    continue
                g_best[ns] = g_v
                parent[ns] = state
                heapq.heappush(open_heap, (g_v + h_v, h_v, next(tie), ns))

    raise Unreachable(f"agent {agent.id}: unreachable within horizon {horizon}")
