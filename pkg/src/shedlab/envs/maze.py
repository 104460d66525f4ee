"""Grid mazes: difficulty-bracketed generation, feasibility and the student env.

Cell encoding: -1 block, 0 path, 1 start, 2 end.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import IllegalTransitionError, InfeasibleSpecError, MalformedGridError
from .params import ParamSpace, ParamVector, discrete

BLOCK, PATH, START, END = -1, 0, 1, 2
LEVELS = ("easy", "medium", "hard")
START_LEVELS = (1, 2, 3, 4, 5)

# Side-length brackets; mazes are square.
SIZE_SIDES = {"easy": (5, 7), "medium": (8, 9), "hard": (11, 14)}
# Inclusive [lo, hi] brackets on turns / steps of the start-to-end path.
TURN_BRACKETS = {"easy": (0, 1), "medium": (2, 3), "hard": (4, math.inf)}
STEP_BRACKETS = {"easy": (1, 4), "medium": (5, 10), "hard": (11, math.inf)}

MAX_RETRIES = 500
STEP_PENALTY = -0.01
GOAL_REWARD = 1.0
# up, down, left, right
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

MAZE_SPACE = ParamSpace((
    discrete("size_level", LEVELS),
    discrete("structure_level", LEVELS),
    discrete("goal_level", LEVELS),
    discrete("start_level", START_LEVELS),
), name="maze")


@dataclass(frozen=True)
class MazeParams:
    size_level: str = "easy"
    structure_level: str = "easy"
    goal_level: str = "easy"
    start_level: int = 1

    def __post_init__(self):
        MAZE_SPACE.vector(self.as_dict())  # validates

    def as_dict(self):
        return {"size_level": self.size_level, "structure_level": self.structure_level,
                "goal_level": self.goal_level, "start_level": self.start_level}

    @classmethod
    def from_vector(cls, pv: ParamVector) -> "MazeParams":
        return cls(**pv.as_dict())


def _as_grid(grid) -> np.ndarray:
    g = np.asarray(grid)
    if g.ndim != 2 or g.size == 0:
        raise MalformedGridError("maze grid must be a non-empty 2-D array")
    if not np.isin(g, (BLOCK, PATH, START, END)).all():
        raise MalformedGridError("maze cells must be -1, 0, 1 or 2")
    n_start = int(np.sum(g == START))
    n_end = int(np.sum(g == END))
    if n_start != 1 or n_end != 1:
        raise MalformedGridError(f"need exactly one start and one end, found {n_start} and {n_end}")
    return g.astype(np.int64)


def locate(grid, value) -> tuple[int, int]:
    r, c = np.argwhere(np.asarray(grid) == value)[0]
    return int(r), int(c)


def maze_feasible(grid) -> bool:
    """True iff a 4-connected walk over non-block cells joins start and end."""
    g = _as_grid(grid)
    start, end = locate(g, START), locate(g, END)
    h, w = g.shape
    seen = {start}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        if (r, c) == end:
            return True
        for dr, dc in MOVES:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and g[nr, nc] != BLOCK and (nr, nc) not in seen:
                seen.add((nr, nc))
                queue.append((nr, nc))
    return False


def _distance_turns(g: np.ndarray, start):
    """Shortest-path length from ``start`` to every cell, and the fewest turns
    achievable along any shortest path.  Unreachable cells get -1."""
    h, w = g.shape
    dist = np.full((h, w), -1, dtype=np.int64)
    # turns[r, c, d]: fewest turns over shortest paths arriving at (r, c) moving in direction d
    inf = np.iinfo(np.int64).max // 4
    turns = np.full((h, w, 4), inf, dtype=np.int64)
    dist[start] = 0
    frontier = [start]
    first = True
    while frontier:
        nxt = []
        for r, c in frontier:
            for d, (dr, dc) in enumerate(MOVES):
                nr, nc = r + dr, c + dc
                if not (0 <= nr < h and 0 <= nc < w) or g[nr, nc] == BLOCK:
                    continue
                if dist[nr, nc] == -1:
                    dist[nr, nc] = dist[r, c] + 1
                    nxt.append((nr, nc))
                if dist[nr, nc] != dist[r, c] + 1:
                    continue
                if first:
                    cand = 0
                else:
                    prev = turns[r, c]
                    cand = min(prev[d], min(prev[e] for e in range(4) if e != d) + 1)
                if cand < turns[nr, nc, d]:
                    turns[nr, nc, d] = cand
        frontier = nxt
        first = False
    best = turns.min(axis=2)
    best[dist == -1] = -1
    best[start] = 0
    return dist, best


def path_stats(grid) -> tuple[int, int]:
    """(steps, turns) of the start-to-end path, or (-1, -1) if unreachable.

    Steps is the shortest-path move count; turns is the minimum number of
    direction changes over all shortest paths.
    """
    g = _as_grid(grid)
    dist, turns = _distance_turns(g, locate(g, START))
    end = locate(g, END)
    return int(dist[end]), int(turns[end])


def start_zone(side_h: int, side_w: int, level: int):
    """(anchor, radius) of a start-level zone; membership is Chebyshev distance <= radius."""
    radius = math.ceil(max(side_h, side_w) / 4)
    anchors = {1: (0, 0), 2: (0, side_w - 1), 3: (side_h - 1, 0), 4: (side_h - 1, side_w - 1),
               5: (side_h // 2, side_w // 2)}
    return anchors[int(level)], radius


def in_start_zone(grid, level: int) -> bool:
    g = np.asarray(grid)
    (ar, ac), radius = start_zone(g.shape[0], g.shape[1], level)
    r, c = locate(g, START)
    return max(abs(r - ar), abs(c - ac)) <= radius


def bracket_report(grid, params: MazeParams) -> dict:
    """Which of the four difficulty constraints the grid satisfies."""
    g = _as_grid(grid)
    h, w = g.shape
    lo, hi = SIZE_SIDES[params.size_level]
    steps, turns = path_stats(g)
    tlo, thi = TURN_BRACKETS[params.structure_level]
    slo, shi = STEP_BRACKETS[params.goal_level]
    return {
        "size": h == w and lo <= h <= hi,
        "structure": steps >= 0 and tlo <= turns <= thi,
        "goal": steps >= 0 and slo <= steps <= shi,
        "start": in_start_zone(g, params.start_level),
    }


def satisfies(grid, params: MazeParams) -> bool:
    return maze_feasible(grid) and all(bracket_report(grid, params).values())


def _carve_dfs(side: int, rng: np.random.Generator, braid: float) -> np.ndarray:
    g = np.full((side, side), BLOCK, dtype=np.int64)
    # Lattice cells sit at even offsets from a random origin parity.
    off_r, off_c = int(rng.integers(2)), int(rng.integers(2))
    cells = [(r, c) for r in range(off_r, side, 2) for c in range(off_c, side, 2)]
    r0, c0 = cells[int(rng.integers(len(cells)))]
    g[r0, c0] = PATH
    stack = [(r0, c0)]
    while stack:
        r, c = stack[-1]
        opts = []
        for dr, dc in MOVES:
            nr, nc = r + 2 * dr, c + 2 * dc
            if 0 <= nr < side and 0 <= nc < side and g[nr, nc] == BLOCK:
                opts.append((dr, dc))
        if not opts:
            stack.pop()
            continue
        dr, dc = opts[int(rng.integers(len(opts)))]
        g[r + dr, c + dc] = PATH
        g[r + 2 * dr, c + 2 * dc] = PATH
        stack.append((r + 2 * dr, c + 2 * dc))
    if braid > 0:
        walls = np.argwhere(g == BLOCK)
        for r, c in walls:
            if rng.random() < braid:
                g[r, c] = PATH
    return g


def _open_room(side: int, rng: np.random.Generator, density: float) -> np.ndarray:
    g = np.full((side, side), PATH, dtype=np.int64)
    g[rng.random((side, side)) < density] = BLOCK
    return g


def _quick_infeasible(params: MazeParams) -> str | None:
    """Reason the brackets cannot be met together, when provable without search."""
    tlo, thi = TURN_BRACKETS[params.structure_level]
    slo, shi = STEP_BRACKETS[params.goal_level]
    if tlo > shi - 1:
        return (f"structure {params.structure_level!r} needs >= {tlo} turns but goal "
                f"{params.goal_level!r} allows at most {shi} steps ({shi - 1} turns)")
    if thi <= 1:
        # A path with at most one turn is an L, so its length is a Manhattan distance.
        side = SIZE_SIDES[params.size_level][1]
        (ar, ac), radius = start_zone(side, side, params.start_level)
        reach = 0
        for r in range(max(0, ar - radius), min(side, ar + radius + 1)):
            for c in range(max(0, ac - radius), min(side, ac + radius + 1)):
                reach = max(reach, max(r, side - 1 - r) + max(c, side - 1 - c))
        if reach < slo:
            return (f"an L-shaped path from start zone {params.start_level} spans at most "
                    f"{reach} steps, goal {params.goal_level!r} needs >= {slo}")
    return None


def combo_feasible(params: MazeParams | ParamVector) -> bool:
    """False for level combinations that no grid can satisfy."""
    if isinstance(params, ParamVector):
        params = MazeParams.from_vector(params)
    return _quick_infeasible(params) is None


def generate_maze(params: MazeParams | ParamVector, rng: np.random.Generator,
                  max_retries: int = MAX_RETRIES) -> np.ndarray:
    """Random maze meeting all four difficulty brackets of ``params``.

    Each attempt carves a layout (randomised DFS, optionally braided, or an
    open room with scattered blocks), places the start inside its zone and
    picks the end among cells whose shortest path has the requested length
    and turn count.  Attempts repeat until one succeeds.
    """
    if isinstance(params, ParamVector):
        params = MazeParams.from_vector(params)
    reason = _quick_infeasible(params)
    if reason:
        raise InfeasibleSpecError(reason)
    lo, hi = SIZE_SIDES[params.size_level]
    tlo, thi = TURN_BRACKETS[params.structure_level]
    slo, shi = STEP_BRACKETS[params.goal_level]
    for _ in range(max_retries):
        side = int(rng.integers(lo, hi + 1))
        u = rng.random()
        if u < 0.5:
            g = _carve_dfs(side, rng, braid=float(rng.uniform(0.0, 0.25)))
        else:
            g = _open_room(side, rng, density=float(rng.uniform(0.0, 0.35)))
        (ar, ac), radius = start_zone(side, side, params.start_level)
        zone = [(r, c) for r in range(max(0, ar - radius), min(side, ar + radius + 1))
                for c in range(max(0, ac - radius), min(side, ac + radius + 1)) if g[r, c] == PATH]
        if not zone:
            continue
        start = zone[int(rng.integers(len(zone)))]
        dist, turns = _distance_turns(g, start)
        ok = (dist >= slo) & (dist <= shi) & (turns >= tlo) & (turns <= thi)
        ok[start] = False
        cand = np.argwhere(ok)
        if len(cand) == 0:
            continue
        er, ec = cand[int(rng.integers(len(cand)))]
        g[start] = START
        g[er, ec] = END
        if satisfies(g, params):
            return g
    raise InfeasibleSpecError(f"no maze satisfying {params.as_dict()} after {max_retries} attempts")


class MazeEnv:
    """Navigate from start to end seeing only the 3x3 neighbourhood.

    Observation: the 3x3 window of cell codes (out-of-grid cells read as
    blocks), row-major, followed by the agent's row and column scaled to
    [0, 1].  Actions: 0 up, 1 down, 2 left, 3 right.
    """

    family = "maze"
    n_actions = 4
    obs_dim = 11

    def __init__(self, params: ParamVector, seed: int, grid=None):
        self.params = params
        self.seed = int(seed)
        if grid is None:
            grid = generate_maze(params, np.random.default_rng(self.seed))
        self.grid = _as_grid(grid)
        self.height, self.width = self.grid.shape
        self.horizon = 4 * (self.width + self.height)
        self.start = locate(self.grid, START)
        self.goal = locate(self.grid, END)
        self.pos = self.start
        self.t = 0
        self.done = False

    def reset(self, seed: int | None = None) -> np.ndarray:
        # Layout and start are fixed by the generation seed; reset seed unused.
        self.pos = self.start
        self.t = 0
        self.done = False
        return self.observation()

    def observation(self) -> np.ndarray:
        r, c = self.pos
        window = np.full((3, 3), BLOCK, dtype=np.float64)
        for i, dr in enumerate((-1, 0, 1)):
            for j, dc in enumerate((-1, 0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < self.height and 0 <= cc < self.width:
                    window[i, j] = self.grid[rr, cc]
        coords = [r / max(self.height - 1, 1), c / max(self.width - 1, 1)]
        return np.concatenate([window.ravel(), coords])

    def step(self, action):
        from .core import StepResult
        if self.done:
            raise IllegalTransitionError("step() on a finished maze episode; call reset()")
        a = int(np.asarray(action).ravel()[0]) if np.ndim(action) else int(action)
        if not 0 <= a < 4:
            raise IllegalTransitionError(f"maze action must be in 0..3, got {action!r}")
        dr, dc = MOVES[a]
        r, c = self.pos[0] + dr, self.pos[1] + dc
        if 0 <= r < self.height and 0 <= c < self.width and self.grid[r, c] != BLOCK:
            self.pos = (r, c)
        self.t += 1
        terminal = self.pos == self.goal
        reward = GOAL_REWARD if terminal else STEP_PENALTY
        truncated = (not terminal) and self.t >= self.horizon
        self.done = terminal or truncated
        return StepResult(self.observation(), reward, terminal, truncated)
