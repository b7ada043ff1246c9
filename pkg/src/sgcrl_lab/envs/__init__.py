"""Deterministic, fully enumerable tabular environments with exposed dynamics.

Every environment is a frozen transition table: ``transition[s, a]`` gives the
unique next state. Illegal moves (walls, illegal disk moves) are
self-transitions, so the nominal action set is uniform across states and a
softmax policy is well-defined everywhere. Instances are immutable after
construction and safe to share across concurrent runs.
"""
from __future__ import annotations

import importlib.resources
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

StateId = int
ActionId = int

# FourRooms / grid-maze action order.
UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
GRID_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

# Tower of Hanoi actions: ordered (from_peg, to_peg) pairs.
HANOI_MOVES = ((0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1))


@dataclass(frozen=True)
class GridMeta:
    """2-D layout info for rendering and room-level analysis."""

    n_rows: int
    n_cols: int
    coords: np.ndarray  # (num_states, 2) int, (row, col) per state
    chars: tuple[str, ...]  # raw layout rows, '#' wall / '.' free / 'S' / 'G'


@dataclass(frozen=True)
class TabularEnv:
    """Enumerable deterministic MDP with a dense transition table."""

    name: str
    num_states: int
    num_actions: int
    start: StateId
    goal: StateId
    transition: np.ndarray  # (num_states, num_actions) int
    layout_meta: GridMeta | None = None

    def step(self, s: StateId, a: ActionId) -> StateId:
        """Pure transition lookup; rejects out-of-range ids."""
        if not 0 <= s < self.num_states:
            raise ValueError(f"state {s} out of range [0, {self.num_states})")
        if not 0 <= a < self.num_actions:
            raise ValueError(f"action {a} out of range [0, {self.num_actions})")
        return int(self.transition[s, a])

    def enumerate_states(self) -> list[StateId]:
        """Dense, stable ordering used to index embedding tables."""
        return list(range(self.num_states))


@dataclass(frozen=True)
class EpisodeSpec:
    max_steps: int = 100
    terminate_on_goal: bool = True

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def env_step(env: TabularEnv, s: StateId, a: ActionId) -> StateId:
    return env.step(s, a)


def enumerate_states(env: TabularEnv) -> list[StateId]:
    return env.enumerate_states()


# ---------------------------------------------------------------------------
# grid mazes


def _grid_env_from_chars(rows: list[str], name: str) -> TabularEnv:
    n_rows, n_cols = len(rows), len(rows[0])
    if any(len(r) != n_cols for r in rows):
        raise ValueError("ragged layout: all rows must have equal length")
    free: dict[tuple[int, int], int] = {}
    start = goal = None
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "#":
                continue
            if ch not in ".SG":
                raise ValueError(f"unknown layout character {ch!r} at ({r},{c})")
            idx = len(free)
            free[(r, c)] = idx
            if ch == "S":
                if start is not None:
                    raise ValueError("layout must contain exactly one S")
                start = idx
            elif ch == "G":
                if goal is not None:
                    raise ValueError("layout must contain exactly one G")
                goal = idx
    if start is None or goal is None:
        raise ValueError("layout must contain exactly one S and one G")

    num_states = len(free)
    transition = np.empty((num_states, 4), dtype=np.int64)
    for (r, c), idx in free.items():
        for a, (dr, dc) in enumerate(GRID_MOVES):
            nxt = free.get((r + dr, c + dc), idx)  # walls and borders are no-ops
            transition[idx, a] = nxt
    coords = np.array(sorted(free, key=free.get), dtype=np.int64)
    meta = GridMeta(n_rows=n_rows, n_cols=n_cols, coords=coords, chars=tuple(rows))
    return TabularEnv(
        name=name,
        num_states=num_states,
        num_actions=4,
        start=start,
        goal=goal,
        transition=transition,
        layout_meta=meta,
    )


def fourrooms_layout(grid_side: int = 11) -> list[str]:
    """Text layout of the four-rooms maze: one wall per axis, 4 doorways."""
    if grid_side < 5 or grid_side % 2 == 0:
        raise ValueError("grid_side must be odd and >= 5")
    n = grid_side
    w = n // 2  # wall row and wall column
    doors = {
        (w, w // 2),  # horizontal wall, left segment
        (w, w + 1 + (n - 1 - w) // 2),  # horizontal wall, right segment
        (w // 2, w),  # vertical wall, top segment
        (w + 1 + (n - 1 - w) // 2, w),  # vertical wall, bottom segment
    }
    rows = []
    for r in range(n):
        line = []
        for c in range(n):
            on_wall = (r == w or c == w) and (r, c) not in doors
            line.append("#" if on_wall else ".")
        rows.append("".join(line))

    def put(r: int, c: int, ch: str) -> None:
        rows[r] = rows[r][:c] + ch + rows[r][c + 1 :]

    put(n - 1, 0, "S")  # bottom-left room corner
    put(0, n - 1, "G")  # top-right room corner
    return rows


def make_fourrooms(grid_side: int = 11) -> TabularEnv:
    return _grid_env_from_chars(fourrooms_layout(grid_side), f"fourrooms-{grid_side}")


def load_layout(text: str, name: str = "custom") -> TabularEnv:
    """Build a grid maze from plain text ('#' wall, '.' free, 'S' start, 'G' goal)."""
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty layout")
    return _grid_env_from_chars(rows, name)


def builtin_layout(name: str) -> TabularEnv:
    """Load one of the shipped maze layouts ('lwall', 'spiral')."""
    path = importlib.resources.files(__package__) / "layouts" / f"{name}.txt"
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValueError(f"unknown builtin layout {name!r}") from None
    return load_layout(text, name)


def rooms(env: TabularEnv) -> dict[str, list[StateId]]:
    """Quadrant membership for four-rooms style mazes (wall/door cells excluded)."""
    meta = env.layout_meta
    if meta is None:
        raise ValueError("rooms() needs a grid environment")
    wr, wc = meta.n_rows // 2, meta.n_cols // 2
    out: dict[str, list[StateId]] = {
        "top_left": [], "top_right": [], "bottom_left": [], "bottom_right": []
    }
    for idx, (r, c) in enumerate(meta.coords):
        if r == wr or c == wc:
            continue
        key = ("top" if r < wr else "bottom") + "_" + ("left" if c < wc else "right")
        out[key].append(idx)
    return out


# ---------------------------------------------------------------------------
# Tower of Hanoi


def make_hanoi(num_disks: int) -> TabularEnv:
    """Tower of Hanoi as an MDP over all 3^n disk-to-peg assignments.

    Disk 0 is the smallest; a state encodes each disk's peg in base 3. The six
    actions are ordered (from, to) peg pairs; illegal moves stay in place.
    Start: all disks on peg 0. Goal: all disks on peg 2.
    """
    if not 1 <= num_disks <= 7:
        raise ValueError("num_disks must be in [1, 7]")
    n = num_disks
    num_states = 3**n
    transition = np.empty((num_states, 6), dtype=np.int64)
    for s in range(num_states):
        pegs = [(s // 3**d) % 3 for d in range(n)]
        # top disk of each peg = smallest disk index present
        top = [None, None, None]
        for d in range(n - 1, -1, -1):
            top[pegs[d]] = d
        for a, (f, t) in enumerate(HANOI_MOVES):
            d = top[f]
            if d is None or (top[t] is not None and top[t] < d):
                transition[s, a] = s
            else:
                transition[s, a] = s + (t - f) * 3**d
    goal = num_states - 1  # all disks on peg 2
    return TabularEnv(
        name=f"hanoi-{n}",
        num_states=num_states,
        num_actions=6,
        start=0,
        goal=goal,
        transition=transition,
    )


def make_chain(length: int, start: StateId = 0, goal: StateId | None = None) -> TabularEnv:
    """A 1-D chain with left/right actions; ends are self-transitions."""
    if length < 2:
        raise ValueError("length must be >= 2")
    transition = np.empty((length, 2), dtype=np.int64)
    for s in range(length):
        transition[s, 0] = max(0, s - 1)
        transition[s, 1] = min(length - 1, s + 1)
    return TabularEnv(
        name=f"chain-{length}",
        num_states=length,
        num_actions=2,
        start=start,
        goal=length - 1 if goal is None else goal,
        transition=transition,
    )


def with_absorbing_goal(env: TabularEnv) -> TabularEnv:
    """Episodic-task variant: every action at the goal is a self-transition."""
    transition = env.transition.copy()
    transition[env.goal, :] = env.goal
    return replace(env, transition=transition)


def shortest_distances(env: TabularEnv, source: StateId | None = None) -> np.ndarray:
    """BFS distance from ``source`` (default: start) to every state; -1 if unreachable."""
    src = env.start if source is None else source
    dist = np.full(env.num_states, -1, dtype=np.int64)
    dist[src] = 0
    queue = deque([src])
    while queue:
        s = queue.popleft()
        for a in range(env.num_actions):
            nxt = int(env.transition[s, a])
            if dist[nxt] < 0:
                dist[nxt] = dist[s] + 1
                queue.append(nxt)
    return dist
