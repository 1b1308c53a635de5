"""Desk-scale maze benchmarks exposing coordinates as state features.

GridMaze moves on integer cells with four actions; PointMaze moves a
continuous point with eight fixed-length thrust directions. Both treat a
configurable set of blocked cells as walls, reward either densely
(negative Euclidean distance to the goal) or sparsely (1 within the goal
radius, else 0), and end episodes on success or after max_steps.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["MazeSpec", "EnvState", "GridMaze", "PointMaze", "make_env"]

GRID_MOVES = ((1, 0), (0, 1), (-1, 0), (0, -1))  # right, up, left, down
POINT_DIRECTIONS = tuple(
    (np.cos(a), np.sin(a)) for a in (np.pi / 4 * k for k in range(8))
)


@dataclass(frozen=True)
class MazeSpec:
    """Static maze layout and episode rules."""

    width: int
    height: int
    walls: frozenset = field(default_factory=frozenset)
    start: tuple = (0, 0)
    goal: tuple = (0, 0)
    goal_radius: float = 1.0
    reward_mode: str = "sparse"
    max_steps: int = 200
    # transitions listed here are passable only in the given direction;
    # excluded from acceptance gating, used to probe asymmetric layouts
    one_way_doors: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(tuple(w) for w in self.walls))
        object.__setattr__(
            self, "one_way_doors",
            frozenset((tuple(a), tuple(b)) for a, b in self.one_way_doors))
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goal", tuple(self.goal))
        if self.width < 1 or self.height < 1:
            raise ValueError("maze dimensions must be positive")
        if self.goal_radius <= 0:
            raise ValueError("goal_radius must be positive")
        if self.reward_mode not in ("dense", "sparse"):
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        for name, cell in (("start", self.start), ("goal", self.goal)):
            if not self.in_bounds(cell):
                raise ValueError(f"{name} cell {cell} is out of bounds")
            if tuple(map(int, cell)) in self.walls:
                raise ValueError(f"{name} cell {cell} is a wall")
        if self.goal not in self.reachable_cells():
            raise ValueError("goal is not reachable from start")

    def in_bounds(self, cell):
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def open_cell(self, cell):
        return self.in_bounds(cell) and tuple(map(int, cell)) not in self.walls

    def passable(self, src, dst):
        """Whether a unit move src -> dst is allowed by walls and doors."""
        if not self.open_cell(dst):
            return False
        if (tuple(dst), tuple(src)) in self.one_way_doors:
            return False  # dst -> src is the allowed direction
        return True

    def reachable_cells(self):
        """Cells reachable from start by unit moves (breadth-first)."""
        start = tuple(map(int, self.start))
        seen = {start}
        frontier = deque([start])
        while frontier:
            cx, cy = frontier.popleft()
            for dx, dy in GRID_MOVES:
                nxt = (cx + dx, cy + dy)
                if nxt not in seen and self.passable((cx, cy), nxt):
                    seen.add(nxt)
                    frontier.append(nxt)
        return seen

    def to_payload(self):
        return {
            "width": self.width,
            "height": self.height,
            "walls": sorted(list(w) for w in self.walls),
            "start": list(self.start),
            "goal": list(self.goal),
            "goal_radius": self.goal_radius,
            "reward_mode": self.reward_mode,
            "max_steps": self.max_steps,
            "one_way_doors": sorted([list(a), list(b)] for a, b in self.one_way_doors),
        }

    @classmethod
    def from_payload(cls, payload):
        return cls(
            width=payload["width"],
            height=payload["height"],
            walls=frozenset(tuple(w) for w in payload.get("walls", [])),
            start=tuple(payload["start"]),
            goal=tuple(payload["goal"]),
            goal_radius=payload.get("goal_radius", 1.0),
            reward_mode=payload.get("reward_mode", "sparse"),
            max_steps=payload.get("max_steps", 200),
            one_way_doors=frozenset(
                (tuple(a), tuple(b)) for a, b in payload.get("one_way_doors", [])),
        )

    @classmethod
    def load(cls, path):
        return cls.from_payload(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_payload(), indent=2))


@dataclass
class EnvState:
    position: np.ndarray
    step_index: int = 0
    done: bool = False
    success: bool = False


class _MazeBase:
    """Shared reward/termination logic; subclasses define the kinematics."""

    def __init__(self, spec):
        self.spec = spec

    def reset(self, rng=None):
        state = EnvState(position=np.array(self.spec.start, dtype=np.float64))
        return state, self.phi(state)

    def phi(self, state):
        """State representation: the position coordinates."""
        return state.position.copy()

    @property
    def n_actions(self):
        raise NotImplementedError

    def position_bounds(self):
        """Per-dimension (low, high) box valid positions live in."""
        raise NotImplementedError

    def _move(self, position, action):
        raise NotImplementedError

    def step(self, state, action):
        if state.done:
            raise RuntimeError("episode is done; call reset")
        if not 0 <= int(action) < self.n_actions:
            raise ValueError(f"action {action} out of range 0..{self.n_actions - 1}")
        position = self._move(state.position, int(action))
        dist_goal = float(np.linalg.norm(position - np.asarray(self.spec.goal, dtype=np.float64)))
        success = dist_goal <= self.spec.goal_radius
        if self.spec.reward_mode == "dense":
            reward = -dist_goal
        else:
            reward = 1.0 if success else 0.0
        step_index = state.step_index + 1
        done = success or step_index >= self.spec.max_steps
        nxt = EnvState(position=position, step_index=step_index, done=done, success=success)
        return nxt, self.phi(nxt), reward, done, success


class GridMaze(_MazeBase):
    """Integer-cell maze with four unit moves; wall bumps hold position."""

    @property
    def n_actions(self):
        return len(GRID_MOVES)

    def position_bounds(self):
        return ((0.0, float(self.spec.width - 1)), (0.0, float(self.spec.height - 1)))

    def _move(self, position, action):
        cur = (int(round(position[0])), int(round(position[1])))
        dx, dy = GRID_MOVES[action]
        nxt = (cur[0] + dx, cur[1] + dy)
        if not self.spec.passable(cur, nxt):
            nxt = cur
        return np.array(nxt, dtype=np.float64)


class PointMaze(_MazeBase):
    """Continuous-position maze with eight fixed-length thrust directions."""

    def __init__(self, spec, step_length=0.5):
        super().__init__(spec)
        if step_length <= 0:
            raise ValueError("step_length must be positive")
        self.step_length = float(step_length)

    @property
    def n_actions(self):
        return len(POINT_DIRECTIONS)

    def position_bounds(self):
        return ((0.0, float(self.spec.width)), (0.0, float(self.spec.height)))

    def _move(self, position, action):
        direction = POINT_DIRECTIONS[action]
        target = position + self.step_length * np.asarray(direction)
        cell = (int(np.floor(target[0])), int(np.floor(target[1])))
        if target[0] < 0 or target[1] < 0 or target[0] >= self.spec.width \
                or target[1] >= self.spec.height or not self.spec.open_cell(cell):
            return position.copy()
        src_cell = (int(np.floor(position[0])), int(np.floor(position[1])))
        if cell != src_cell and (cell, src_cell) in self.spec.one_way_doors:
            return position.copy()
        return target


def make_env(kind, spec, **kwargs):
    if kind == "grid":
        return GridMaze(spec, **kwargs)
    if kind == "point":
        return PointMaze(spec, **kwargs)
    raise ValueError(f"unknown environment kind {kind!r}")
