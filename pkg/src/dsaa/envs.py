"""Grid rooms loaded from ASCII maps, the planar 3-link arm pushing a ball,
and a wrapper that appends fresh uniform noise to every observation."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

UP, DOWN, LEFT, RIGHT = range(4)
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}


class StepResult(NamedTuple):
    obs: np.ndarray
    reward: float
    done: bool
    truncated: bool = False  # done because of a step limit, not a terminal state


@dataclass
class Transition:
    x: np.ndarray
    a: int
    x_next: np.ndarray
    r: float
    done: bool
    # option bookkeeping, filled in by the driver
    s: int = 0
    s_goal: int = 0
    s_next: int = 0
    terminal: bool = False


class MapError(ValueError):
    pass


def parse_map(text: str) -> tuple[np.ndarray, tuple[int, int]]:
    """Parse ``#``/``.``/``S`` text into (wall grid, start cell)."""
    lines = [ln.rstrip("\r") for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    if any(len(ln) != width for ln in lines):
        raise MapError("map is not rectangular")
    bad = set("".join(lines)) - set("#.S")
    if bad:
        raise MapError(f"unknown map characters {sorted(bad)}")
    walls = np.array([[ch == "#" for ch in ln] for ln in lines])
    starts = [(r, c) for r, ln in enumerate(lines) for c, ch in enumerate(ln) if ch == "S"]
    if len(starts) != 1:
        raise MapError(f"map needs exactly one start cell, found {len(starts)}")
    if not (walls[0].all() and walls[-1].all() and walls[:, 0].all() and walls[:, -1].all()):
        raise MapError("map boundary must be walled")
    return walls, starts[0]


def shipped_map(name: str) -> str:
    return resources.files("dsaa.maps").joinpath(name).read_text(encoding="utf-8")


class GridWorld:
    """Deterministic 4-action grid. Bumping a wall leaves the agent in place;
    reward is always zero and episode length is the driver's business."""

    n_actions = 4

    def __init__(self, walls: np.ndarray, start: tuple[int, int], obs_mode: str = "coords_normalized"):
        if obs_mode not in ("coords_normalized", "one_hot_cell"):
            raise ValueError(f"unknown observation mode {obs_mode!r}")
        self.walls = np.asarray(walls, dtype=bool)
        self.rows, self.cols = self.walls.shape
        if self.walls[start]:
            raise MapError("start cell is a wall")
        self.start = tuple(start)
        self.agent = self.start
        self.obs_mode = obs_mode
        self.cells = [(r, c) for r in range(self.rows) for c in range(self.cols) if not self.walls[r, c]]
        self.cell_index = {cell: i for i, cell in enumerate(self.cells)}

    @classmethod
    def from_text(cls, text: str, obs_mode: str = "coords_normalized") -> "GridWorld":
        walls, start = parse_map(text)
        return cls(walls, start, obs_mode)

    @classmethod
    def from_file(cls, path, obs_mode: str = "coords_normalized") -> "GridWorld":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), obs_mode)

    @classmethod
    def four_rooms(cls, obs_mode: str = "coords_normalized") -> "GridWorld":
        return cls.from_text(shipped_map("four_rooms.map"), obs_mode)

    @classmethod
    def two_rooms(cls, obs_mode: str = "coords_normalized") -> "GridWorld":
        return cls.from_text(shipped_map("two_rooms.map"), obs_mode)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def obs_dim(self) -> int:
        return 2 if self.obs_mode == "coords_normalized" else self.n_cells

    def is_open(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.rows and 0 <= c < self.cols and not self.walls[r, c]

    def move(self, cell, a: int) -> tuple[int, int]:
        dr, dc = MOVES[a]
        nxt = (cell[0] + dr, cell[1] + dc)
        return nxt if self.is_open(nxt) else tuple(cell)

    def observe_cell(self, cell) -> np.ndarray:
        if self.obs_mode == "coords_normalized":
            return np.array([cell[0] / (self.rows - 1), cell[1] / (self.cols - 1)])
        v = np.zeros(self.n_cells)
        v[self.cell_index[tuple(cell)]] = 1.0
        return v

    def observe(self) -> np.ndarray:
        return self.observe_cell(self.agent)

    def reset(self) -> np.ndarray:
        self.agent = self.start
        return self.observe()

    def step(self, a: int) -> StepResult:
        if a not in MOVES:
            raise ValueError(f"invalid action {a}")
        self.agent = self.move(self.agent, int(a))
        return StepResult(self.observe(), 0.0, False)

    def discrete_state(self) -> int:
        return self.cell_index[self.agent]

    def uniform_transition_matrix(self) -> np.ndarray:
        """Row-stochastic P over open cells under the uniform random policy."""
        n = self.n_cells
        P = np.zeros((n, n))
        for i, cell in enumerate(self.cells):
            for a in MOVES:
                P[i, self.cell_index[self.move(cell, a)]] += 1.0 / len(MOVES)
        return P


# --------------------------------------------------------------------------
# Arm2D


def arm_forward_kinematics(theta_deg, links=(7.0, 7.0, 7.0)) -> np.ndarray:
    """Joint positions p0..p3 of a planar chain based at the origin."""
    cum = np.radians(np.cumsum(np.asarray(theta_deg, dtype=np.float64)))
    steps = np.asarray(links, dtype=np.float64)[:, None] * np.stack([np.cos(cum), np.sin(cum)], axis=1)
    return np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])


def closest_point_on_segment(p, a, b) -> np.ndarray:
    ab = b - a
    denom = ab @ ab
    t = 0.0 if denom == 0 else np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return a + t * ab


def ball_push(
    joints: np.ndarray,
    center: np.ndarray,
    radius: float,
    link_width: float,
    max_iters: int = 8,
) -> tuple[np.ndarray, bool]:
    """Move the ball out of any link capsule along the minimal translation.

    Resolves the deepest penetration first, repeating up to ``max_iters`` times.
    Returns ``(new_center, converged)``.
    """
    reach = radius + link_width / 2.0
    c = np.array(center, dtype=np.float64)
    for _ in range(max_iters):
        depth, push = 0.0, None
        for a, b in zip(joints[:-1], joints[1:]):
            q = closest_point_on_segment(c, a, b)
            d = c - q
            dist = float(np.hypot(d[0], d[1]))
            pen = reach - dist
            if pen > depth:
                if dist > 1e-12:
                    n = d / dist
                else:
                    # centre on the segment axis: push along the left normal
                    ab = b - a
                    n = np.array([-ab[1], ab[0]]) / np.hypot(ab[0], ab[1])
                depth, push = pen, n
        if push is None:
            return c, True
        c = c + depth * push
    return c, _min_separation(joints, c, reach) >= -1e-9


def _min_separation(joints, c, reach) -> float:
    return min(
        float(np.linalg.norm(c - closest_point_on_segment(c, a, b))) - reach
        for a, b in zip(joints[:-1], joints[1:])
    )


ARM_TASKS = {"easy": 11.0, "hard": 9.0}


@dataclass
class Arm2dWorld:
    """Three revolute joints in the plane and a free ball the arm can shove.

    Actions 2j and 2j+1 raise and lower joint j by ``delta`` degrees. The ball
    has no mass or gravity; it stays wherever the links leave it.
    """

    task: str = "easy"
    links: tuple = (7.0, 7.0, 7.0)
    ball_radius: float = 1.5
    link_width: float = 0.5
    ball_start: tuple = (13.0, 13.0)
    delta: float = 1.0
    joint_limit: float = 90.0
    max_steps: int = 5000
    y_task: float | None = None
    theta: np.ndarray = field(init=False)
    ball: np.ndarray = field(init=False)
    steps: int = field(init=False, default=0)
    push_warnings: int = field(init=False, default=0)

    n_actions = 6
    obs_dim = 5

    def __post_init__(self):
        if self.y_task is None:
            if self.task not in ARM_TASKS:
                raise ValueError(f"unknown arm task {self.task!r}")
            self.y_task = ARM_TASKS[self.task]
        self.scale = float(sum(self.links))
        self.reset()

    def reset(self) -> np.ndarray:
        self.theta = np.zeros(3)
        self.ball = np.array(self.ball_start, dtype=np.float64)
        self.steps = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        return np.concatenate([self.theta / self.joint_limit, self.ball / self.scale])

    def joints(self) -> np.ndarray:
        return arm_forward_kinematics(self.theta, self.links)

    def step(self, a: int) -> StepResult:
        if not 0 <= a < self.n_actions:
            raise ValueError(f"invalid action {a}")
        j, sign = divmod(int(a), 2)
        new = self.theta[j] + (self.delta if sign == 0 else -self.delta)
        if abs(new) <= self.joint_limit:
            self.theta[j] = new
            self.ball, ok = ball_push(self.joints(), self.ball, self.ball_radius, self.link_width)
            if not ok:
                self.push_warnings += 1
        self.steps += 1
        reward = 1.0 if self.ball[1] < self.y_task else 0.0
        truncated = reward == 0.0 and self.steps >= self.max_steps
        return StepResult(self.observe(), reward, reward > 0 or truncated, truncated)

    def discrete_state(self):
        return None

    def observe_config(self, theta, ball) -> np.ndarray:
        return np.concatenate([np.asarray(theta, float) / self.joint_limit, np.asarray(ball, float) / self.scale])


class NoiseWrapper:
    """Appends ``k`` fresh U(0, 1) values to each observation of ``inner``."""

    def __init__(self, inner, k: int = 2, rng: np.random.Generator | None = None):
        self.inner = inner
        self.k = k
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.n_actions = inner.n_actions

    @property
    def obs_dim(self) -> int:
        return self.inner.obs_dim + self.k

    def _augment(self, obs):
        return np.concatenate([obs, self.rng.random(self.k)])

    def reset(self):
        return self._augment(self.inner.reset())

    def step(self, a):
        res = self.inner.step(a)
        return res._replace(obs=self._augment(res.obs))

    def discrete_state(self):
        return self.inner.discrete_state()

    def strip(self, obs):
        return np.asarray(obs)[..., : self.inner.obs_dim]

    def __getattr__(self, name):
        if name == "inner":
            raise AttributeError(name)
        return getattr(self.inner, name)


def make_env(name: str, *, task: str = "easy", noise_k: int = 0, seed: int = 0, obs_mode: str = "coords_normalized"):
    name = name.lower()
    if name in ("fourrooms", "four_rooms"):
        env = GridWorld.four_rooms(obs_mode)
    elif name in ("tworooms", "two_rooms"):
        env = GridWorld.two_rooms(obs_mode)
    elif name == "arm2d":
        env = Arm2dWorld(task=task)
    elif Path(name).suffix == ".map":
        env = GridWorld.from_file(name, obs_mode)
    else:
        raise ValueError(f"unknown environment {name!r}")
    if noise_k:
        env = NoiseWrapper(env, noise_k, np.random.default_rng(seed))
    return env


ENV_NAMES = ("fourrooms", "tworooms", "arm2d")
