"""Exact tabular oracles, exploration metrics, abstraction scores,
baselines, and image renderers."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .driver import EpisodeManager, RunConfig, _sample, _spawn, converged
from .envs import Transition
from .options import OptionBank, OptionConfig
from .replay import ReplayBuffer


# --------------------------------------------------------------------------
# Successor representation oracle


@dataclass
class TabularMdp:
    P: np.ndarray
    gamma: float = 0.95

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        n = self.P.shape[0]
        if self.P.shape != (n, n):
            raise ValueError("transition matrix must be square")
        if (self.P < 0).any() or np.abs(self.P.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("transition matrix rows must be probability vectors")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]


def oracle_sr(m: TabularMdp) -> np.ndarray:
    """Psi = (I - gamma P)^-1, the solution of Psi = I + gamma P Psi."""
    if not 0.0 <= m.gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    n = m.n_states
    A = np.eye(n) - m.gamma * m.P
    if np.linalg.cond(A) > 1e12:
        raise np.linalg.LinAlgError("SR system is numerically singular")
    return np.linalg.solve(A, np.eye(n))


def sr_distance_map(psi: np.ndarray, ref: int) -> np.ndarray:
    """Euclidean distance between every row of ``psi`` and row ``ref``."""
    return np.linalg.norm(psi - psi[ref], axis=1)


def random_stochastic_matrix(n: int, rng: np.random.Generator, concentration: float = 1.0) -> np.ndarray:
    return rng.dirichlet(np.full(n, concentration), size=n)


SR_DEMO_REFS = ((4, 4), (4, 9), (4, 14))  # left room middle, hallway, right room middle


def sr_demo_fields(env, gamma: float = 0.95, refs=SR_DEMO_REFS) -> dict:
    """Uniform-policy SR distance field per reference cell, keyed by cell."""
    psi = oracle_sr(TabularMdp(env.uniform_transition_matrix(), gamma))
    out = {}
    for ref in refs:
        d = sr_distance_map(psi, env.cell_index[tuple(ref)])
        out[tuple(ref)] = {cell: float(d[i]) for i, cell in enumerate(env.cells)}
    return out


def render_sr_demo(env, out_dir, gamma: float = 0.95, refs=SR_DEMO_REFS, scale: int = 8) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ref, field_ in sr_demo_fields(env, gamma, refs).items():
        paths.append(render_heatmap(env.walls, field_, out_dir / f"sr_distance_{ref[0]}_{ref[1]}.pgm", scale))
    return paths


# --------------------------------------------------------------------------
# Occupancy and coverage


@dataclass
class OccupancyStats:
    counts: np.ndarray
    distribution: np.ndarray
    entropy: float
    coverage: np.ndarray  # fraction of states visited after each step
    normalized_entropy: float = field(default=0.0)

    def steps_to_coverage(self, fraction: float) -> int | None:
        hit = np.flatnonzero(self.coverage >= fraction - 1e-12)
        return int(hit[0]) + 1 if hit.size else None


def occupancy_stats(trajectory, n_states: int) -> OccupancyStats:
    traj = np.asarray(trajectory, dtype=np.int64)
    traj = traj[traj >= 0]
    counts = np.bincount(traj, minlength=n_states).astype(np.float64)
    total = counts.sum()
    dist = counts / total if total else counts
    nz = dist[dist > 0]
    h = float(-(nz * np.log(nz)).sum()) if nz.size else 0.0
    first = np.zeros(len(traj), dtype=bool)
    # first-visit flags, then a running count
    _, idx = np.unique(traj, return_index=True)
    first[idx] = True
    coverage = np.cumsum(first) / n_states
    return OccupancyStats(counts, dist, h, coverage, h / np.log(n_states) if n_states > 1 else 0.0)


# --------------------------------------------------------------------------
# Room structure and abstraction quality


def doorway_cells(env) -> set:
    """Open cells squeezed between walls on two opposite sides."""
    out = set()
    for r, c in env.cells:
        w = env.walls
        if (w[r - 1, c] and w[r + 1, c]) or (w[r, c - 1] and w[r, c + 1]):
            out.add((r, c))
    return out


def room_labels(env) -> dict:
    """Room id per open cell: connected components after removing doorways."""
    doors = doorway_cells(env)
    labels: dict = {}
    room = 0
    for cell in env.cells:
        if cell in doors or cell in labels:
            continue
        labels[cell] = room
        queue = deque([cell])
        while queue:
            cur = queue.popleft()
            for a in range(4):
                nxt = env.move(cur, a)
                if nxt not in doors and nxt not in labels:
                    labels[nxt] = room
                    queue.append(nxt)
        room += 1
    return labels


def room_purity(assignment: dict, labels: dict) -> tuple[float, int]:
    """Mean over abstract states of the largest single-room share of the
    state's preimage. Returns ``(purity, n_empty_states_skipped)``; cells
    without a room label are ignored."""
    by_state: dict = {}
    for cell, s in assignment.items():
        if cell in labels:
            by_state.setdefault(int(s), []).append(labels[cell])
    n_states = max([int(s) for s in assignment.values()] + [0]) + 1
    shares = []
    for s, rooms in by_state.items():
        shares.append(np.bincount(rooms).max() / len(rooms))
    empty = n_states - len(by_state)
    return (float(np.mean(shares)) if shares else 0.0), empty


def grid_assignment(encoder, env) -> dict:
    """Abstract state of every open cell (noise-free observation)."""
    obs = np.array([env.observe_cell(c) for c in env.cells])
    states = encoder.encode_hard(obs)
    return {cell: int(s) for cell, s in zip(env.cells, np.atleast_1d(states))}


def noise_consistency(encode, inner_obs: np.ndarray, k_noise: int, k_draws: int,
                      rng: np.random.Generator) -> float:
    """Per probe, the share of noise redraws that land in the probe's modal
    abstract state; averaged over probes. ``encode`` maps (B, d) -> states."""
    if k_draws < 2:
        raise ValueError("need at least two noise draws")
    scores = []
    for obs in np.atleast_2d(inner_obs):
        X = np.hstack([np.repeat(obs[None], k_draws, axis=0), rng.random((k_draws, k_noise))])
        states = np.atleast_1d(encode(X))
        scores.append(np.bincount(states).max() / k_draws)
    return float(np.mean(scores))


# --------------------------------------------------------------------------
# Baselines


def baseline_uniform_walk(env, steps: int, rng: np.random.Generator, cap: int) -> np.ndarray:
    """Uniform random actions under the same episode manager as DSAA.
    Returns the discrete state after each step."""
    episodes = EpisodeManager(env, cap)
    episodes.reset()
    out = np.empty(steps, dtype=np.int64)
    actions = rng.integers(0, env.n_actions, size=steps)
    for t in range(steps):
        _, _, over = episodes.step(int(actions[t]))
        cell = env.discrete_state()
        out[t] = -1 if cell is None else cell
        if over:
            episodes.next_episode()
    return out


@dataclass
class FlatRun:
    bank: OptionBank
    episode_returns: list
    episode_end_steps: list
    total_steps: int
    first_success_step: int | None
    stopped_by: str


def baseline_flat_softq(env, cfg: RunConfig, reward_scale: float | None = None) -> FlatRun:
    """One soft-Q policy on the raw environment reward.

    Reuses the option machinery with a single abstract state and head.
    Environment reward is multiplied by ``reward_scale`` (the option reward
    scale by default) so it weighs against the entropy bonus as options do.
    """
    o = cfg.options
    scale = o.reward_scale if reward_scale is None else reward_scale
    _, _, r_bank, _, r_replay, _, r_act = _spawn(cfg.seed, 7)
    bank = OptionBank(env.obs_dim, 1, env.n_actions, OptionConfig(**{**vars(o), "hidden": o.hidden}), r_bank)
    bank.ensure_head(0)
    buf = ReplayBuffer(cfg.buffer_capacity, r_replay)
    episodes = EpisodeManager(env, cfg.episode_cap)
    x = episodes.reset()
    returns, ends = [], []
    first = None
    stopped = "step_cap"
    for t in range(cfg.max_total_steps):
        a = _sample(bank.action_probs(x, 0, 0), r_act)
        res, terminal, over = episodes.step(a)
        buf.push(Transition(x, a, res.obs, scale * res.reward, over, 0, 0, 0, terminal))
        if len(buf) >= o.batch_size:
            for _ in range(cfg.updates_per_step):
                bank.update(buf.sample(o.batch_size))
        if res.reward > 0 and first is None:
            first = t + 1
        if over:
            returns.append(episodes.ret)
            ends.append(t + 1)
            x = episodes.next_episode()
            if cfg.mode == "online" and converged(cfg, returns):
                stopped = "converged"
                break
        else:
            x = res.obs
    return FlatRun(bank, returns, ends, t + 1, first, stopped)


# --------------------------------------------------------------------------
# Rendering

PALETTE = [
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
]
WALL = (0, 0, 0)


def color_of(s: int) -> tuple:
    return PALETTE[s % len(PALETTE)]


def _write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.astype(np.uint8).tobytes())


def write_pgm(path, gray: np.ndarray) -> None:
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(np.clip(gray, 0, 255).astype(np.uint8).tobytes())


def read_pnm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    magic = parts[0]
    w, h = map(int, parts[1].split())
    data = np.frombuffer(parts[3], dtype=np.uint8)
    return data.reshape(h, w, 3) if magic == b"P6" else data.reshape(h, w)


def abstraction_image(walls: np.ndarray, assignment: dict, scale: int = 1, gray: bool = True) -> np.ndarray:
    """Pixel grid: walls black, abstract state s as gray level
    ``40 + 215 * (s + 1) / (n + 1)`` or as a palette colour."""
    rows, cols = walls.shape
    n = max(assignment.values()) + 1 if assignment else 1
    if gray:
        img = np.zeros((rows, cols))
        for (r, c), s in assignment.items():
            img[r, c] = 40 + 215 * (s + 1) / (n + 1)
    else:
        img = np.zeros((rows, cols, 3))
        for (r, c), s in assignment.items():
            img[r, c] = color_of(s)
    img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return np.round(img)


def render_abstraction(walls: np.ndarray, assignment: dict, out, scale: int = 8) -> Path:
    """Write a PGM (grayscale, P5), PPM (colour, P6) or SVG depending on suffix."""
    out = Path(out)
    if out.suffix == ".svg":
        out.write_text(abstraction_svg(walls, assignment, scale))
    elif out.suffix == ".ppm":
        _write_ppm(out, abstraction_image(walls, assignment, scale, gray=False))
    else:
        write_pgm(out, abstraction_image(walls, assignment, scale, gray=True))
    return out


def abstraction_svg(walls: np.ndarray, assignment: dict, scale: int = 16) -> str:
    rows, cols = walls.shape
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{cols * scale}" height="{rows * scale}">']
    for r in range(rows):
        for c in range(cols):
            if walls[r, c]:
                fill = "#000000"
                label = ""
            else:
                s = assignment.get((r, c))
                fill = "#ffffff" if s is None else "#%02x%02x%02x" % color_of(s)
                label = "" if s is None else str(s)
            parts.append(f'<rect x="{c * scale}" y="{r * scale}" width="{scale}" height="{scale}" fill="{fill}"/>')
            if label:
                parts.append(
                    f'<text x="{c * scale + scale / 2}" y="{r * scale + scale * 0.7}" font-size="{scale * 0.6}" '
                    f'text-anchor="middle">{label}</text>'
                )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_heatmap(walls: np.ndarray, values: dict, out, scale: int = 8) -> Path:
    """Grayscale PGM of per-cell values scaled to [0, 255]; walls black."""
    rows, cols = walls.shape
    img = np.zeros((rows, cols))
    vals = np.array(list(values.values()), dtype=np.float64)
    lo, hi = float(vals.min()), float(vals.max())
    span = hi - lo if hi > lo else 1.0
    for (r, c), v in values.items():
        img[r, c] = 30 + 225 * (v - lo) / span
    img = np.repeat(np.repeat(np.round(img), scale, axis=0), scale, axis=1)
    write_pgm(out, img)
    return Path(out)


def arm_probe_slice(env, joints=(0, 1), fixed=None, resolution: int = 61):
    """Observations over a grid of two joint angles with the rest held fixed
    (remaining joint at 0 and the ball at its start unless ``fixed`` says otherwise)."""
    fixed = dict(fixed or {})
    grid = np.linspace(-env.joint_limit, env.joint_limit, resolution)
    obs, probes = [], []
    for i, a in enumerate(grid):
        for j, b in enumerate(grid):
            theta = np.array([fixed.get("theta", [0.0, 0.0, 0.0])]).ravel().astype(float)
            theta[joints[0]], theta[joints[1]] = a, b
            ball = fixed.get("ball", env.ball_start)
            obs.append(env.observe_config(theta, ball))
            probes.append((i, j))
    return np.array(obs), probes, grid


def render_arm_slice(encoder, env, out, joints=(0, 1), resolution: int = 61, scale: int = 4) -> Path:
    obs, probes, _ = arm_probe_slice(env, joints, resolution=resolution)
    states = np.atleast_1d(encoder.encode_hard(obs))
    assignment = {p: int(s) for p, s in zip(probes, states)}
    walls = np.zeros((resolution, resolution), dtype=bool)
    return render_abstraction(walls, assignment, out, scale)


def line_plot_svg(series: dict, xlabel: str = "", ylabel: str = "", width: int = 640, height: int = 400) -> str:
    """Minimal multi-series line chart. ``series`` maps name -> (xs, ys)."""
    pad = 50
    xs = np.concatenate([np.asarray(v[0], float) for v in series.values()])
    ys = np.concatenate([np.asarray(v[1], float) for v in series.values()])
    x0, x1 = float(xs.min()), float(xs.max()) if xs.max() > xs.min() else float(xs.min()) + 1
    y0, y1 = float(min(ys.min(), 0.0)), float(ys.max()) if ys.max() > min(ys.min(), 0.0) else 1.0

    def px(x, y):
        return (pad + (x - x0) / (x1 - x0) * (width - 2 * pad),
                height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad))

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="#000"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="#000"/>',
             f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
             f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" '
             f'text-anchor="middle">{ylabel}</text>',
             f'<text x="{pad}" y="{height - pad + 14}" font-size="10">{x0:g}</text>',
             f'<text x="{width - pad}" y="{height - pad + 14}" font-size="10" text-anchor="end">{x1:g}</text>',
             f'<text x="{pad - 4}" y="{pad}" font-size="10" text-anchor="end">{y1:g}</text>']
    for k, (name, (sx, sy)) in enumerate(series.items()):
        pts = " ".join("%.1f,%.1f" % px(float(x), float(y)) for x, y in zip(sx, sy))
        color = "#%02x%02x%02x" % color_of(k)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * k}" font-size="11" fill="{color}" '
                     f'text-anchor="end">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --------------------------------------------------------------------------
# CSV helpers


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_coverage_csv(path, stats: OccupancyStats, every: int = 100) -> None:
    idx = list(range(every - 1, len(stats.coverage), every))
    write_rows(path, ["step", "fraction_visited"], [(i + 1, float(stats.coverage[i])) for i in idx])
