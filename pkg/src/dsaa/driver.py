"""The outer loop: explore with options on a lazily-walked abstract graph,
then refit the abstraction on what was collected, and repeat."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .abstraction import AbstractionLossConfig, Encoder, SrDecoder, abstraction_update, save_abstraction
from .envs import Transition
from .graph import AbstractAgent, AbstractAgentConfig, AbstractGraph, choose_goal_walk
from .nn import GumbelConfig
from .options import OptionBank, OptionConfig, option_policy, option_reward, option_terminal
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

ENCODE_CACHE = 4096
STEP_COLUMNS = ("step", "phase", "episode", "s", "s_goal", "env_reward", "option_reward", "cell")
PHASE_COLUMNS = (
    "phase", "steps", "episodes", "edges", "phase_unique_cells", "total_unique_cells",
    "option_loss", "abstraction_loss", "l_h", "l_sr", "mean_return", "epsilon",
)


@dataclass
class RunConfig:
    mode: str = "unsupervised"  # or "online"
    n_abstract: int = 8
    e_iters: int = 100_000
    episode_cap: int = 5000
    outer_iters: int = 10
    window: int = 10
    return_threshold: float = 0.9
    max_return: float = 1.0
    max_total_steps: int = 3_000_000
    buffer_capacity: int = 100_000
    updates_per_step: int = 1
    reset_options: bool = False
    seed: int = 0
    encoder_hidden: tuple = (128, 256)
    decoder_hidden: tuple = (64, 128)
    log_steps: bool = True
    abstraction: AbstractionLossConfig = field(default_factory=AbstractionLossConfig)
    options: OptionConfig = field(default_factory=OptionConfig)
    agent: AbstractAgentConfig = field(default_factory=AbstractAgentConfig)

    def __post_init__(self):
        if self.mode not in ("unsupervised", "online"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.e_iters < self.episode_cap:
            raise ValueError("e_iters must be at least the episode cap")
        if self.n_abstract < 1:
            raise ValueError("need at least one abstract state")
        self.encoder_hidden = tuple(int(h) for h in self.encoder_hidden)
        self.decoder_hidden = tuple(int(h) for h in self.decoder_hidden)


@dataclass
class PhaseLog:
    phase: int
    steps: dict = field(default_factory=lambda: {k: [] for k in STEP_COLUMNS})
    summary: dict = field(default_factory=dict)

    def record(self, **row) -> None:
        for k in STEP_COLUMNS:
            self.steps[k].append(row[k])

    def column(self, name) -> np.ndarray:
        return np.asarray(self.steps[name])

    def __len__(self):
        return len(self.steps["step"])


@dataclass
class DsaaRun:
    encoder: Encoder
    decoder: SrDecoder
    bank: OptionBank
    graph: AbstractGraph
    agent: AbstractAgent
    history: list[PhaseLog]
    episode_returns: list[float]
    episode_end_steps: list[int]
    total_steps: int
    first_success_step: int | None
    stopped_by: str

    def cells(self) -> np.ndarray:
        return np.concatenate([p.column("cell") for p in self.history]) if self.history else np.array([])


def stopping_criterion(cfg: RunConfig, phases_done: int, episode_returns: list[float], total_steps: int) -> bool:
    if cfg.mode == "unsupervised":
        return phases_done >= cfg.outer_iters
    if total_steps >= cfg.max_total_steps:
        return True
    return converged(cfg, episode_returns)


def converged(cfg: RunConfig, episode_returns: list[float]) -> bool:
    if len(episode_returns) < cfg.window:
        return False
    return float(np.mean(episode_returns[-cfg.window:])) >= cfg.return_threshold * cfg.max_return


class EpisodeManager:
    """Tracks episode length and resets the environment at the cap or on termination."""

    def __init__(self, env, cap: int):
        self.env = env
        self.cap = cap
        self.t = 0
        self.episode = 0
        self.ret = 0.0

    def reset(self):
        self.t = 0
        self.ret = 0.0
        return self.env.reset()

    def step(self, a):
        """Returns (result, terminal, episode_over)."""
        res = self.env.step(a)
        self.t += 1
        self.ret += res.reward
        terminal = bool(res.done and not res.truncated)
        return res, terminal, terminal or res.done or self.t >= self.cap

    def next_episode(self):
        self.episode += 1
        return self.reset()


def _spawn(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def build_models(cfg: RunConfig, obs_dim: int, n_actions: int):
    (r_enc, r_dec, r_bank, r_gumbel, r_replay, r_goal, r_act) = _spawn(cfg.seed, 7)
    ab = cfg.abstraction
    enc = Encoder(obs_dim, cfg.n_abstract, r_enc, hidden=cfg.encoder_hidden,
                  gumbel=GumbelConfig(tau=ab.tau, mode=ab.mode, rng=r_gumbel), lr=ab.lr)
    dec = SrDecoder(cfg.n_abstract, r_dec, hidden=cfg.decoder_hidden, lr=ab.lr)
    bank = OptionBank(obs_dim, cfg.n_abstract, n_actions, cfg.options, r_bank)
    buf = ReplayBuffer(cfg.buffer_capacity, r_replay)
    return enc, dec, bank, buf, r_goal, r_act


def _sample(p: np.ndarray, rng: np.random.Generator) -> int:
    i = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return min(i, len(p) - 1)


def run_dsaa(cfg: RunConfig, env, out_dir=None, progress=None) -> DsaaRun:
    """Alternate exploration phases and abstraction updates until the
    stopping rule fires. ``progress(phase_log, encoder)`` is called after
    every phase."""
    online = cfg.mode == "online"
    enc, dec, bank, buf, r_goal, r_act = build_models(cfg, env.obs_dim, env.n_actions)
    graph = AbstractGraph(cfg.n_abstract)
    agent = AbstractAgent(cfg.n_abstract, cfg.agent)
    opt_cfg = cfg.options
    batch_size = opt_cfg.batch_size

    writer = _RunWriter(out_dir, cfg.log_steps) if out_dir is not None else None

    # the encoder is frozen within a phase, so hard codes can be memoised
    codes: dict = {}

    def encode(obs) -> int:
        key = obs.tobytes()
        s = codes.get(key)
        if s is None:
            s = enc.encode_hard(obs)
            if len(codes) < ENCODE_CACHE:
                codes[key] = s
        return s

    def choose(s):
        return agent.choose(graph, s, r_goal) if online else choose_goal_walk(graph, s, r_goal)

    episodes = EpisodeManager(env, cfg.episode_cap)
    x = episodes.reset()
    history: list[PhaseLog] = []
    returns: list[float] = []
    end_steps: list[int] = []
    seen_cells: set = set()
    total = 0
    first_success = None
    stopped_by = ""
    phase = 0

    while True:
        graph.reset()
        buf.clear()
        agent.set_phase(phase)
        plog = PhaseLog(phase)
        codes.clear()
        s = encode(x)
        s_goal = choose(s)
        bank.ensure_head(s_goal)
        seg_reward = 0.0
        q_losses = []
        phase_cells: set = set()
        n_returns_before = len(returns)
        done_run = False

        for _ in range(cfg.e_iters):
            p = option_policy(bank, x, s, s_goal, online)
            a = _sample(p, r_act)
            res, terminal, over = episodes.step(a)
            x2 = res.obs
            s2 = encode(x2)
            r_opt = option_reward(s2, s_goal, s, res.reward, online, opt_cfg.reward_scale)
            buf.push(Transition(x, a, x2, r_opt, over, s, s_goal, s2, option_terminal(s, s_goal, s2, terminal)))
            graph.add_edge(s, s2)
            if len(buf) >= batch_size:
                for _ in range(cfg.updates_per_step):
                    q_losses.append(bank.update(buf.sample(batch_size)))
            cell = env.discrete_state()
            cell = -1 if cell is None else cell
            plog.record(step=total, phase=phase, episode=episodes.episode, s=s, s_goal=s_goal,
                        env_reward=res.reward, option_reward=r_opt, cell=cell)
            if cell >= 0:
                phase_cells.add(cell)
            total += 1
            if res.reward > 0 and first_success is None:
                first_success = total
            seg_reward += res.reward
            if online and (s2 != s or over):
                agent.update(graph, s, s_goal, seg_reward, s2, terminal)
                seg_reward = 0.0

            if over:
                returns.append(episodes.ret)
                end_steps.append(total)
                x = episodes.next_episode()
                s = encode(x)
                s_goal = choose(s)
                bank.ensure_head(s_goal)
                if online and stopping_criterion(cfg, phase, returns, total):
                    stopped_by = "converged" if converged(cfg, returns) else "step_cap"
                    done_run = True
                    break
            else:
                if s2 != s:
                    s_goal = choose(s2)
                    bank.ensure_head(s_goal)
                x, s = x2, s2
            if online and total >= cfg.max_total_steps:
                stopped_by = "step_cap"
                done_run = True
                break

        ab_hist = []
        if not done_run and len(buf):
            ab_hist = abstraction_update(enc, dec, buf, cfg.abstraction)
        if cfg.reset_options and not done_run:
            bank.reset_parameters(r_goal)

        seen_cells |= phase_cells
        phase_returns = returns[n_returns_before:]
        last = ab_hist[-1] if ab_hist else {"loss": float("nan"), "l_h": float("nan"), "l_sr": float("nan")}
        plog.summary = {
            "phase": phase, "steps": len(plog), "episodes": len(phase_returns),
            "edges": graph.n_edges(), "phase_unique_cells": len(phase_cells),
            "total_unique_cells": len(seen_cells),
            "option_loss": float(np.mean(q_losses)) if q_losses else float("nan"),
            "abstraction_loss": last["loss"], "l_h": last["l_h"], "l_sr": last["l_sr"],
            "mean_return": float(np.mean(phase_returns)) if phase_returns else float("nan"),
            "epsilon": agent.epsilon if online else float("nan"),
        }
        history.append(plog)
        if writer:
            writer.phase(plog, enc, dec, bank, graph, cfg)
        if progress:
            progress(plog, enc)
        log.info("phase %d: %s", phase, plog.summary)
        phase += 1
        if done_run:
            break
        if stopping_criterion(cfg, phase, returns, total):
            stopped_by = stopped_by or ("outer_iters" if not online else
                                        ("converged" if converged(cfg, returns) else "step_cap"))
            break

    return DsaaRun(enc, dec, bank, graph, agent, history, returns, end_steps, total,
                   first_success, stopped_by)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(int(v)) if isinstance(v, (bool, np.bool_, np.integer)) else str(v)


class _RunWriter:
    """Streams per-step and per-phase CSVs and phase-boundary checkpoints."""

    def __init__(self, out_dir, log_steps: bool):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.log_steps = log_steps
        if log_steps:
            with open(self.out / "steps.csv", "w", newline="") as fh:
                csv.writer(fh).writerow(STEP_COLUMNS)
        with open(self.out / "phases.csv", "w", newline="") as fh:
            csv.writer(fh).writerow(PHASE_COLUMNS)

    def phase(self, plog: PhaseLog, enc, dec, bank, graph, cfg) -> None:
        if self.log_steps:
            with open(self.out / "steps.csv", "a", newline="") as fh:
                w = csv.writer(fh)
                cols = [plog.steps[k] for k in STEP_COLUMNS]
                for row in zip(*cols):
                    w.writerow([_fmt(v) for v in row])
        with open(self.out / "phases.csv", "a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(plog.summary[k]) for k in PHASE_COLUMNS])
        ck = self.out / "checkpoints"
        ck.mkdir(exist_ok=True)
        save_abstraction(ck / f"abstraction_{plog.phase:03d}.json", enc, dec, cfg.abstraction)
        bank.save(ck / f"options_{plog.phase:03d}.json")
        (self.out / f"graph_{plog.phase:03d}.json").write_text(graph.to_json())
        (self.out / f"graph_{plog.phase:03d}.dot").write_text(graph.to_dot())
