"""Directed graph over abstract states and the tabular agent that picks
options on it."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class AbstractGraph:
    """Adjacency over [N]; self-loops are always present."""

    def __init__(self, n: int):
        self.n = n
        self.edges = np.eye(n, dtype=bool)
        self.visits = np.zeros((n, n), dtype=np.int64)

    def reset(self) -> None:
        self.edges[...] = False
        np.fill_diagonal(self.edges, True)
        self.visits[...] = 0

    def add_edge(self, s: int, s_next: int) -> bool:
        self.visits[s, s_next] += 1
        if self.edges[s, s_next]:
            return False
        self.edges[s, s_next] = True
        return True

    def neighbors(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.edges[s])

    def n_edges(self, include_self_loops: bool = False) -> int:
        total = int(self.edges.sum())
        return total if include_self_loops else total - self.n

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "adjacency": {str(s): self.neighbors(s).tolist() for s in range(self.n)},
            "visits": self.visits.tolist(),
        }, indent=1)

    def to_dot(self) -> str:
        lines = ["digraph abstract {"]
        lines += [f"  {s};" for s in range(self.n)]
        for s in range(self.n):
            for u in self.neighbors(s):
                lines.append(f'  {s} -> {u} [label="{self.visits[s, u]}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def choose_goal_walk(g: AbstractGraph, s: int, rng: np.random.Generator) -> int:
    """Lazy random walk step: uniform over out-neighbours, self included."""
    nbrs = g.neighbors(s)
    return int(nbrs[rng.integers(len(nbrs))])


@dataclass
class AbstractAgentConfig:
    lr: float = 0.1
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_phases: int = 10


class AbstractAgent:
    """Tabular Q over (abstract state, goal) with actions masked by the graph.

    The table outlives graph resets; only the mask changes.
    """

    def __init__(self, n: int, cfg: AbstractAgentConfig | None = None):
        self.n = n
        self.cfg = cfg or AbstractAgentConfig()
        self.q = np.zeros((n, n))
        self.epsilon = self.cfg.eps_start

    def set_phase(self, phase: int) -> None:
        c = self.cfg
        frac = min(1.0, phase / max(c.eps_anneal_phases, 1))
        self.epsilon = c.eps_start + frac * (c.eps_end - c.eps_start)

    def choose(self, g: AbstractGraph, s: int, rng: np.random.Generator) -> int:
        nbrs = g.neighbors(s)
        if rng.random() < self.epsilon:
            return int(nbrs[rng.integers(len(nbrs))])
        return int(nbrs[np.argmax(self.q[s, nbrs])])

    def update(self, g: AbstractGraph, s: int, s_goal: int, seg_reward: float, s_end: int,
               done: bool) -> None:
        bootstrap = 0.0 if done else self.cfg.gamma * self.q[s_end, g.neighbors(s_end)].max()
        self.q[s, s_goal] += self.cfg.lr * (seg_reward + bootstrap - self.q[s, s_goal])


def choose_goal_agent(agent: AbstractAgent, g: AbstractGraph, s: int, rng) -> int:
    return agent.choose(g, s, rng)


def abstract_agent_update(agent: AbstractAgent, g: AbstractGraph, s, s_goal, seg_reward, s_end, done):
    agent.update(g, s, s_goal, seg_reward, s_end, done)
