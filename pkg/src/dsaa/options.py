"""Option policies as one soft-Q network: a shared trunk fed with the
observation and the current abstract state, and one linear head per goal
abstract state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Adam, Mlp, NumericError, load_checkpoint, logsumexp, save_checkpoint, softmax
from .replay import Batch


@dataclass
class OptionConfig:
    hidden: tuple = (64, 128, 256, 512)
    alpha: float = 1.0
    gamma: float = 0.95
    lr: float = 1e-3
    batch_size: int = 512
    target_delay: int = 20
    reward_scale: float = 200.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.alpha <= 0:
            raise ValueError("soft-Q temperature must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")


class OptionBank:
    def __init__(self, obs_dim: int, n_abstract: int, n_actions: int, cfg: OptionConfig,
                 rng: np.random.Generator):
        self.obs_dim = obs_dim
        self.n = n_abstract
        self.n_actions = n_actions
        self.cfg = cfg
        sizes = [obs_dim + n_abstract, *cfg.hidden, n_abstract * n_actions]
        # heads start at zero so every untrained option is uniform
        self.net = Mlp.build(sizes, rng, zero_last=True)
        self.target = self.net.copy()
        self.opt = Adam(self.net, lr=cfg.lr)
        self.updates = 0
        self.live = np.zeros(n_abstract, dtype=bool)
        self._eye = np.eye(n_abstract)

    def inputs(self, x, s) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None]
        out = np.empty((len(x), self.obs_dim + self.n))
        out[:, :self.obs_dim] = x
        out[:, self.obs_dim:] = self._eye[s]
        return out

    def q_values(self, x, s, s_goal, net: Mlp | None = None) -> np.ndarray:
        """Q(x, ., option s -> s_goal); shape (B, |A|) or (|A|,) for one state."""
        single = np.ndim(x) == 1
        out = (net or self.net).forward(self.inputs(x, s))
        q = out.reshape(len(out), self.n, self.n_actions)[np.arange(len(out)), np.atleast_1d(s_goal)]
        return q[0] if single else q

    def action_probs(self, x, s, s_goal) -> np.ndarray:
        return softmax(self.q_values(x, s, s_goal) / self.cfg.alpha)

    def act(self, x, s: int, s_goal: int, rng: np.random.Generator) -> int:
        """Sample from the Boltzmann policy softmax(Q / alpha)."""
        p = self.action_probs(x, s, s_goal)
        return int(rng.choice(self.n_actions, p=p))

    def ensure_head(self, s_goal: int) -> None:
        if not 0 <= s_goal < self.n:
            raise IndexError(f"goal {s_goal} out of range")
        self.live[s_goal] = True

    def soft_target(self, batch: Batch) -> np.ndarray:
        cfg = self.cfg
        q_next = self.q_values(batch.x_next, batch.s_next, batch.s_goal, net=self.target)
        v_next = cfg.alpha * logsumexp(q_next / cfg.alpha, axis=1)
        y = batch.r + cfg.gamma * v_next * (~batch.terminal.astype(bool))
        if not np.isfinite(y).all():
            raise NumericError("non-finite soft-Q target")
        return y

    def loss_and_grads(self, batch: Batch):
        """Squared TD error routed to each item's goal head, and its gradients."""
        y = self.soft_target(batch)
        b = len(batch)
        out = self.net.forward(self.inputs(batch.x, batch.s))
        q = out.reshape(b, self.n, self.n_actions)
        rows = np.arange(b)
        q_sa = q[rows, batch.s_goal, batch.a]
        err = q_sa - y
        loss = float(np.mean(err * err))
        g = np.zeros_like(q)
        g[rows, batch.s_goal, batch.a] = 2.0 * err / b
        grads, _ = self.net.backward(g.reshape(b, -1))
        return loss, grads

    def sync_target(self) -> None:
        self.target.load_from(self.net)

    def update(self, batch: Batch) -> float:
        loss, grads = self.loss_and_grads(batch)
        self.opt.step(grads)
        self.updates += 1
        if self.updates % self.cfg.target_delay == 0:
            self.sync_target()
        return loss

    def reset_parameters(self, rng: np.random.Generator) -> None:
        fresh = OptionBank(self.obs_dim, self.n, self.n_actions, self.cfg, rng)
        self.net, self.target, self.opt = fresh.net, fresh.target, fresh.opt
        self.updates = 0

    def save(self, path) -> None:
        save_checkpoint(path, {"online": self.net, "target": self.target},
                        {"n_abstract": self.n, "n_actions": self.n_actions, "updates": self.updates})

    def load(self, path) -> None:
        nets, extra = load_checkpoint(path)
        self.net.load_from(nets["online"])
        self.target.load_from(nets["target"])
        self.updates = extra.get("updates", 0)


def soft_q_update(bank: OptionBank, batch: Batch) -> float:
    return bank.update(batch)


def option_reward(s_next: int, s_goal: int, s_cur: int, env_reward: float, online: bool,
                  scale: float = 200.0) -> float:
    """Scaled indicator of entering the goal abstract state.

    A self-loop option (goal = current state) is never paid for staying put;
    it earns only the environment reward, and only in online mode.
    """
    if s_cur == s_goal:
        return float(env_reward) if online else 0.0
    return scale if s_next == s_goal else 0.0


def option_terminal(s_cur: int, s_goal: int, s_next: int, env_terminal: bool) -> bool:
    """Bootstrap-terminal flag for an option transition.

    An option terminates when it leaves its source abstract state, whether
    into the goal or elsewhere, or when the episode ends; moves within the
    source state bootstrap. Self-loop transitions are always terminal: that
    option learns one-step values instead of being trapped by its own
    entropy bonus.
    """
    return bool(env_terminal or s_next != s_cur or s_cur == s_goal)


def option_policy(bank: OptionBank, x, s: int, s_goal: int, online: bool) -> np.ndarray:
    """Action distribution of the option from ``s`` towards ``s_goal``.

    Without environment reward a self-loop option earns 0 and terminates on
    every step, so its soft-Q fixed point is Q = 0: the uniform policy. That
    closed form is used directly. The network's goal head is shared with
    the options entering ``s`` and can carry stale values there.
    """
    if s == s_goal and not online:
        return np.full(bank.n_actions, 1.0 / bank.n_actions)
    return bank.action_probs(x, s, s_goal)
