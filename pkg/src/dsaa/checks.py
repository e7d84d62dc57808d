"""Oracle suites: analytic gradients against central differences, TD-trained
tabular successor representations against the exact inverse, and soft-Q
updates against logsumexp value iteration."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .abstraction import AbstractionLossConfig, Encoder, SrDecoder, abstraction_loss_and_grads
from .eval import TabularMdp, oracle_sr, random_stochastic_matrix
from .options import OptionBank, OptionConfig
from .replay import Batch


def central_differences(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Numerical gradient of the scalar ``f()`` with respect to ``arr``,
    which is perturbed in place and restored."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def rel_error(a, b, floor: float = 1e-8) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<28} residual={self.residual:.3e}  tol={self.tolerance:.1e}  ({self.seconds:.1f}s)"


# --------------------------------------------------------------------------
# Gradient suite


def _random_net(rng, n_in=None, n_out=None, max_width=6) -> nn.Mlp:
    depth = int(rng.integers(1, 4))
    sizes = [n_in or int(rng.integers(1, max_width + 1))]
    sizes += [int(rng.integers(1, max_width + 1)) for _ in range(depth - 1)]
    sizes.append(n_out or int(rng.integers(1, max_width + 1)))
    net = nn.Mlp.build(sizes, rng)
    net.flat[:] = rng.normal(scale=0.7, size=net.flat.size)
    return net


def _grad_mlp(rng):
    net = _random_net(rng)
    x = rng.normal(size=(3, net.input_dim))
    c = rng.normal(size=(3, net.output_dim))
    f = lambda: float(np.sum(c * np.tanh(net.forward(x))))
    out = net.forward(x)
    grads, gx = net.backward(c * (1 - np.tanh(out) ** 2))
    return [(grads.flat, central_differences(f, net.flat)), (gx, central_differences(f, x))]


def _grad_kl(rng):
    """KL(batch-marginal || uniform) through Gumbel-Softmax and an MLP."""
    n = int(rng.integers(2, 6))
    net = _random_net(rng, n_out=n)
    cfg = nn.GumbelConfig(tau=float(rng.uniform(0.3, 2.0)))
    x = rng.normal(size=(4, net.input_dim))
    noise = nn.sample_gumbel((4, n), rng)

    def f():
        p = nn.gumbel_softmax(net.forward(x), cfg, noise=noise)
        return float(nn.kl_to_uniform(p.mean(axis=0)))

    p = nn.gumbel_softmax(net.forward(x), cfg, noise=noise)
    g_p = np.broadcast_to(nn.kl_to_uniform_grad(p.mean(axis=0)) / len(x), p.shape)
    grads, _ = net.backward(nn.gumbel_softmax_backward(p, g_p, cfg))
    return [(grads.flat, central_differences(f, net.flat))]


def _grad_sr_td(rng):
    """SR TD loss of a decoder; the bootstrap target is frozen in both the
    analytic and the numerical evaluation."""
    n = int(rng.integers(2, 6))
    net = _random_net(rng, n_in=n, n_out=n)
    phi = rng.dirichlet(np.ones(n), size=4)
    phi_next = rng.dirichlet(np.ones(n), size=4)
    gamma = float(rng.uniform(0.5, 0.99))
    psi_next = net.forward(phi_next).copy()
    f = lambda: nn.sr_td_loss(net.forward(phi), phi, psi_next, gamma)[0]
    _, g = nn.sr_td_loss(net.forward(phi), phi, psi_next, gamma)
    grads, _ = net.backward(g)
    return [(grads.flat, central_differences(f, net.flat))]


def _grad_soft_q(rng):
    """Soft-Q TD loss with the target network frozen."""
    obs_dim, n, n_actions, b = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 5)), 5
    hidden = tuple(int(h) for h in rng.integers(1, 6, size=rng.integers(0, 3)))
    bank = OptionBank(obs_dim, n, n_actions, OptionConfig(hidden=hidden, alpha=float(rng.uniform(0.5, 2))), rng)
    bank.net.flat[:] = rng.normal(scale=0.7, size=bank.net.flat.size)
    bank.target.flat[:] = rng.normal(scale=0.7, size=bank.target.flat.size)
    batch = Batch(
        x=rng.normal(size=(b, obs_dim)), a=rng.integers(0, n_actions, b), x_next=rng.normal(size=(b, obs_dim)),
        r=rng.normal(size=b), done=np.zeros(b, bool), s=rng.integers(0, n, b), s_goal=rng.integers(0, n, b),
        s_next=rng.integers(0, n, b), terminal=rng.random(b) < 0.3,
    )
    f = lambda: bank.loss_and_grads(batch)[0]
    _, grads = bank.loss_and_grads(batch)
    return [(grads.flat.copy(), central_differences(f, bank.net.flat))]


def _grad_abstraction(rng):
    """Full abstraction loss (entropy + SR) through encoder and decoder."""
    n = int(rng.integers(2, 5))
    obs_dim = int(rng.integers(1, 4))
    scope = "batch_marginal" if rng.random() < 0.5 else "per_sample"
    cfg = AbstractionLossConfig(tau=float(rng.uniform(0.3, 2.0)), entropy_scope=scope)
    enc = Encoder(obs_dim, n, rng, hidden=(4,), gumbel=nn.GumbelConfig(tau=cfg.tau))
    dec = SrDecoder(n, rng, hidden=(4,))
    dec.net.flat[:] = rng.normal(scale=0.5, size=dec.net.flat.size)
    x, x_next = rng.normal(size=(3, obs_dim)), rng.normal(size=(3, obs_dim))
    noise = nn.sample_gumbel((6, n), rng)
    # the SR target is built from the x_next half and must stay frozen
    P_next = nn.gumbel_softmax(enc.net.forward(x_next), enc.gumbel, noise=noise[3:])
    psi_next = dec.net.forward(P_next).copy()
    p_target = nn.gumbel_softmax(enc.net.forward(x), enc.gumbel, noise=noise[:3]).copy()

    def f():
        p = nn.gumbel_softmax(enc.net.forward(x), enc.gumbel, noise=noise[:3])
        l_sr = nn.sr_td_loss(dec.net.forward(p), p_target, psi_next, cfg.gamma)[0]
        if scope == "batch_marginal":
            l_h = float(nn.kl_to_uniform(p.mean(axis=0)))
        else:
            l_h = float(np.mean(nn.kl_to_uniform(p)))
        return cfg.beta_entropy * l_h + cfg.beta_sr * l_sr

    _, _, _, eg, dg = abstraction_loss_and_grads(enc, dec, x, x_next, cfg, noise=noise)
    return [(eg.flat.copy(), central_differences(f, enc.net.flat)),
            (dg.flat.copy(), central_differences(f, dec.net.flat))]


GRADIENT_OPS = {
    "mlp_backward": _grad_mlp,
    "kl_to_uniform": _grad_kl,
    "sr_td_loss": _grad_sr_td,
    "soft_q_td": _grad_soft_q,
    "abstraction_loss": _grad_abstraction,
}


def gradient_suite(n_nets: int = 50, seed: int = 0, tol: float = 1e-4, ops=None) -> list[CheckResult]:
    """One result per op: worst relative error over ``n_nets`` random draws."""
    results = []
    for name in ops or GRADIENT_OPS:
        fn = GRADIENT_OPS[name]
        t0 = time.perf_counter()
        rng = np.random.default_rng([seed, len(name)])
        worst, failures = 0.0, 0
        for _ in range(n_nets):
            for analytic, numeric in fn(rng):
                err = rel_error(analytic, numeric)
                worst = max(worst, err)
                failures += err >= tol
        results.append(CheckResult(name, failures == 0, worst, tol, time.perf_counter() - t0,
                                   {"draws": n_nets, "failures": failures}))
    return results


# --------------------------------------------------------------------------
# Tabular SR: TD against the exact inverse


def train_tabular_sr(P: np.ndarray, gamma: float, rng: np.random.Generator, n_updates: int = 200_000,
                     samples_per_state: int = 8, lr0: float = 0.5, decay: float = 2e-3) -> tuple[np.ndarray, int]:
    """TD(0) on the SR with a one-hot identity encoder and a single linear
    layer as psi.

    Each update is one SGD step on a minibatch holding every state
    ``samples_per_state`` times, each copy with its own sampled successor.
    Returns the Polyak average of the table over the second half of
    training, and the number of updates taken.
    """
    n = P.shape[0]
    eye = np.eye(n)
    rows = np.repeat(np.arange(n), samples_per_state)
    X = eye[rows]
    net = nn.Mlp([nn.Layer(np.zeros((n, n)), np.zeros(n), "linear")])
    cdf = np.cumsum(P, axis=1)[rows]
    avg = np.zeros((n, n))
    burn = n_updates // 2
    for t in range(n_updates):
        u = rng.random(len(rows))[:, None]
        nxt = np.minimum((u > cdf).sum(axis=1), n - 1)
        psi_next = net.forward(eye[nxt]).copy()
        _, g = nn.sr_td_loss(net.forward(X), X, psi_next, gamma)
        grads, _ = net.backward(g)
        # sr_td_loss averages over rows; rescale so each state moves by lr
        net.flat -= lr0 / (1.0 + decay * t) * n / 2 * grads.flat
        if t >= burn:
            avg += (net.forward(eye) - avg) / (t - burn + 1)
    return avg, n_updates


def sr_oracle_check(n_mdps: int = 5, n_states: int = 10, gamma: float = 0.95, seed: int = 0,
                    tol: float = 0.05, n_updates: int = 20_000) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(n_mdps):
        P = random_stochastic_matrix(n_states, rng)
        exact = oracle_sr(TabularMdp(P, gamma))
        est, _ = train_tabular_sr(P, gamma, rng, n_updates)
        errs.append(float(np.abs(est - exact).max()))
    worst = max(errs)
    return CheckResult("sr_oracle", worst < tol, worst, tol, time.perf_counter() - t0, {"linf": errs})


# --------------------------------------------------------------------------
# Soft-Q fixed point on a deterministic chain


def chain_mdp():
    """Three states in a line, actions left/right (clamped), reward 1 for
    arriving at the right end. Returns (next_state[s, a], reward[s, a])."""
    nxt = np.array([[0, 1], [0, 2], [1, 2]])
    rew = (nxt == 2).astype(np.float64)
    return nxt, rew


def soft_value_iteration(nxt, rew, gamma: float, alpha: float, tol: float = 1e-12) -> np.ndarray:
    q = np.zeros(rew.shape)
    while True:
        v = alpha * nn.logsumexp(q / alpha, axis=1)
        q_new = rew + gamma * v[nxt]
        if np.abs(q_new - q).max() < tol:
            return q_new
        q = q_new


def soft_q_fixed_point_check(seed: int = 0, tol: float = 1e-3, gamma: float = 0.95, alpha: float = 1.0,
                             n_updates: int = 30_000) -> CheckResult:
    """Full-batch soft_q_update on every (state, action) pair of the chain,
    with a tabular head (no hidden layers, one-hot observation)."""
    t0 = time.perf_counter()
    nxt, rew = chain_mdp()
    n_s, n_a = rew.shape
    exact = soft_value_iteration(nxt, rew, gamma, alpha)
    cfg = OptionConfig(hidden=(), alpha=alpha, gamma=gamma, lr=0.05, target_delay=5)
    bank = OptionBank(n_s, 1, n_a, cfg, np.random.default_rng(seed))
    s_idx, a_idx = np.divmod(np.arange(n_s * n_a), n_a)
    eye = np.eye(n_s)
    zeros = np.zeros(len(s_idx), dtype=np.int64)
    batch = Batch(x=eye[s_idx], a=a_idx, x_next=eye[nxt[s_idx, a_idx]], r=rew[s_idx, a_idx],
                  done=np.zeros(len(s_idx), bool), s=zeros, s_goal=zeros, s_next=zeros,
                  terminal=np.zeros(len(s_idx), bool))
    for t in range(n_updates):
        # anneal the step so Adam settles onto the fixed point
        bank.opt.lr = cfg.lr * min(1.0, 4.0 * (n_updates - t) / n_updates)
        bank.update(batch)
    q = bank.q_values(eye, zeros[:n_s], zeros[:n_s])
    err = float(np.abs(q - exact).max())
    return CheckResult("soft_q_fixed_point", err < tol, err, tol, time.perf_counter() - t0,
                       {"q": q.tolist(), "exact": exact.tolist()})


def run_all(seed: int = 0) -> list[CheckResult]:
    return [*gradient_suite(seed=seed), sr_oracle_check(seed=seed), soft_q_fixed_point_check(seed=seed)]
