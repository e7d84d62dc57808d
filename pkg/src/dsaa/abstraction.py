"""State abstraction: an encoder onto the N-simplex and a successor-
representation decoder, trained together on replayed transitions."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .nn import (
    Adam,
    GumbelConfig,
    Mlp,
    NumericError,
    gumbel_softmax,
    gumbel_softmax_backward,
    kl_to_uniform,
    kl_to_uniform_grad,
    load_checkpoint,
    save_checkpoint,
    sr_td_loss,
)
from .replay import ReplayBuffer


@dataclass
class AbstractionLossConfig:
    gamma: float = 0.95
    beta_entropy: float = 1.0
    beta_sr: float = 1.0
    tau: float = 0.5
    mode: str = "gumbel_soft"
    entropy_scope: str = "batch_marginal"  # or "per_sample"
    lr: float = 1e-3
    batch_size: int = 512
    sgd_steps: int = 2000

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.beta_entropy < 0 or self.beta_sr < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.entropy_scope not in ("batch_marginal", "per_sample"):
            raise ValueError(f"unknown entropy scope {self.entropy_scope!r}")


class Encoder:
    """Observation -> logits over N abstract states."""

    def __init__(self, obs_dim: int, n_abstract: int, rng: np.random.Generator,
                 hidden=(128, 256), gumbel: GumbelConfig | None = None, lr: float = 1e-3):
        self.n = n_abstract
        self.net = Mlp.build([obs_dim, *hidden, n_abstract], rng)
        self.gumbel = gumbel if gumbel is not None else GumbelConfig(rng=rng)
        self.opt = Adam(self.net, lr=lr)

    @property
    def obs_dim(self) -> int:
        return self.net.input_dim

    def logits(self, x) -> np.ndarray:
        return self.net.forward(x)

    def encode_soft(self, x) -> np.ndarray:
        return gumbel_softmax(self.net.forward(x), self.gumbel)

    def encode_hard(self, x):
        """Arg-max abstract state; ties go to the lowest index. No noise."""
        logits = self.net.forward(x)
        if logits.ndim == 1:
            return int(np.argmax(logits))
        return np.argmax(logits, axis=1)

    __call__ = encode_hard


class SrDecoder:
    """Simplex point -> successor representation estimate in R^N."""

    def __init__(self, n_abstract: int, rng: np.random.Generator, hidden=(64, 128), lr: float = 1e-3):
        self.n = n_abstract
        self.net = Mlp.build([n_abstract, *hidden, n_abstract], rng, zero_last=True)
        self.opt = Adam(self.net, lr=lr)

    def __call__(self, p) -> np.ndarray:
        return self.net.forward(p)


def abstraction_loss_and_grads(enc: Encoder, dec: SrDecoder, x, x_next, cfg: AbstractionLossConfig,
                               noise=None):
    """One evaluation of beta_H * L_H + beta_SR * L_SR with gradients.

    Returns ``(total, l_h, l_sr, enc_grads, dec_grads)``. The SR target is
    computed from the ``x_next`` half and held constant.
    """
    b = len(x)
    X = np.vstack([x, x_next])
    logits = enc.net.forward(X)
    P = gumbel_softmax(logits, enc.gumbel, noise=noise)
    p, p_next = P[:b], P[b:]
    Psi = dec.net.forward(P)
    l_sr, g_psi = sr_td_loss(Psi[:b], p, Psi[b:], cfg.gamma)

    if cfg.entropy_scope == "batch_marginal":
        pbar = p.mean(axis=0)
        l_h = float(kl_to_uniform(pbar / pbar.sum()))
        g_p_h = np.broadcast_to(kl_to_uniform_grad(pbar) / b, p.shape)
    else:
        l_h = float(np.mean(kl_to_uniform(p)))
        g_p_h = kl_to_uniform_grad(p) / b

    g_Psi = np.zeros_like(Psi)
    g_Psi[:b] = cfg.beta_sr * g_psi
    dec_grads, g_P = dec.net.backward(g_Psi)
    g_P[:b] += cfg.beta_entropy * g_p_h
    g_P[b:] = 0.0  # target side carries no gradient
    g_logits = gumbel_softmax_backward(P, g_P, enc.gumbel)
    enc_grads, _ = enc.net.backward(g_logits)
    total = cfg.beta_entropy * l_h + cfg.beta_sr * l_sr
    return total, l_h, l_sr, enc_grads, dec_grads


def abstraction_update(enc: Encoder, dec: SrDecoder, buf: ReplayBuffer, cfg: AbstractionLossConfig,
                       n_sgd_steps: int | None = None, batch_size: int | None = None) -> list[dict]:
    """Run SGD on the abstraction loss over batches drawn from ``buf``."""
    if len(buf) == 0:
        raise ValueError("abstraction update needs a nonempty replay buffer")
    n_sgd_steps = cfg.sgd_steps if n_sgd_steps is None else n_sgd_steps
    batch_size = cfg.batch_size if batch_size is None else batch_size
    history = []
    for step in range(n_sgd_steps):
        batch = buf.sample(batch_size)
        total, l_h, l_sr, enc_grads, dec_grads = abstraction_loss_and_grads(
            enc, dec, batch.x, batch.x_next, cfg
        )
        if not np.isfinite(total):
            raise NumericError(f"abstraction loss not finite at sgd step {step}: L_H={l_h} L_SR={l_sr}")
        enc.opt.step(enc_grads)
        dec.opt.step(dec_grads)
        history.append({"step": step, "loss": total, "l_h": l_h, "l_sr": l_sr})
    return history


def save_abstraction(path, enc: Encoder, dec: SrDecoder, cfg: AbstractionLossConfig) -> None:
    save_checkpoint(path, {"encoder": enc.net, "decoder": dec.net},
                    {"n_abstract": enc.n, "tau": enc.gumbel.tau, "mode": enc.gumbel.mode,
                     "config": vars(cfg)})


def load_abstraction(path, rng=None) -> tuple[Encoder, SrDecoder, AbstractionLossConfig]:
    nets, extra = load_checkpoint(path)
    rng = rng if rng is not None else np.random.default_rng(0)
    cfg = AbstractionLossConfig(**extra["config"])
    enc = Encoder.__new__(Encoder)
    enc.n = extra["n_abstract"]
    enc.net = nets["encoder"]
    enc.gumbel = GumbelConfig(tau=extra["tau"], mode=extra["mode"], rng=rng)
    enc.opt = Adam(enc.net, lr=cfg.lr)
    dec = SrDecoder.__new__(SrDecoder)
    dec.n = enc.n
    dec.net = nets["decoder"]
    dec.opt = Adam(dec.net, lr=cfg.lr)
    return enc, dec, cfg


def dump_abstraction_csv(path, enc: Encoder, probes, observations, field_names) -> None:
    """One row per probe: its descriptive fields followed by the abstract state."""
    states = enc.encode_hard(np.asarray(observations))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*field_names, "abstract_state"])
        for probe, s in zip(probes, np.atleast_1d(states)):
            w.writerow([*probe, int(s)])
