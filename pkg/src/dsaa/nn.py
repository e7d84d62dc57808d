"""Small dense networks with hand-written backprop, Adam, and the loss heads
used by the abstraction and option learners.

Everything here works on float64 numpy arrays with the batch along axis 0.
Networks are tiny, so a closed set of layer types keeps every gradient
checkable against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LEAKY_SLOPE = 0.01
ACTIVATIONS = ("leaky_relu", "linear")
GUMBEL_EPS = 1e-10
CHECKPOINT_FORMAT = "dsaa-mlp"
CHECKPOINT_VERSION = 1


class StructuralError(ValueError):
    """Shapes or dimensions do not line up."""


class NumericError(FloatingPointError):
    """A NaN or Inf appeared where only finite values are allowed."""


class UsageError(RuntimeError):
    """An operation was called in the wrong order."""


@dataclass
class Layer:
    weight: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)
    activation: str = "leaky_relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise StructuralError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise StructuralError(
                f"bad layer shapes weight={self.weight.shape} bias={self.bias.shape}"
            )


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "linear":
        return z
    return np.maximum(z, LEAKY_SLOPE * z)


def _activate_backward(z: np.ndarray, g: np.ndarray, kind: str) -> np.ndarray:
    if kind == "linear":
        return g
    return np.where(z > 0, g, LEAKY_SLOPE * g)


class ParamGrads(list):
    """Per-array gradients that are views into one flat vector ``flat``."""

    flat: np.ndarray


class Mlp:
    """Feed-forward stack of affine layers.

    ``forward`` caches the pre-activations of the most recent call so that
    ``backward`` can turn an output gradient into parameter gradients.
    """

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise StructuralError("an Mlp needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise StructuralError(
                    f"layer dims do not chain: {prev.weight.shape} -> {nxt.weight.shape}"
                )
        # pack all parameters into one contiguous vector; layers hold views
        self.flat = np.concatenate([a.ravel() for l in layers for a in (l.weight, l.bias)]).astype(np.float64)
        off = 0
        for l in layers:
            w_shape, nb = l.weight.shape, l.bias.size
            l.weight = self.flat[off: off + l.weight.size].reshape(w_shape)
            off += l.weight.size
            l.bias = self.flat[off: off + nb]
            off += nb
        self.layers = layers
        self._cache: list[tuple[np.ndarray, np.ndarray]] | None = None
        self._squeeze = False

    @classmethod
    def build(
        cls,
        sizes: list[int] | tuple[int, ...],
        rng: np.random.Generator,
        hidden_activation: str = "leaky_relu",
        output_activation: str = "linear",
        zero_last: bool = False,
    ) -> "Mlp":
        """Uniform(+-1/sqrt(fan_in)) init; ``zero_last`` zeroes the output layer."""
        if len(sizes) < 2 or any(int(s) <= 0 for s in sizes):
            raise StructuralError(f"bad layer sizes {sizes}")
        layers = []
        n = len(sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == n - 1
            bound = 1.0 / np.sqrt(fan_in)
            if last and zero_last:
                w = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            act = output_activation if last else hidden_activation
            layers.append(Layer(w, b, act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise StructuralError(f"expected input dim {self.input_dim}, got shape {x.shape}")
        cache = []
        h = x
        for layer in self.layers:
            z = h @ layer.weight + layer.bias
            cache.append((h, z))
            h = _activate(z, layer.activation)
        if not np.isfinite(h).all():
            raise NumericError("non-finite network output")
        self._cache = cache
        self._squeeze = squeeze
        return h[0] if squeeze else h

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of a scalar loss given dLoss/dOutput of the last forward.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
        :attr:`params`.
        """
        if self._cache is None:
            raise UsageError("backward called before forward")
        g = np.asarray(grad_out, dtype=np.float64)
        if self._squeeze and g.ndim == 1:
            g = g[None, :]
        last_z = self._cache[-1][1]
        if g.shape != last_z.shape:
            raise StructuralError(f"upstream grad shape {g.shape} != output shape {last_z.shape}")
        gflat = np.empty_like(self.flat)
        views = []
        off = self.flat.size
        for layer, (h, z) in zip(reversed(self.layers), reversed(self._cache)):
            g = _activate_backward(z, g, layer.activation)
            nb, nw = layer.bias.size, layer.weight.size
            gb = gflat[off - nb: off]
            np.sum(g, axis=0, out=gb)
            off -= nb
            gw = gflat[off - nw: off].reshape(layer.weight.shape)
            np.matmul(h.T, g, out=gw)
            off -= nw
            views.append(gb)
            views.append(gw)
            g = g @ layer.weight.T
        grads = ParamGrads(reversed(views))
        grads.flat = gflat
        return grads, (g[0] if self._squeeze else g)

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def load_from(self, other: "Mlp") -> None:
        if [p.shape for p in self.params] != [p.shape for p in other.params]:
            raise StructuralError("parameter shapes differ")
        self.flat[...] = other.flat

    def check_finite(self) -> None:
        for p in self.params:
            if not np.isfinite(p).all():
                raise NumericError("non-finite parameter")


class Adam:
    """Adam with bias correction, updating parameter arrays in place.

    Pass an :class:`Mlp` to optimise its flat parameter vector directly.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [params.flat] if isinstance(params, Mlp) else list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        if isinstance(grads, ParamGrads) and len(self.params) == 1 and len(grads) != 1:
            grads = [grads.flat]
        grads = list(grads)
        if len(grads) != len(self.params):
            raise StructuralError(f"{len(grads)} grads for {len(self.params)} params")
        for p, g in zip(self.params, grads):
            if p.shape != g.shape:
                raise StructuralError(f"grad shape {g.shape} != param shape {p.shape}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = v / c2
            np.sqrt(denom, out=denom)
            denom += self.eps
            step = m / c1
            step *= self.lr
            step /= denom
            p -= step

    def state_arrays(self) -> list[np.ndarray]:
        return self.m + self.v


def optimizer_step(params, grads, state: Adam) -> list[np.ndarray]:
    if len(params) != len(state.params) or any(p is not q for p, q in zip(params, state.params)):
        raise StructuralError("optimizer state was built for different parameters")
    state.step(grads)
    return params


# --------------------------------------------------------------------------
# Gumbel-Softmax


@dataclass
class GumbelConfig:
    tau: float = 0.5
    mode: str = "gumbel_soft"  # or "plain_softmax"
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    zero_noise: bool = False  # test hook: g == 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"temperature must be positive, got {self.tau}")
        if self.mode not in ("gumbel_soft", "plain_softmax"):
            raise ValueError(f"unknown mode {self.mode!r}")


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logsumexp(z: np.ndarray, axis: int = -1) -> np.ndarray:
    m = z.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.uniform(GUMBEL_EPS, 1.0 - GUMBEL_EPS, size=shape)
    return -np.log(-np.log(u))


def gumbel_softmax(
    logits: np.ndarray, cfg: GumbelConfig, noise: np.ndarray | None = None
) -> np.ndarray:
    """Relaxed categorical sample softmax((logits + g) / tau).

    In ``plain_softmax`` mode no noise is added and no temperature applied.
    ``noise`` overrides the drawn Gumbel noise.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise NumericError("non-finite logits")
    if cfg.mode == "plain_softmax":
        return softmax(logits)
    if noise is None:
        noise = np.zeros_like(logits) if cfg.zero_noise else sample_gumbel(logits.shape, cfg.rng)
    return softmax((logits + noise) / cfg.tau)


def gumbel_softmax_backward(y: np.ndarray, grad_y: np.ndarray, cfg: GumbelConfig) -> np.ndarray:
    """dLoss/dlogits given the sample ``y`` and dLoss/dy (soft path, noise held fixed)."""
    tau = 1.0 if cfg.mode == "plain_softmax" else cfg.tau
    inner = (grad_y * y).sum(axis=-1, keepdims=True)
    return y * (grad_y - inner) / tau


# --------------------------------------------------------------------------
# Loss heads


def _check_simplex(p: np.ndarray, tol: float = 1e-6) -> None:
    if (p < -tol).any() or (np.abs(p.sum(axis=-1) - 1.0) > tol).any():
        raise ValueError("input is not on the probability simplex")


def kl_to_uniform(p: np.ndarray) -> float:
    """KL(p || uniform) = log N - H(p), with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    _check_simplex(p)
    n = p.shape[-1]
    safe = np.where(p > 0, p, 1.0)
    neg_entropy = np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=-1)
    return np.maximum(np.log(n) + neg_entropy, 0.0)


def kl_to_uniform_grad(p: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    return np.log(np.maximum(p, floor)) + 1.0


def entropy(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    return -np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=-1)


def sr_td_loss(
    psi_x: np.ndarray, phi_x: np.ndarray, psi_x_next: np.ndarray, gamma: float
) -> tuple[float, np.ndarray]:
    """Squared TD error of the successor representation with a frozen target.

    Returns ``(loss, dloss/dpsi_x)``. The target ``phi_x + gamma * psi_x_next``
    is a constant, so no gradient reaches ``phi_x`` or ``psi_x_next`` through
    this head. Batched inputs average the per-row squared norms.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    psi_x = np.asarray(psi_x, dtype=np.float64)
    target = np.asarray(phi_x, dtype=np.float64) + gamma * np.asarray(psi_x_next, dtype=np.float64)
    if psi_x.shape != target.shape:
        raise StructuralError(f"shape mismatch {psi_x.shape} vs {target.shape}")
    diff = psi_x - target
    if diff.ndim == 1:
        return float(diff @ diff), 2.0 * diff
    b = diff.shape[0]
    return float(np.sum(diff * diff) / b), 2.0 * diff / b


# --------------------------------------------------------------------------
# Checkpoints


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "layers": [
            {
                "shape": list(l.weight.shape),
                "activation": l.activation,
                "weight": l.weight.ravel().tolist(),
                "bias": l.bias.tolist(),
            }
            for l in net.layers
        ]
    }


def mlp_from_dict(d: dict) -> Mlp:
    layers = []
    for spec in d["layers"]:
        shape = tuple(spec["shape"])
        w = np.array(spec["weight"], dtype=np.float64).reshape(shape)
        b = np.array(spec["bias"], dtype=np.float64)
        layers.append(Layer(w, b, spec["activation"]))
    return Mlp(layers)


def save_checkpoint(path, nets: dict[str, Mlp], extra: dict | None = None) -> None:
    """Write named networks as JSON. Python float repr round-trips exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "nets": {name: mlp_to_dict(net) for name, net in nets.items()},
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[dict[str, Mlp], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    nets = {name: mlp_from_dict(d) for name, d in doc["nets"].items()}
    return nets, doc.get("extra", {})
