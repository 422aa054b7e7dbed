"""Small differentiable core on top of numpy.

Every layer comes as a ``*_forward`` / ``*_backward`` pair with hand-derived
gradients. Tensors are plain ``float64`` numpy arrays; parameters and their
optimizer state live in a :class:`ParamStore`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Tuple

import numpy as np

DTYPE = np.float64


class NonFiniteError(FloatingPointError):
    """A forward or backward pass produced NaN or Inf."""


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values in {what}")
    return x


# ---------------------------------------------------------------- affine

def affine_forward(x, weights, bias):
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ValueError(f"affine: cannot multiply {x.shape} by {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ValueError(f"affine: bias shape {bias.shape} != ({weights.shape[1]},)")
    return x @ weights + bias


def affine_backward(dout, x, weights):
    """Return ``(dx, dweights, dbias)`` for ``out = x @ weights + bias``."""
    return dout @ weights.T, x.T @ dout, dout.sum(axis=0)


# ----------------------------------------------------------- activations

def sigmoid(x):
    x = np.asarray(x, dtype=DTYPE)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dout, out):
    return dout * out * (1.0 - out)


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def tanh_backward(dout, out):
    return dout * (1.0 - out * out)


def leaky_relu(x, slope=0.2):
    # valid for 0 <= slope <= 1
    return np.maximum(x, slope * x)


def leaky_relu_backward(dout, x, slope=0.2):
    return np.where(x > 0, dout, slope * dout)


def logsumexp(x, axis=-1, keepdims=False):
    x = np.asarray(x, dtype=DTYPE)
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def softmax(x):
    x = np.asarray(x, dtype=DTYPE)
    e = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(x):
    return x - logsumexp(x, axis=-1, keepdims=True)


def softmax_backward(dout, out):
    return out * (dout - np.sum(dout * out, axis=-1, keepdims=True))


def log_sigmoid(x):
    """``log(sigmoid(x))`` without overflow."""
    x = np.asarray(x, dtype=DTYPE)
    return -np.logaddexp(0.0, -x)


# ------------------------------------------------------ weight normalization

def weight_norm_apply(v, g):
    """Column-wise reparameterization ``W[:, j] = g[j] * v[:, j] / ||v[:, j]||``."""
    norms = np.linalg.norm(v, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("weight_norm_apply: zero-norm column in v")
    return v * (g / norms)


def weight_norm_backward(dweights, v, g):
    """Map a gradient w.r.t. the effective weights back to ``(dv, dg)``."""
    norms = np.linalg.norm(v, axis=0)
    unit = v / norms
    dg = np.sum(dweights * unit, axis=0)
    dv = (g / norms) * (dweights - unit * dg)
    return dv, dg


# ---------------------------------------------------------------- dropout

def dropout_apply(x, rate, training, rng):
    """Inverted dropout. Returns ``(out, mask)``; ``mask`` is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# ------------------------------------------------------------- parameters

@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


class ParamStore:
    """Named parameters with matching gradient buffers and Adam moments."""

    def __init__(self, params: Mapping[str, np.ndarray] | None = None):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step = 0
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name, value):
        value = np.array(value, dtype=DTYPE)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def accumulate(self, grads: Mapping[str, np.ndarray]):
        for name, g in grads.items():
            if name not in self.grads:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            if g.shape != self.params[name].shape:
                raise ValueError(
                    f"gradient shape {g.shape} != parameter shape "
                    f"{self.params[name].shape} for {name!r}")
            self.grads[name] += g

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def state_dict(self):
        return {name: p.copy() for name, p in self.params.items()}

    def load_state_dict(self, state):
        for name, value in state.items():
            self.params[name][...] = np.asarray(value, dtype=DTYPE)


def adam_step(store: ParamStore, cfg: AdamConfig, names=None):
    """One bias-corrected Adam update over ``names`` (default: all), then zero grads."""
    names = store.names() if names is None else list(names)
    for name in names:
        if name not in store.grads or store.grads[name] is None:
            raise KeyError(f"no gradient for parameter {name!r}")
    store.step += 1
    t = store.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for name in names:
        g = check_finite(store.grads[name], f"gradient of {name}")
        m = store.m[name]
        v = store.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        if np.any(m):
            store.params[name] -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
        g.fill(0.0)
    return store


# ----------------------------------------------------------- verification

def grad_check(f: Callable[[Dict[str, np.ndarray]], Tuple[float, Dict[str, np.ndarray]]],
               params: Mapping[str, np.ndarray], epsilon: float = 1e-5,
               floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f(params)`` must return ``(loss, grads)`` with ``grads`` keyed like
    ``params``. The relative error of one coordinate is
    ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps coordinates whose true
    gradient is zero from dividing by rounding noise.
    """
    params = {k: np.array(v, dtype=DTYPE) for k, v in params.items()}
    loss, grads = f(params)
    if not np.isfinite(loss):
        raise NonFiniteError("grad_check: loss is not finite")
    worst = 0.0
    for name, p in params.items():
        analytic = np.asarray(grads[name], dtype=DTYPE)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = f(params)[0]
            flat[i] = orig - epsilon
            down = f(params)[0]
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NonFiniteError(f"grad_check: non-finite loss perturbing {name}[{i}]")
            numeric = (up - down) / (2.0 * epsilon)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
