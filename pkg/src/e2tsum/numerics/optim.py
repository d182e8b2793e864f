"""Adadelta, the max-norm weight constraint, dropout and parameter init."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, mul


@dataclass
class AdadeltaState:
    rho: float = 0.95
    epsilon: float = 1e-6
    sq_grad: dict = field(default_factory=dict)
    sq_delta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def adadelta_step(params, grads, state):
    """Apply one Adadelta update in place.

    ``params`` maps names to float arrays (or leaf Nodes), ``grads`` maps the
    same names to gradients; names without a gradient are left alone.
    Returns the dict of applied deltas.
    """
    rho, eps = state.rho, state.epsilon
    deltas = {}
    for name, g in grads.items():
        p = params[name]
        value = p.value if isinstance(p, Node) else p
        g = np.asarray(g, dtype=np.float64)
        if g.shape != value.shape:
            raise ValueError(f"shape mismatch for {name}: param {value.shape}, grad {g.shape}")
        eg = state.sq_grad.get(name)
        if eg is None:
            eg = state.sq_grad[name] = np.zeros_like(value)
            state.sq_delta[name] = np.zeros_like(value)
        ed = state.sq_delta[name]
        eg *= rho
        eg += (1.0 - rho) * g * g
        delta = -np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
        ed *= rho
        ed += (1.0 - rho) * delta * delta
        value += delta
        deltas[name] = delta
    return deltas


def maxnorm_constraint(param, limit=3.0):
    """Rescale rows whose Euclidean norm exceeds ``limit``; 1-D arrays are
    treated as a single row.  Works in place and returns ``param``."""
    if limit <= 0:
        raise ValueError("limit must be positive")
    value = param.value if isinstance(param, Node) else param
    rows = value.reshape(1, -1) if value.ndim == 1 else value.reshape(value.shape[0], -1)
    norms = np.sqrt((rows * rows).sum(axis=1))
    over = norms > limit
    if over.any():
        rows[over] *= (limit / norms[over])[:, None]
    return param


def dropout(t, rate, train, rng):
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return t
    keep = rng.random(t.shape) >= rate
    return mul(t, keep / (1.0 - rate))


def glorot_uniform(shape, rng):
    fan_out, fan_in = shape[0], int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)
