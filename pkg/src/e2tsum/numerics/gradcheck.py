"""Central finite-difference checks for the autodiff graph."""
from __future__ import annotations

import numpy as np

from .autodiff import backward, mul, no_grad, parameter
from .autodiff import sum as sum_


def relative_error(analytic, numeric, floor=1e-6):
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_leaves(forward, leaves, step=1e-5, seed=0, floor=1e-6, scalar=False):
    """Max relative error per leaf between backprop and central differences.

    ``forward()`` rebuilds the output from the (mutable) ``leaves``.  Unless
    ``scalar`` is set, the differentiated quantity is ``sum(output * R)`` for
    a fixed random ``R``.
    """
    out = forward()
    proj = 1.0 if scalar else np.random.default_rng(seed).standard_normal(out.shape)
    for leaf in leaves.values():
        leaf.grad = None
    backward(sum_(mul(out, proj)))

    def f():
        with no_grad():
            return float((forward().value * proj).sum())

    errors = {}
    for name, leaf in leaves.items():
        flat = leaf.value.reshape(-1)
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f()
            flat[i] = orig - step
            down = f()
            flat[i] = orig
            numeric[i] = (up - down) / (2 * step)
        analytic = np.zeros(flat.size) if leaf.grad is None else leaf.grad.reshape(-1)
        errors[name] = relative_error(analytic, numeric, floor)
    return errors


def check_gradients(build, inputs, step=1e-5, seed=0, floor=1e-6):
    """Like :func:`check_leaves` for a function of plain arrays:
    ``build({name: leaf}) -> output``."""
    leaves = {k: parameter(v, name=k) for k, v in inputs.items()}
    return check_leaves(lambda: build(leaves), leaves, step, seed, floor)
