"""Central finite-difference gradient checks."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-3) -> np.ndarray:
    """d fn() / d x by central differences, perturbing ``x.data`` in place."""
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(np.sum(fn().data, dtype=np.float64))
        flat[i] = orig - h
        down = float(np.sum(fn().data, dtype=np.float64))
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor), floor tied to the tensor's scale."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    floor = max(1e-3 * float(np.max(np.abs(n), initial=0.0)), 1e-8)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom, initial=0.0))


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-3,
                    seed: np.ndarray | None = None) -> float:
    """Largest relative error between backward() and finite differences over ``inputs``.

    ``fn`` must rebuild the graph on every call and be deterministic. If the
    output is not scalar, ``seed`` (default: ones) weights its entries so the
    check covers an arbitrary upstream gradient.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = fn()
    if seed is None:
        seed = np.ones(out.shape, dtype=out.dtype)
    seed = np.asarray(seed, dtype=out.dtype)

    def weighted():
        o = fn()
        return Tensor(o.data * seed, dtype=o.dtype)

    out.backward(seed)
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        numeric = numerical_grad(weighted, t, h)
        worst = max(worst, relative_error(analytic, numeric))
    return worst
