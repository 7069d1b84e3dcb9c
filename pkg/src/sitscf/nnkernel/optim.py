"""Parameter sets and the Adam optimizer."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterable

import numpy as np

from .tensor import ShapeError, Tensor


class ParameterSet:
    """Ordered name -> Tensor map plus per-parameter Adam moments and a step counter."""

    def __init__(self, params: Iterable[tuple[str, Tensor]] | dict[str, Tensor]):
        items = params.items() if isinstance(params, dict) else params
        self.tensors: OrderedDict[str, Tensor] = OrderedDict(items)
        self.first_moment: dict[str, np.ndarray] = {}
        self.second_moment: dict[str, np.ndarray] = {}
        self.step = 0

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray | None]:
        return {k: t.grad for k, t in self.tensors.items()}

    def reset_state(self) -> None:
        self.first_moment.clear()
        self.second_moment.clear()
        self.step = 0


def adam_step(
    params: ParameterSet,
    grads: dict[str, np.ndarray | None],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    decoupled: bool = False,
) -> ParameterSet:
    """One bias-corrected Adam update, in place.

    Weight decay is added to the gradient (L2 form) unless ``decoupled`` is set,
    in which case it shrinks the weights directly as in AdamW. A missing
    gradient counts as zero.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    b1, b2 = betas
    params.step += 1
    t = params.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        if weight_decay and not decoupled:
            g = g + weight_decay * p.data
        m = params.first_moment.get(name)
        v = params.second_moment.get(name)
        if m is None:
            m = params.first_moment[name] = np.zeros_like(p.data)
            v = params.second_moment[name] = np.zeros_like(p.data)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        denom = np.sqrt(v / c2)
        denom += eps
        update = m / denom
        update *= lr / c1
        if weight_decay and decoupled:
            update += (lr * weight_decay) * p.data
        p.data = (p.data - update).astype(p.dtype, copy=False)
    return params


class Adam:
    def __init__(self, params: ParameterSet, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0, decoupled: bool = False):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decoupled = decoupled

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self) -> None:
        adam_step(self.params, self.params.grads(), self.lr, self.betas, self.eps,
                  self.weight_decay, self.decoupled)
