"""Noiser and discriminator objectives.

Probability-space functions clamp to [1e-7, 1 - 1e-7] before taking logs.
The ``*_from_logits`` twins compute the same quantities in the log domain;
training uses them because a clamped probability has zero gradient, which
would stall the noiser exactly on the confidently classified samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nnkernel import Tensor, ops

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_gen: float = 0.5
    lambda_wl1: float = 0.05

    def __post_init__(self):
        if self.lambda_gen < 0 or self.lambda_wl1 < 0:
            raise ValueError(f"loss weights must be non-negative, got {self}")


@dataclass(frozen=True)
class LossBreakdown:
    l_cl: float
    l_gen: float
    l_wl1: float
    l_noiser_total: float
    l_dsc: float = float("nan")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, component: str, value: float):
        super().__init__(f"non-finite {component}: {value}")
        self.component = component


def _labels(labels) -> np.ndarray:
    return np.asarray(labels, dtype=np.int64)


def class_swap_loss(probs: Tensor, labels) -> Tensor:
    """-mean log(1 - p(y)) for the 0-based class indices ``labels``."""
    p_y = ops.take_rows(probs, _labels(labels))
    p_y = ops.clamp(p_y, 0.0, 1.0 - PROB_EPS)
    return -ops.mean(ops.log(1.0 - p_y))


def class_swap_loss_from_logits(logits: Tensor, labels) -> Tensor:
    return -ops.mean(ops.log1m_softmax_at(logits, _labels(labels)))


def discriminator_loss(scores_real: Tensor, scores_fake: Tensor) -> Tensor:
    real = ops.clamp(scores_real, PROB_EPS, 1.0 - PROB_EPS)
    fake = ops.clamp(scores_fake, PROB_EPS, 1.0 - PROB_EPS)
    return -ops.mean(ops.log(real) + ops.log(1.0 - fake))


def discriminator_loss_from_logits(logit_real: Tensor, logit_fake: Tensor) -> Tensor:
    # -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    return ops.mean(ops.softplus(-logit_real) + ops.softplus(logit_fake))


def generator_loss(scores_fake: Tensor) -> Tensor:
    fake = ops.clamp(scores_fake, PROB_EPS, 1.0 - PROB_EPS)
    return -ops.mean(ops.log(fake))


def generator_loss_from_logits(logit_fake: Tensor) -> Tensor:
    return ops.mean(ops.softplus(-logit_fake))


def modulo_distance(t, t_tilde, length: int):
    """Circular distance between time indices on a ring of ``length`` samples."""
    a = np.mod(np.subtract(t, t_tilde), length)
    b = np.mod(np.subtract(t_tilde, t), length)
    return np.minimum(a, b)


def distance_weights(t_tilde: np.ndarray, length: int) -> np.ndarray:
    """Squared modulo distance to each row's centre, shape (n, length)."""
    t = np.arange(length)[None, :]
    d = modulo_distance(t, np.asarray(t_tilde)[:, None], length)
    return (d.astype(np.float64) ** 2)


def weighted_l1_loss(deltas: Tensor) -> Tensor:
    """Mean over the batch of sum_t d(t, t~)^2 |delta_t|.

    t~ is the argmax of |delta| per row (lowest index on ties) and is treated
    as a constant, so no gradient flows through the argmax.
    """
    d = deltas if deltas.data.ndim == 2 else ops.reshape(deltas, (1, -1))
    n, length = d.shape
    t_tilde = np.argmax(np.abs(d.data), axis=1)
    w = Tensor(distance_weights(t_tilde, length).astype(d.dtype))
    return ops.mul(ops.sum(ops.mul(ops.abs(d), w)), 1.0 / n)


def noiser_total_loss(l_cl: Tensor, l_gen: Tensor, l_wl1: Tensor,
                      weights: LossWeights) -> tuple[Tensor, LossBreakdown]:
    """l_cl + lambda_gen * l_gen + lambda_wl1 * l_wl1, plus a float breakdown."""
    parts = {"l_cl": l_cl.item(), "l_gen": l_gen.item(), "l_wl1": l_wl1.item()}
    for name, v in parts.items():
        if not math.isfinite(v):
            raise NonFiniteLossError(name, v)
    total = l_cl
    if weights.lambda_gen:
        total = total + ops.mul(l_gen, weights.lambda_gen)
    if weights.lambda_wl1:
        total = total + ops.mul(l_wl1, weights.lambda_wl1)
    breakdown = LossBreakdown(
        l_cl=parts["l_cl"],
        l_gen=parts["l_gen"],
        l_wl1=parts["l_wl1"],
        l_noiser_total=parts["l_cl"] + weights.lambda_gen * parts["l_gen"]
        + weights.lambda_wl1 * parts["l_wl1"],
    )
    return total, breakdown
