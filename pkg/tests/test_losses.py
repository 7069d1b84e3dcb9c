import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sitscf import losses
from sitscf.losses import LossWeights, NonFiniteLossError
from sitscf.nnkernel import Tensor, ops


def probs_with(p_y, k=4):
    """Rows whose class 0 has probability p_y, rest spread evenly."""
    rest = (1.0 - np.asarray(p_y)) / (k - 1)
    rows = np.repeat(rest[:, None], k, axis=1)
    rows[:, 0] = p_y
    return Tensor(rows, dtype=np.float64)


def test_class_swap_loss_oracles():
    assert losses.class_swap_loss(probs_with([0.5]), [0]).item() == pytest.approx(math.log(2), abs=1e-12)
    two = losses.class_swap_loss(probs_with([0.5, 0.9]), [0, 0]).item()
    assert two == pytest.approx((-math.log(0.5) - math.log(0.1)) / 2, rel=1e-9)
    assert two == pytest.approx(1.4979, abs=1e-4)
    assert losses.class_swap_loss(probs_with([0.0]), [0]).item() == 0.0


def test_class_swap_loss_clamps_certain_prediction():
    v = losses.class_swap_loss(probs_with([1.0]), [0]).item()
    assert math.isfinite(v) and v == pytest.approx(-math.log(1e-7), rel=1e-3)


def test_logit_twins_agree_with_probability_forms():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(6, 5))
    y = rng.integers(0, 5, size=6)
    zt = Tensor(z, dtype=np.float64)
    a = losses.class_swap_loss(ops.softmax(zt, axis=1), y).item()
    b = losses.class_swap_loss_from_logits(zt, y).item()
    assert a == pytest.approx(b, rel=1e-9)
    r, f = rng.normal(size=6), rng.normal(size=6)
    rt, ft = Tensor(r, dtype=np.float64), Tensor(f, dtype=np.float64)
    assert losses.discriminator_loss(ops.sigmoid(rt), ops.sigmoid(ft)).item() == pytest.approx(
        losses.discriminator_loss_from_logits(rt, ft).item(), rel=1e-9)
    assert losses.generator_loss(ops.sigmoid(ft)).item() == pytest.approx(
        losses.generator_loss_from_logits(ft).item(), rel=1e-9)


def test_discriminator_loss_oracles():
    half = Tensor(np.full(3, 0.5), dtype=np.float64)
    assert losses.discriminator_loss(half, half).item() == pytest.approx(2 * math.log(2), abs=1e-12)
    v = losses.discriminator_loss(Tensor([0.8], dtype=np.float64), Tensor([0.3], dtype=np.float64)).item()
    assert v == pytest.approx(-(math.log(0.8) + math.log(0.7)), rel=1e-12)
    assert v == pytest.approx(0.5798, abs=1e-4)
    perfect = losses.discriminator_loss(Tensor([1.0]), Tensor([0.0])).item()
    assert 0 <= perfect < 1e-6


def test_generator_loss_oracles():
    assert losses.generator_loss(Tensor(np.full(4, 0.5), dtype=np.float64)).item() == pytest.approx(math.log(2))
    assert losses.generator_loss(Tensor([0.25], dtype=np.float64)).item() == pytest.approx(-math.log(0.25))


def test_generator_gradient_is_negative_at_half():
    s = Tensor(np.full(3, 0.5), dtype=np.float64, requires_grad=True)
    losses.generator_loss(s).backward()
    assert np.all(s.grad < 0)


def test_modulo_distance_oracles():
    assert losses.modulo_distance(0, 23, 24) == 1
    assert losses.modulo_distance(23, 0, 24) == 1
    assert losses.modulo_distance(5, 5, 24) == 0
    assert losses.modulo_distance(0, 12, 24) == 12


def test_weighted_l1_hand_case():
    v = losses.weighted_l1_loss(Tensor(np.array([[0.5, 0.1, 0.0, 0.0]]), dtype=np.float64)).item()
    assert v == 0.1
    assert losses.weighted_l1_loss(Tensor(np.zeros((2, 24)))).item() == 0.0
    spike = np.zeros((1, 24))
    spike[0, 9] = -0.7
    assert losses.weighted_l1_loss(Tensor(spike)).item() == 0.0


def test_weighted_l1_tie_break_and_constant_weights():
    d = Tensor(np.array([[0.3, -0.3, 0.0, 0.0]]), dtype=np.float64, requires_grad=True)
    v = losses.weighted_l1_loss(d)
    # t~ = 0 (lowest index), distances [0, 1, 2, 1]
    assert v.item() == pytest.approx(0.3)
    v.backward()
    np.testing.assert_allclose(d.grad, [[0.0, -1.0, 0.0, 0.0]])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_subnormal=False), min_size=24, max_size=24), st.integers(0, 23))
def test_weighted_l1_rotation_invariant(vals, shift):
    d = np.array([vals])
    mag = np.abs(d[0])
    if np.sum(mag == mag.max()) > 1:
        return  # ties move with the rotation only when the winner stays the lowest index
    a = losses.weighted_l1_loss(Tensor(d, dtype=np.float64)).item()
    b = losses.weighted_l1_loss(Tensor(np.roll(d, shift, axis=1), dtype=np.float64)).item()
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)
    assert a >= 0


def test_weighted_l1_matches_loop_oracle():
    rng = np.random.default_rng(3)
    d = rng.uniform(-1, 1, size=(5, 24))
    expected = 0.0
    for row in d:
        c = int(np.argmax(np.abs(row)))
        for t in range(24):
            dist = min((t - c) % 24, (c - t) % 24)
            expected += dist ** 2 * abs(row[t])
    expected /= 5
    assert losses.weighted_l1_loss(Tensor(d, dtype=np.float64)).item() == pytest.approx(expected, rel=1e-12)


def test_noiser_total_composition():
    one, two, four = (Tensor([v], dtype=np.float64) for v in (1.0, 2.0, 4.0))
    total, bd = losses.noiser_total_loss(ops.sum(one), ops.sum(two), ops.sum(four), LossWeights())
    assert total.item() == pytest.approx(2.2, abs=1e-12)
    assert bd.l_noiser_total == pytest.approx(bd.l_cl + 0.5 * bd.l_gen + 0.05 * bd.l_wl1, rel=1e-6)
    total, _ = losses.noiser_total_loss(ops.sum(one), ops.sum(two), ops.sum(four), LossWeights(0.0, 0.0))
    assert total.item() == 1.0


def test_noiser_total_names_non_finite_component():
    with pytest.raises(NonFiniteLossError, match="l_gen"):
        losses.noiser_total_loss(ops.sum(Tensor([1.0])), ops.sum(Tensor([np.nan])),
                                 ops.sum(Tensor([0.0])), LossWeights())


def test_loss_weight_defaults_and_validation():
    w = LossWeights()
    assert (w.lambda_gen, w.lambda_wl1) == (0.5, 0.05)
    with pytest.raises(ValueError):
        LossWeights(-0.1, 0.05)
