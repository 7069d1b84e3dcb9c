import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradcases import STEP, random_cases
from sitscf.nnkernel import (Adam, GraphStateError, LayerSpec, ParameterSet, Sequential, ShapeError,
                             Tensor, adam_step, check_gradients, no_grad, ops)


@pytest.mark.parametrize("name,fn,inputs,seed", random_cases(120, seed=1), ids=lambda v: v if isinstance(v, str) else "")
def test_gradient_matches_finite_differences(name, fn, inputs, seed):
    assert check_gradients(fn, inputs, h=STEP, seed=seed) < 1e-3


def test_backward_accumulates_across_calls():
    x = Tensor([1.0, 2.0], requires_grad=True)
    ops.sum(x * x).backward()
    ops.sum(x * x).backward()
    np.testing.assert_allclose(x.grad, [4.0, 8.0])


def test_backward_twice_on_released_graph_raises():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = ops.sum(ops.tanh(x))
    y.backward()
    with pytest.raises(GraphStateError):
        y.backward()


def test_backward_without_forward_raises():
    with pytest.raises(GraphStateError):
        Tensor([1.0], requires_grad=True).backward()


def test_non_scalar_root_needs_seed():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        ops.tanh(x).backward()


def test_no_grad_records_nothing():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        y = ops.sum(x * x)
    assert not y.requires_grad


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_default_dtype_is_float32():
    assert Tensor([1, 2, 3]).dtype == np.float32
    assert Tensor(np.zeros(2, dtype=np.float64)).dtype == np.float64


def test_conv1d_matches_direct_correlation():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 9, 3))
    w = rng.normal(size=(4, 3, 5))
    b = rng.normal(size=4)
    out = ops.conv1d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), Tensor(b, dtype=np.float64)).data
    xp = np.pad(x, ((0, 0), (2, 2), (0, 0)))
    ref = np.zeros((2, 9, 4))
    for n in range(2):
        for t in range(9):
            for o in range(4):
                ref[n, t, o] = b[o] + np.sum(w[o].T * xp[n, t:t + 5])
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_conv1d_channel_first_length_preserved():
    out = ops.conv1d_forward(Tensor(np.ones((1, 24))), Tensor(np.ones((64, 1, 5))), Tensor(np.zeros(64)))
    assert out.shape == (64, 24)
    # zero padding: the first sample sees only three of the five taps
    assert out.data[0, 0] == 3.0 and out.data[0, 12] == 5.0


def test_conv1d_even_kernel_rejected():
    with pytest.raises(ValueError):
        LayerSpec("conv1d", in_dim=1, out_dim=2, kernel=4)


def test_batchnorm_train_normalizes_and_updates_running_stats():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 2.0, size=(64, 5))
    rm, rv = np.zeros(5), np.ones(5)
    y = ops.batchnorm(Tensor(x, dtype=np.float64), Tensor(np.ones(5)), Tensor(np.zeros(5)), rm, rv, train=True).data
    np.testing.assert_allclose(y.mean(axis=0), 0, atol=1e-6)
    np.testing.assert_allclose(y.std(axis=0), 1, atol=1e-3)
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=0), rtol=1e-6)
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=0, ddof=1), rtol=1e-6)


def test_batchnorm_train_rejects_single_sample():
    with pytest.raises(ValueError):
        ops.batchnorm(Tensor(np.ones((1, 3))), Tensor(np.ones(3)), Tensor(np.zeros(3)),
                      np.zeros(3), np.ones(3), train=True)


def test_dropout_eval_is_identity_and_train_is_inverted():
    x = Tensor(np.ones((200, 50)))
    assert ops.dropout(x, 0.5, False, None) is x
    y = ops.dropout(x, 0.5, True, np.random.default_rng(0)).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05


def test_unknown_activation():
    with pytest.raises(ValueError):
        ops.activation(Tensor([1.0]), "swish")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
def test_softmax_rows_sum_to_one(vals):
    p = ops.softmax(Tensor(np.array([vals])), axis=1).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-5


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8), st.data())
def test_log1m_softmax_matches_direct_formula(vals, data):
    z = np.array([vals], dtype=np.float64)
    k = data.draw(st.integers(0, len(vals) - 1))
    got = ops.log1m_softmax_at(Tensor(z, dtype=np.float64), np.array([k])).data[0]
    p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    if p[0, k] < 1 - 1e-9:
        assert got == pytest.approx(np.log1p(-p[0, k]), rel=1e-6, abs=1e-9)


def test_adam_first_step_moves_by_lr():
    p = ParameterSet({"w": Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)})
    adam_step(p, {"w": np.array([0.3, -5.0], dtype=np.float32)}, lr=0.01)
    # bias-corrected first step is lr * sign(g)
    np.testing.assert_allclose(p["w"].data, [0.99, -1.99], rtol=1e-6)
    assert p.step == 1


def test_adam_weight_decay_coupled_vs_decoupled():
    for decoupled in (False, True):
        p = ParameterSet({"w": Tensor(np.array([1.0], dtype=np.float32))})
        adam_step(p, {"w": None}, lr=0.1, weight_decay=0.5, decoupled=decoupled)
        expected = 0.9 if not decoupled else 1.0 - 0.1 * 0.5
        assert p["w"].data[0] == pytest.approx(expected, rel=1e-6)


def test_adam_rejects_bad_inputs():
    p = ParameterSet({"w": Tensor(np.zeros(2))})
    with pytest.raises(ValueError):
        adam_step(p, {}, lr=0.0)
    with pytest.raises(ShapeError):
        adam_step(p, {"w": np.zeros(3)}, lr=0.1)


def test_adam_minimizes_quadratic():
    w = Tensor(np.array([3.0, -4.0], dtype=np.float32), requires_grad=True)
    opt = Adam(ParameterSet({"w": w}), lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        ops.sum(w * w).backward()
        opt.step()
    assert np.abs(w.data).max() < 1e-2


def test_sequential_parameter_names_and_shapes():
    seq = Sequential([LayerSpec("conv1d", in_dim=1, out_dim=4, kernel=3), LayerSpec("batchnorm", in_dim=4),
                      LayerSpec("dense", in_dim=8, out_dim=2)], np.random.default_rng(0))
    names = {k: v.shape for k, v in seq.named_params().items()}
    assert names == {"0.weight": (4, 1, 3), "0.bias": (4,), "1.gamma": (4,), "1.beta": (4,),
                     "2.weight": (2, 8), "2.bias": (2,)}
    assert set(seq.named_buffers()) == {"1.running_mean", "1.running_var"}
