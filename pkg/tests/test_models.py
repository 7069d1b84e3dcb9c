import numpy as np
import pytest

from sitscf.models import (Classifier, Discriminator, Noiser, NoiserConfig, TempCNNConfig, argmax_abs,
                           compose_counterfactual, same_body)
from sitscf.nnkernel import ShapeError


@pytest.fixture(scope="module")
def clf():
    return Classifier(8, rng=np.random.default_rng(0))


def test_classifier_rows_are_distributions(clf):
    x = np.random.default_rng(1).uniform(-1, 1, size=(16, 24)).astype(np.float32)
    p = clf(x).data
    assert p.shape == (16, 8)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-5)


def test_fresh_classifier_is_near_uniform():
    x = np.random.default_rng(2).uniform(-1, 1, size=(4, 24)).astype(np.float32)
    lo, hi = 1.0, 0.0
    for seed in range(100):
        p = Classifier(8, rng=np.random.default_rng(seed))(x).data
        lo, hi = min(lo, p.min()), max(hi, p.max())
    assert 0.02 <= lo and hi <= 0.5


def test_wrong_length_rejected(clf):
    with pytest.raises(ShapeError):
        clf(np.zeros((2, 23), np.float32))
    with pytest.raises(ShapeError):
        Noiser()(np.zeros((2, 25), np.float32))


def test_classifier_and_discriminator_share_body():
    d = Discriminator(rng=np.random.default_rng(0))
    c = Classifier(8, rng=np.random.default_rng(0))
    assert same_body(c, d)
    assert d.head.specs[-1].out_dim == 1 and c.head.specs[-1].out_dim == 8
    specs = c.body.specs
    assert [s.kind for s in specs[:4]] == ["conv1d", "batchnorm", "activation", "dropout"]
    assert sum(s.kind == "conv1d" for s in specs) == 3
    assert all(s.kernel == 5 and s.out_dim == 64 for s in specs if s.kind == "conv1d")


def test_discriminator_scores_in_open_interval():
    d = Discriminator(rng=np.random.default_rng(0))
    s = d(np.random.default_rng(0).uniform(-1, 1, size=(10, 24)).astype(np.float32)).data
    assert np.all((s > 0) & (s < 1))
    for name in ("head.3.weight", "head.3.bias"):
        d.params[name].data[...] = 0
    np.testing.assert_array_equal(d(np.zeros((3, 24), np.float32)).data, 0.5)


def test_noiser_zero_init_and_bound():
    x = np.random.default_rng(0).uniform(-1, 1, size=(32, 24)).astype(np.float32)
    n = Noiser(rng=np.random.default_rng(0))
    assert np.all(n.perturb(x) == 0)
    n2 = Noiser(NoiserConfig(zero_output_init=False), rng=np.random.default_rng(0))
    big = n2.perturb(x * 1000)
    assert np.abs(big).max() < 1
    again = Noiser(NoiserConfig(zero_output_init=False), rng=np.random.default_rng(0)).perturb(x * 1000)
    np.testing.assert_array_equal(big, again)


def test_compose_counterfactual_exact():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 24).astype(np.float32)
    d = rng.uniform(-1, 1, 24).astype(np.float32)
    p = compose_counterfactual(x, d)
    # exact in storage precision: x_cf is the float32 sum itself, bit for bit
    assert np.array_equal(p.x_cf, x + d)
    assert np.max(np.abs(p.x_cf.astype(np.float64) - (x.astype(np.float64) + d))) <= np.spacing(np.float32(2))
    assert compose_counterfactual(x, np.zeros(24)).t_tilde == 0
    spike = np.zeros(24)
    spike[7] = 0.2
    assert compose_counterfactual(x, spike).t_tilde == 7
    tie = np.zeros(24)
    tie[:2] = [0.3, -0.3]
    assert compose_counterfactual(x, tie).t_tilde == 0
    with pytest.raises(ShapeError):
        compose_counterfactual(x, np.zeros(23))


def test_compose_counterfactual_not_clipped():
    p = compose_counterfactual(np.full(24, 0.9), np.full(24, 0.5))
    assert p.x_cf.max() > 1.0


def test_argmax_abs_rows():
    np.testing.assert_array_equal(argmax_abs(np.array([[0.1, -0.5], [0.2, 0.2]])), [1, 0])


def test_state_round_trip_and_hash():
    a = Classifier(8, TempCNNConfig(channels=8, dense_width=16), np.random.default_rng(0))
    b = Classifier(8, TempCNNConfig(channels=8, dense_width=16), np.random.default_rng(1))
    assert a.parameter_hash() != b.parameter_hash()
    b.set_state(a.get_state())
    assert a.parameter_hash() == b.parameter_hash()
    state = a.get_state()
    del state["head.0.bias"]
    with pytest.raises(KeyError):
        b.set_state(state)
