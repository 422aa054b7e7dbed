import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from raregan.numerics import (AdamConfig, NonFiniteError, ParamStore, adam_step,
                              affine_backward, affine_forward, dropout_apply, grad_check,
                              sigmoid, softmax, tanh, weight_norm_apply,
                              weight_norm_backward)


def test_affine_examples():
    np.testing.assert_array_equal(affine_forward(np.array([[1.0, 2.0]]), np.eye(2), np.zeros(2)),
                                  [[1.0, 2.0]])
    W = np.random.default_rng(0).normal(size=(2, 2))
    np.testing.assert_array_equal(affine_forward(np.zeros((1, 2)), W, np.array([3.0, -1.0])),
                                  [[3.0, -1.0]])
    W = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(affine_forward(np.array([[1.0, 1.0]]), W, np.zeros(2)),
                                  [[4.0, 6.0]])


def test_affine_shape_mismatch():
    with pytest.raises(ValueError):
        affine_forward(np.ones((1, 3)), np.ones((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        affine_forward(np.ones((1, 2)), np.ones((2, 2)), np.zeros(3))


def test_activation_examples():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    np.testing.assert_array_equal(softmax(np.array([0.0, 0.0])), [0.5, 0.5])
    assert 1.0 - tanh(np.array([20.0]))[0] < 1e-15
    s = sigmoid(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(s)) and s[0] == 0.0 and s[1] == 1.0


@given(arrays(np.float64, (4, 5), elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    assert np.all(np.abs(softmax(x).sum(axis=1) - 1.0) < 1e-12)


def test_affine_sigmoid_grad_check(rng):
    x = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 2))

    def f(p):
        out = sigmoid(affine_forward(x, p["W"], p["b"]))
        loss = 0.5 * np.sum((out - target) ** 2)
        dpre = (out - target) * out * (1 - out)
        _, dW, db = affine_backward(dpre, x, p["W"])
        return loss, {"W": dW, "b": db}

    assert grad_check(f, {"W": rng.normal(size=(4, 2)), "b": rng.normal(size=2)}) < 1e-4


def test_grad_check_polynomial():
    err = grad_check(lambda p: (float(p["t"][0] ** 2), {"t": 2 * p["t"]}), {"t": np.array([3.0])})
    assert err < 1e-8


def test_grad_check_rejects_nonfinite():
    with pytest.raises(NonFiniteError):
        grad_check(lambda p: (float("nan"), {"t": p["t"]}), {"t": np.array([1.0])})


# -------------------------------------------------------------- weight norm

def test_weight_norm_examples():
    v = np.array([[1.0, 0.6], [0.0, 0.8]])
    np.testing.assert_allclose(weight_norm_apply(v, np.ones(2)), v, atol=1e-15)
    out = weight_norm_apply(v, np.array([2.0, 2.0]))
    np.testing.assert_allclose(np.linalg.norm(out, axis=0), [2.0, 2.0], rtol=1e-14)
    np.testing.assert_allclose(weight_norm_apply(10 * v, np.ones(2)), v, atol=1e-15)


def test_weight_norm_zero_column():
    with pytest.raises(ValueError):
        weight_norm_apply(np.array([[1.0, 0.0], [1.0, 0.0]]), np.ones(2))


@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_weight_norm_scale_invariance(c, seed):
    r = np.random.default_rng(seed)
    v, g = r.normal(size=(4, 3)), r.normal(size=3)
    np.testing.assert_allclose(weight_norm_apply(c * v, g), weight_norm_apply(v, g),
                               rtol=0, atol=1e-12)


def test_weight_norm_grad_check(rng):
    target = rng.normal(size=(3, 2))

    def f(p):
        W = weight_norm_apply(p["v"], p["g"])
        dv, dg = weight_norm_backward(W - target, p["v"], p["g"])
        return 0.5 * np.sum((W - target) ** 2), {"v": dv, "g": dg}

    assert grad_check(f, {"v": rng.normal(size=(3, 2)), "g": rng.normal(size=2)}) < 1e-4


# ---------------------------------------------------------------- dropout

def test_dropout_identity_cases(rng):
    x = rng.normal(size=(5, 5))
    assert dropout_apply(x, 0.5, False, rng)[0] is x
    np.testing.assert_array_equal(dropout_apply(x, 0.0, True, rng)[0], x)
    with pytest.raises(ValueError):
        dropout_apply(x, 1.0, True, rng)


def test_dropout_zero_fraction_binomial(rng):
    n = 100_000
    out, _ = dropout_apply(np.ones(n), 0.5, True, rng)
    frac = np.mean(out == 0)
    assert abs(frac - 0.5) <= 3 * np.sqrt(0.25 / n)
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_dropout_preserves_expectation(rng):
    x = rng.uniform(0.5, 1.5, size=10)
    trials = np.stack([dropout_apply(x, 0.3, True, rng)[0] for _ in range(100_000)])
    assert abs(trials.mean() - x.mean()) <= 0.01 * x.mean()


# ------------------------------------------------------------------- adam

def test_adam_zero_gradient_is_fixed_point(rng):
    p = rng.normal(size=(3, 3))
    store = ParamStore({"w": p})
    for _ in range(3):
        adam_step(store, AdamConfig())
    assert store["w"].tobytes() == p.tobytes()


def test_adam_first_step_is_lr_times_sign():
    cfg = AdamConfig(learning_rate=0.001)
    store = ParamStore({"w": np.zeros(3)})
    g = np.array([0.5, -2.0, 1e-3])
    store.grads["w"][...] = g
    adam_step(store, cfg)
    # m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + eps)
    expected = -cfg.learning_rate * g / (np.abs(g) + cfg.epsilon)
    np.testing.assert_allclose(store["w"], expected, rtol=1e-12)
    np.testing.assert_allclose(np.abs(store["w"]), cfg.learning_rate, rtol=1e-4)
    assert not store.grads["w"].any()


def test_adam_second_moment_grows():
    store = ParamStore({"w": np.zeros(2)})
    g = np.array([0.3, -0.7])
    store.grads["w"][...] = g
    adam_step(store, AdamConfig())
    v1 = store.v["w"].copy()
    store.grads["w"][...] = g
    adam_step(store, AdamConfig())
    assert np.all(store.v["w"] > v1)
    assert store.step == 2


def test_adam_unknown_parameter():
    with pytest.raises(KeyError, match="missing"):
        adam_step(ParamStore({"w": np.zeros(1)}), AdamConfig(), names=["missing"])


def test_adam_config_validation():
    with pytest.raises(ValueError):
        AdamConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        AdamConfig(beta1=1.0)
    with pytest.raises(ValueError):
        AdamConfig(epsilon=0.0)


def test_param_store_shape_check():
    store = ParamStore({"w": np.zeros((2, 2))})
    with pytest.raises(ValueError):
        store.accumulate({"w": np.zeros(3)})
