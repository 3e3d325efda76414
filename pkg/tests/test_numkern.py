import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from confmil.errors import DomainError, NumericError, ShapeError
from confmil.numkern import (
    AdamState,
    adam_step,
    bce_grad,
    bce_loss,
    grad_check,
    gru_backward,
    gru_cell,
    gru_forward,
    softmax,
    softmax_backward,
)
from confmil.numkern.ops import GRU_KEYS

from oracles import adam_scalar, gru_loop


def gru_params(rng, k=4, scale=0.5):
    return {key: rng.normal(0, scale, (k,) if key.startswith("b_") else (k, k)) for key in GRU_KEYS}


# ---------------------------------------------------------------- softmax

def test_softmax_examples():
    assert np.allclose(softmax([0.0, 0.0]), [0.5, 0.5], atol=1e-15)
    assert np.allclose(softmax([math.log(2), 0.0]), [2 / 3, 1 / 3], atol=1e-15)
    assert np.allclose(softmax([1000.0, 1000.0]), [0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("bad", [[], [np.nan, 1.0], [np.inf]])
def test_softmax_rejects(bad):
    with pytest.raises(DomainError):
        softmax(bad)


@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e4, 1e4)))
def test_softmax_is_a_distribution(z):
    a = softmax(z)
    assert abs(a.sum() - 1.0) < 1e-12
    # entries far below the max underflow to exactly zero
    assert np.all(a >= 0)
    assert np.all(a <= 1.0)


def test_softmax_backward_matches_jacobian():
    rng = np.random.default_rng(1)
    z = rng.normal(size=5)
    g = rng.normal(size=5)
    a = softmax(z)
    J = np.diag(a) - np.outer(a, a)
    assert np.allclose(softmax_backward(a, g), J.T @ g, atol=1e-15)


# ---------------------------------------------------------------- bce

def test_bce_examples():
    assert bce_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-12)
    assert bce_loss(1 - 1e-7, 1) == pytest.approx(1e-7, rel=1e-6)
    assert bce_loss(0.9, 0) == pytest.approx(-math.log(0.1), abs=1e-12)
    assert bce_loss(1.0, 0) == pytest.approx(-math.log(1e-7), rel=1e-9)


def test_bce_label_domain():
    with pytest.raises(DomainError):
        bce_loss(0.3, 0.5)


@given(st.floats(0.0, 1.0), st.sampled_from([0, 1]))
def test_bce_nonnegative(p, y):
    assert bce_loss(p, y) >= 0.0


def test_bce_grad_zero_in_clamp():
    assert bce_grad(0.0, 1) == 0.0
    assert bce_grad(1.0, 0) == 0.0
    p = 0.3
    assert bce_grad(p, 1) == pytest.approx(-1 / p)


# ---------------------------------------------------------------- GRU

def test_gru_zero_params():
    zeros = {k: np.zeros(2) if k.startswith("b_") else np.zeros((2, 2)) for k in GRU_KEYS}
    out = gru_cell(np.array([3.0, -7.0]), np.array([1.0, -1.0]), zeros)
    assert np.allclose(out, [0.5, -0.5], atol=0)
    assert np.all(gru_cell(np.zeros(2), np.zeros(2), zeros) == 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_gru_matches_scalar_loop(seed):
    rng = np.random.default_rng(seed)
    p = gru_params(rng, 5)
    x, h = rng.normal(size=5), rng.normal(size=5)
    ref = gru_loop(x.tolist(), h.tolist(), {k: v.tolist() for k, v in p.items()})
    assert np.allclose(gru_cell(x, h, p), ref, atol=1e-12, rtol=0)


def test_gru_batched_rows_match_single():
    rng = np.random.default_rng(3)
    p = gru_params(rng, 4)
    X, Hs = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    batch = gru_cell(X, Hs, p)
    for i in range(6):
        assert np.allclose(batch[i], gru_cell(X[i], Hs[i], p), atol=1e-15)


def test_gru_shape_errors():
    rng = np.random.default_rng(0)
    p = gru_params(rng, 3)
    with pytest.raises(ShapeError):
        gru_cell(np.zeros(2), np.zeros(3), p)
    with pytest.raises(ShapeError):
        gru_cell(np.zeros(4), np.zeros(4), p)
    del p["U_z"]
    with pytest.raises(ShapeError):
        gru_cell(np.zeros(3), np.zeros(3), p)


@given(st.integers(0, 2**32 - 1))
def test_gru_output_between_candidate_and_state(seed):
    rng = np.random.default_rng(seed)
    p = gru_params(rng, 4, scale=2.0)
    x, h = rng.normal(0, 3, 4), rng.normal(0, 3, 4)
    out, (_, _, _, _, _, n) = gru_forward(x, h, p)
    lo, hi = np.minimum(n, h), np.maximum(n, h)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def _gru_loss_fn(g):
    def fn(params, with_grad):
        out, cache = gru_forward(params["x"], params["h"], {k: params[k] for k in GRU_KEYS})
        loss = float(out @ g)
        if not with_grad:
            return loss
        gx, gh, grads = gru_backward(cache, g, {k: params[k] for k in GRU_KEYS})
        return loss, dict(grads, x=gx, h=gh)
    return fn


@pytest.mark.parametrize("seed", range(25))
def test_gru_gradcheck(seed):
    rng = np.random.default_rng(seed)
    params = gru_params(rng, 3)
    params["x"] = rng.normal(size=3)
    params["h"] = rng.normal(size=3)
    g = rng.normal(size=3)
    assert grad_check(_gru_loss_fn(g), params) < 1e-4


@pytest.mark.parametrize("seed", range(25))
def test_softmax_and_bce_gradcheck(seed):
    rng = np.random.default_rng(100 + seed)
    g = rng.normal(size=4)
    y = float(seed % 2)

    def fn(params, with_grad):
        a = softmax(params["z"])
        p = 1.0 / (1.0 + math.exp(-(a @ g)))
        loss = float(bce_loss(p, y))
        if not with_grad:
            return loss
        g_logit = float(bce_grad(p, y)) * p * (1 - p)
        return loss, {"z": softmax_backward(a, g_logit * g)}

    assert grad_check(fn, {"z": rng.normal(size=4)}) < 1e-4


# ---------------------------------------------------------------- grad_check itself

def test_grad_check_quadratic():
    def fn(params, with_grad):
        t = params["t"]
        loss = float(t @ t)
        return (loss, {"t": 2 * t}) if with_grad else loss

    assert grad_check(fn, {"t": np.array([3.0])}) < 1e-8


def test_grad_check_constant_loss():
    def fn(params, with_grad):
        return (1.0, {"t": np.zeros(3)}) if with_grad else 1.0

    assert grad_check(fn, {"t": np.ones(3)}) == 0.0


def test_grad_check_detects_wrong_gradient():
    def fn(params, with_grad):
        t = params["t"]
        loss = float(np.sum(t**3))
        return (loss, {"t": 3.3 * t**2}) if with_grad else loss

    assert grad_check(fn, {"t": np.array([1.0, 2.0])}) > 0.05


def test_grad_check_non_finite():
    def fn(params, with_grad):
        return (math.nan, {"t": np.zeros(1)}) if with_grad else math.nan

    with pytest.raises(NumericError):
        grad_check(fn, {"t": np.zeros(1)})


def test_grad_check_restores_params():
    t = np.array([0.5, -1.5])

    def fn(params, with_grad):
        loss = float(np.sum(np.sin(params["t"])))
        return (loss, {"t": np.cos(params["t"])}) if with_grad else loss

    before = t.copy()
    grad_check(fn, {"t": t})
    assert np.array_equal(t, before)


# ---------------------------------------------------------------- Adam

def test_adam_zero_grad_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    new, state = adam_step(p, {"w": np.zeros(2)}, AdamState.fresh(p))
    assert np.array_equal(new["w"], p["w"]) and state.t == 1


def test_adam_first_step_hand_computed():
    p = {"w": np.array([0.0])}
    new, _ = adam_step(p, {"w": np.array([1.0])}, AdamState.fresh(p, lr=0.001))
    # m_hat = 1, v_hat = 1, update = lr / (1 + eps)
    assert new["w"][0] == pytest.approx(-0.001 / (1 + 1e-8), abs=1e-18)


def test_adam_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    gs = rng.normal(size=12)
    p = {"w": np.array([0.7])}
    state = AdamState.fresh(p, lr=0.01)
    for g in gs:
        p, state = adam_step(p, {"w": np.array([g])}, state)
    assert p["w"][0] == pytest.approx(adam_scalar(0.7, gs, lr=0.01), abs=1e-14)


def test_adam_identical_params_stay_identical_and_deterministic():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 3))
    p = {"a": a.copy(), "b": a.copy()}
    s1 = AdamState.fresh(p)
    s2 = AdamState.fresh(p)
    q = dict(p)
    for _ in range(5):
        g = rng.normal(size=(3, 3))
        p, s1 = adam_step(p, {"a": g, "b": g}, s1)
        q, s2 = adam_step(q, {"a": g, "b": g}, s2)
    assert np.array_equal(p["a"], p["b"])
    assert np.array_equal(p["a"], q["a"])


def test_adam_shape_mismatch():
    p = {"w": np.zeros(2)}
    with pytest.raises(ShapeError):
        adam_step(p, {"w": np.zeros(3)}, AdamState.fresh(p))
    with pytest.raises(ShapeError):
        adam_step(p, {"v": np.zeros(2)}, AdamState.fresh(p))
