import math

import numpy as np
import pytest

from scn.core.autograd import backward
from scn.core.random import SplitMix64
from scn.core.tensor import graph_scope, parameter
from scn.errors import ShapeError
from scn.nn.optim import SGD, AMSGrad, OptimState, amsgrad_step, sgd_step


def _reference_amsgrad(w, steps, alpha=0.001, b1=0.9, b2=0.999, eps=1e-8):
    """f(w) = w² 上的标量 AMSGrad，不做偏差修正"""
    m = v = v_hat = 0.0
    trajectory = []
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        v_hat = max(v_hat, v)
        w = w - (alpha / math.sqrt(t)) * m / (math.sqrt(v_hat) + eps)
        trajectory.append(w)
    return trajectory


def test_zero_gradients_leave_params_unchanged():
    params = {"w": parameter([1.0, -2.0])}
    state = OptimState.zeros(params)
    for _ in range(5):
        amsgrad_step(params, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(params["w"].data, [1.0, -2.0])


def test_first_step_size():
    params = {"w": parameter([0.0])}
    amsgrad_step(params, {"w": np.array([1.0])}, OptimState.zeros(params))
    expected = -0.001 * 0.1 / (math.sqrt(0.001) + 1e-8)
    assert params["w"].data[0] == pytest.approx(expected, abs=1e-15)
    assert params["w"].data[0] == pytest.approx(-3.162e-3, abs=1e-6)


def test_trajectory_matches_scalar_reference():
    w = parameter([1.0])
    optimizer = AMSGrad({"w": w})
    got = []
    for _ in range(100):
        with graph_scope():
            grads = backward((w * w).sum())
        optimizer.step(grads)
        got.append(w.data[0])
    expected = _reference_amsgrad(1.0, 100)
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)
    assert abs(got[-1]) < 1.0


def test_v_hat_is_monotone():
    rng = SplitMix64(0)
    params = {"w": parameter(np.zeros(16))}
    state = OptimState.zeros(params)
    previous = np.zeros(16)
    for _ in range(200):
        amsgrad_step(params, {"w": rng.normal(16, 0.0, 1.0) * rng.uniform(1, 0.0, 3.0)}, state)
        assert np.all(state.v_hat["w"] >= previous)
        previous = state.v_hat["w"].copy()


def test_flat_learning_rate():
    params = {"w": parameter([0.0])}
    state = OptimState.zeros(params)
    amsgrad_step(params, {"w": np.array([1.0])}, state, flat_lr=True)
    amsgrad_step(params, {"w": np.array([1.0])}, state, flat_lr=True)
    m2 = 0.9 * 0.1 + 0.1
    v2 = 0.999 * 0.001 + 0.001
    first = -0.001 * 0.1 / (math.sqrt(0.001) + 1e-8)
    assert params["w"].data[0] == pytest.approx(first - 0.001 * m2 / (math.sqrt(v2) + 1e-8), abs=1e-15)


def test_gradient_shape_is_checked():
    params = {"w": parameter([0.0, 0.0])}
    with pytest.raises(ShapeError):
        amsgrad_step(params, {"w": np.zeros(3)}, OptimState.zeros(params))


def test_sgd_step():
    params = {"w": parameter([1.0])}
    sgd_step(params, {"w": np.array([2.0])}, lr=0.1)
    assert params["w"].data[0] == pytest.approx(0.8)
    sgd_step(params, {"w": np.array([2.0])}, lr=0.0)
    assert params["w"].data[0] == pytest.approx(0.8)


@pytest.mark.parametrize("g", [-3.0, -0.1, 0.2, 5.0])
def test_sgd_and_amsgrad_agree_on_direction(g):
    a, b = {"w": parameter([0.0])}, {"w": parameter([0.0])}
    sgd_step(a, {"w": np.array([g])}, lr=0.01)
    amsgrad_step(b, {"w": np.array([g])}, OptimState.zeros(b))
    assert np.sign(a["w"].data[0]) == np.sign(b["w"].data[0]) == -np.sign(g)


def test_sgd_class_counts_steps():
    w = parameter([1.0])
    optimizer = SGD({"w": w}, lr=0.5)
    optimizer.step({"w": np.array([1.0])})
    assert w.data[0] == 0.5
    assert optimizer.state.t == 1


def test_state_round_trips_through_named_tensors():
    params = {"a": parameter([1.0, 2.0]), "b": parameter([[3.0]])}
    state = OptimState.zeros(params)
    amsgrad_step(params, {"a": np.ones(2), "b": np.ones((1, 1))}, state)
    names = [name for name, _ in state.named_tensors()]
    assert names[0] == "optim/t"
    restored = OptimState.from_named_tensors(state.named_tensors())
    assert restored.t == 1
    np.testing.assert_array_equal(restored.v_hat["b"], state.v_hat["b"])
    AMSGrad(params).load_state(restored)


@pytest.mark.parametrize("flat_lr", [False, True])
def test_step_magnitude_is_bounded(flat_lr):
    alpha, b1, b2, eps = 0.001, 0.9, 0.999, 1e-8
    # 没有偏差修正时第一步就是 α·(1−θ₁)/√(1−θ₂) ≈ 3.16α，界只能取 Cauchy-Schwarz 给出的常数
    ratio = (1.0 - b1) / math.sqrt((1.0 - b2) * (1.0 - b1 * b1 / b2))
    rng = np.random.default_rng(3)
    params = {"w": parameter(np.zeros(32))}
    state = OptimState.zeros(params)
    g_max = np.zeros(32)
    for t in range(1, 301):
        g = rng.normal(size=32) * rng.uniform(0.0, 4.0, size=32)
        g_max = np.maximum(g_max, np.abs(g))
        before = params["w"].data.copy()
        amsgrad_step(params, {"w": g}, state, alpha, b1, b2, eps, flat_lr=flat_lr)
        step = np.abs(params["w"].data - before)
        alpha_t = alpha if flat_lr else alpha / math.sqrt(t)
        assert np.all(step <= alpha_t * g_max / (np.sqrt(state.v_hat["w"]) + eps) * (1 + 1e-12))
        assert np.all(step <= alpha_t * ratio * (1 + 1e-12))


def test_descends_on_a_convex_quadratic():
    a = np.array([0.5, 1.0, 2.0, 4.0, 8.0])
    w = parameter(np.full(5, 0.5))

    def loss():
        return 0.5 * float(np.sum(a * w.data ** 2))

    initial = loss()
    optimizer = AMSGrad({"w": w}, alpha=0.01)
    for _ in range(200):
        optimizer.step({"w": a * w.data})
    assert loss() < 0.5 * initial
