import math

import numpy as np
import pytest

from scn.core.random import SplitMix64
from scn.core.tensor import Tensor, parameter
from scn.errors import ShapeError
from scn.nn.capsules import (
    CapsuleGrid,
    CapsuleLayerParams,
    PrimaryCapsuleParams,
    capsule_layer_forward,
    clamp_uniform,
    concrete_dropout_mask,
    concrete_dropout_regularizer,
    dynamic_route,
    primary_capsules_forward,
    squash,
)
from scn.nn.layers import conv2d_forward, make_conv


def _norm(a):
    return np.sqrt((a * a).sum(axis=-1))


def test_squash_of_zero_is_zero():
    np.testing.assert_array_equal(squash(Tensor(np.zeros((1, 4)))).data, np.zeros((1, 4)))


@pytest.mark.parametrize("s, expected", [((1.0, 0.0), (0.5, 0.0)), ((3.0, 0.0), (0.9, 0.0))])
def test_squash_analytic_points(s, expected):
    np.testing.assert_allclose(squash(Tensor([s])).data, [expected], rtol=0, atol=1e-15)


@pytest.mark.parametrize("length", [0.1, 1.0, 3.0, 10.0])
def test_squash_length(length):
    direction = np.array([1.0, -2.0, 2.0]) / 3.0
    v = squash(Tensor(length * direction.reshape(1, 3))).data[0]
    assert _norm(v) == pytest.approx(length ** 2 / (1 + length ** 2), abs=1e-12)
    assert float(v @ direction) / _norm(v) == pytest.approx(1.0, abs=1e-9)


def test_squash_is_monotone_and_bounded():
    lengths = np.linspace(0.01, 50.0, 200)
    v = squash(Tensor(np.stack([lengths, np.zeros_like(lengths)], axis=1))).data
    norms = _norm(v)
    assert np.all(np.diff(norms) > 0)
    assert np.all(norms < 1.0)


def test_first_iteration_couplings_are_uniform():
    u_hat = Tensor(np.random.default_rng(0).normal(size=(1, 5, 10, 4)))
    _, state = dynamic_route(u_hat, 3)
    np.testing.assert_allclose(state.history[0], 0.1, rtol=0, atol=1e-15)
    assert len(state.history) == 3


def test_routing_invariants_on_random_instances():
    # 1000 个随机实例放在同一个 batch 里
    u_hat = Tensor(np.random.default_rng(1).normal(scale=2.0, size=(1000, 6, 4, 5)))
    v, state = dynamic_route(u_hat, 3, "squash")
    for c in state.history:
        np.testing.assert_allclose(c.sum(axis=2), 1.0, rtol=0, atol=1e-9)
    assert np.all(_norm(v.data) < 1.0)


def _reference_couplings(u_hat, iterations):
    """逐元素写出的路由递推，只用 numpy"""
    n_lower, n_upper, _ = u_hat.shape
    b = np.zeros((n_lower, n_upper))
    out = []
    for it in range(iterations):
        c = np.exp(b) / np.exp(b).sum(axis=1, keepdims=True)
        out.append(c)
        v = []
        for j in range(n_upper):
            s = sum(c[i, j] * u_hat[i, j] for i in range(n_lower))
            n2 = float(s @ s)
            v.append(s * math.sqrt(n2) / (1.0 + n2) if n2 > 0 else s * 0.0)
        if it < iterations - 1:
            for i in range(n_lower):
                for j in range(n_upper):
                    b[i, j] += float(u_hat[i, j] @ v[j])
    return out


@pytest.mark.parametrize("iterations", [3, 5])
def test_consistent_parent_gains_coupling(iterations):
    u = np.zeros((2, 2, 2))
    u[:, 0] = [1.0, 0.0]  # 两个下层胶囊对 upper 0 的投票一致
    u[0, 1], u[1, 1] = [1.0, 0.0], [-1.0, 0.0]  # 对 upper 1 的投票相反
    _, state = dynamic_route(Tensor(u.reshape(1, 2, 2, 2)), iterations)
    towards_zero = [c[0, 0, 0] for c in state.history]
    assert all(b > a for a, b in zip(towards_zero, towards_zero[1:]))
    for got, expected in zip(state.history, _reference_couplings(u, iterations)):
        np.testing.assert_allclose(got[0], expected, rtol=0, atol=1e-12)


def test_routing_rejects_zero_iterations():
    with pytest.raises(ShapeError):
        dynamic_route(Tensor(np.zeros((1, 2, 2, 2))), 0)


def test_detached_routing_keeps_forward_values():
    u_hat = Tensor(np.random.default_rng(2).normal(size=(2, 3, 2, 4)))
    a, _ = dynamic_route(u_hat, 3)
    b, _ = dynamic_route(u_hat, 3, detach_routing=True)
    np.testing.assert_allclose(a.data, b.data, rtol=0, atol=1e-14)


def _primary(in_ch, types, dim, seed=0):
    return PrimaryCapsuleParams([make_conv(in_ch, types, 9, 3, seed, f"primary.{i}") for i in range(dim)])


def test_primary_capsules_of_zero_features():
    grid = primary_capsules_forward(Tensor(np.zeros((1, 4, 9, 9))), _primary(4, 2, 3))
    assert (grid.grid_h, grid.grid_w, grid.n_types, grid.dim) == (1, 1, 2, 3)
    np.testing.assert_array_equal(grid.poses.data, 0.0)


def test_primary_capsule_layout():
    params = _primary(3, 2, 4, seed=5)
    for conv in params.convs:
        conv.bias.data = np.random.default_rng(7).normal(size=conv.bias.shape)
    features = Tensor(np.random.default_rng(8).normal(size=(2, 3, 12, 12)))
    grid = primary_capsules_forward(features, params)

    per_dim = np.stack([conv2d_forward(features, c).data for c in params.convs], axis=-1)  # [N,T,gh,gw,D]
    s = per_dim.transpose(0, 2, 3, 1, 4).reshape(2, -1, 4)
    expected = squash(Tensor(s)).data
    assert grid.n_caps == 2 * 2 * 2
    np.testing.assert_allclose(grid.poses.data, expected, rtol=0, atol=1e-12)


def test_primary_capsules_at_full_size():
    grid = primary_capsules_forward(Tensor(np.zeros((1, 4, 31, 31))), _primary(4, 32, 2))
    assert grid.n_caps == 8 * 8 * 32 == 2048


def test_tanh_capsule_layer_of_zero_grid():
    grid = CapsuleGrid(Tensor(np.zeros((2, 6, 3))), 1, 2, 3)
    layer = CapsuleLayerParams(parameter(np.random.default_rng(0).normal(size=(6, 4, 3, 5))), "tanh")
    out = capsule_layer_forward(grid, layer, 3)
    assert out.shape == (2, 4, 5)
    np.testing.assert_array_equal(out.data, 0.0)


def test_capsule_layer_rejects_mismatched_grid():
    grid = CapsuleGrid(Tensor(np.zeros((1, 2, 3))), 1, 1, 2)
    layer = CapsuleLayerParams(parameter(np.zeros((2, 4, 5, 5))), "tanh")
    with pytest.raises(ShapeError):
        capsule_layer_forward(grid, layer, 2)


def test_concrete_mask_symmetric_point():
    for t in (0.01, 0.1, 1.0):
        z = concrete_dropout_mask(Tensor([0.5]), np.array([0.5]), t)
        assert z.data[0] == 0.5


def test_concrete_mask_confident_keep():
    z = concrete_dropout_mask(Tensor([0.9]), np.array([0.5]), 0.1)
    assert z.data[0] == pytest.approx(1.0 / (1.0 + math.exp(-10 * math.log(9.0))))
    assert z.data[0] > 0.999999


@pytest.mark.parametrize("p", [0.3, 0.7])
def test_concrete_mask_monte_carlo_mean(p):
    n = 100_000
    u = clamp_uniform(SplitMix64(int(p * 10)).random(n))
    probs = Tensor(np.full(n, p))
    standard = concrete_dropout_mask(probs, u, 0.1, standard_concrete=True).data
    assert standard.mean() == pytest.approx(p, abs=0.05)
    # 1/t 只缩放 p 的 logit 时，期望是 σ(logit(p)/t)
    printed = concrete_dropout_mask(probs, u, 0.1).data
    logit = math.log(p / (1 - p))
    assert printed.mean() == pytest.approx(1.0 / (1.0 + math.exp(-logit / 0.1)), abs=0.05)


def test_concrete_mask_is_nearly_binary_at_low_temperature():
    rng = SplitMix64(4)
    p = rng.uniform(500, 0.05, 0.95)
    u = clamp_uniform(rng.random(500))
    z = concrete_dropout_mask(Tensor(p), u, 0.01).data
    pre = np.log(p / (1 - p)) / 0.01 + np.log(u / (1 - u))
    decisive = np.abs(pre) > 10
    assert decisive.any()
    assert np.all(np.minimum(z, 1 - z)[decisive] < 1e-3)


@pytest.mark.parametrize("p, u", [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0)])
def test_concrete_mask_rejects_closed_interval(p, u):
    with pytest.raises(ShapeError):
        concrete_dropout_mask(Tensor([p]), np.array([u]), 0.1)


def test_concrete_regularizer_at_half():
    reg = concrete_dropout_regularizer(Tensor([0.5, 0.5]))
    assert reg.item() == pytest.approx(-2 * math.log(2.0))
