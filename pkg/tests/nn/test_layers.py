import math

import numpy as np
import pytest

from scn.core.random import SplitMix64
from scn.core.tensor import Tensor, parameter
from scn.errors import ShapeError
from scn.nn.layers import (
    Conv2dParams,
    LayerSpec,
    batchnorm_forward,
    conv2d_forward,
    conv2d_reference,
    dense_forward,
    dropout,
    glorot_bound,
    init_params,
    make_batchnorm,
    make_conv,
    make_dense,
)


def test_conv_output_grid_of_first_layer():
    conv = make_conv(1, 2, 9, 3, seed=0, name="conv1")
    assert conv2d_forward(Tensor(np.zeros((1, 1, 100, 100))), conv).shape == (1, 2, 31, 31)


def test_one_by_one_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 1, 5, 5))
    conv = Conv2dParams(parameter(np.ones((1, 1, 1, 1))), parameter(np.zeros(1)))
    np.testing.assert_array_equal(conv2d_forward(Tensor(x), conv).data, x)


def test_all_ones_kernel_sums_window():
    conv = Conv2dParams(parameter(np.ones((1, 1, 3, 3))), parameter(np.zeros(1)))
    out = conv2d_forward(Tensor(np.ones((1, 1, 3, 3))), conv)
    np.testing.assert_array_equal(out.data, [[[[9.0]]]])


@pytest.mark.parametrize("size", [3, 5, 8, 11])
@pytest.mark.parametrize("kernel", [1, 3])
@pytest.mark.parametrize("stride", [1, 2, 3])
@pytest.mark.parametrize("padding", [0, 1])
def test_conv_matches_nested_loop_reference(size, kernel, stride, padding):
    rng = np.random.default_rng(size * 100 + kernel * 10 + stride + padding)
    x = rng.normal(size=(2, 2, size, size))
    w, b = rng.normal(size=(3, 2, kernel, kernel)), rng.normal(size=3)
    conv = Conv2dParams(parameter(w), parameter(b), stride, padding)
    out = conv2d_forward(Tensor(x), conv)
    expected = conv2d_reference(x, w, b, stride, padding)
    assert out.shape[2] == conv.output_size(size)
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-10)


@pytest.mark.parametrize("kernel", [5, 7])
@pytest.mark.parametrize("stride", [1, 2, 3])
@pytest.mark.parametrize("padding", [0, 2])
def test_large_conv_matches_nested_loop_reference(kernel, stride, padding):
    rng = np.random.default_rng(kernel * 10 + stride + padding)
    x = rng.normal(size=(1, 2, 32, 32))
    w, b = rng.normal(size=(2, 2, kernel, kernel)), rng.normal(size=2)
    conv = Conv2dParams(parameter(w), parameter(b), stride, padding)
    out = conv2d_forward(Tensor(x), conv)
    assert out.shape[2] == out.shape[3] == conv.output_size(32)
    np.testing.assert_allclose(out.data, conv2d_reference(x, w, b, stride, padding), rtol=0, atol=1e-10)

def test_conv_channel_mismatch():
    conv = make_conv(3, 2, 3, 1, seed=0, name="c")
    with pytest.raises(ShapeError, match="channels"):
        conv2d_forward(Tensor(np.zeros((1, 1, 5, 5))), conv)


def test_batchnorm_keeps_standardised_batch():
    x = Tensor(np.array([-1.0, 1.0, -1.0, 1.0]).reshape(4, 1, 1, 1))
    bn = make_batchnorm(1, "bn", epsilon=1e-8)
    out = batchnorm_forward(x, bn, training=True)
    assert np.max(np.abs(out.data - x.data)) < 1e-6


def test_batchnorm_training_standardises_each_channel():
    rng = np.random.default_rng(4)
    x = rng.normal(loc=3.0, scale=5.0, size=(8, 3, 4, 4)) + np.array([0.0, -10.0, 20.0]).reshape(1, 3, 1, 1)
    bn = make_batchnorm(3, "bn")
    out = batchnorm_forward(Tensor(x), bn, training=True).data
    var_x = x.var(axis=(0, 2, 3))
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), var_x / (var_x + 1e-5), rtol=1e-10)
    assert np.all(np.abs(out.var(axis=(0, 2, 3)) - 1.0) < 1e-5)
    np.testing.assert_allclose(bn.running_mean.data, 0.1 * x.mean(axis=(0, 2, 3)), rtol=1e-12)

def test_batchnorm_zero_gamma_outputs_beta():
    bn = make_batchnorm(2, "bn")
    bn.gamma.data = np.zeros(2)
    bn.beta.data = np.array([0.3, -0.7])
    x = Tensor(np.random.default_rng(0).normal(size=(3, 2, 2, 2)))
    out = batchnorm_forward(x, bn, training=True)
    np.testing.assert_allclose(out.data[:, 0], 0.3)
    np.testing.assert_allclose(out.data[:, 1], -0.7)


def test_batchnorm_constant_channel_outputs_beta():
    bn = make_batchnorm(1, "bn")
    bn.beta.data = np.array([0.25])
    out = batchnorm_forward(Tensor(np.full((4, 1, 3, 3), 5.0)), bn, training=True)
    np.testing.assert_allclose(out.data, 0.25)
    assert np.all(np.isfinite(out.data))


def test_batchnorm_needs_two_samples_in_training():
    with pytest.raises(ShapeError, match="batch too small"):
        batchnorm_forward(Tensor(np.zeros((1, 1, 2, 2))), make_batchnorm(1, "bn"), training=True)


def test_batchnorm_running_statistics():
    bn = make_batchnorm(1, "bn", momentum=0.5)
    data = np.array([1.0, 2.0, 3.0, 6.0]).reshape(4, 1)
    batchnorm_forward(Tensor(data), bn, training=True)
    assert bn.running_mean.data[0] == pytest.approx(0.5 * 0.0 + 0.5 * 3.0)
    assert bn.running_var.data[0] == pytest.approx(0.5 * 1.0 + 0.5 * np.var(data, ddof=1))


def test_batchnorm_eval_uses_running_statistics():
    bn = make_batchnorm(1, "bn")
    bn.running_mean.data = np.array([2.0])
    bn.running_var.data = np.array([4.0 - 1e-5])
    out = batchnorm_forward(Tensor(np.array([[4.0], [0.0]])), bn, training=False)
    np.testing.assert_allclose(out.data, [[1.0], [-1.0]])


def test_dense_identity():
    x = np.random.default_rng(0).normal(size=(3, 4))
    out = dense_forward(Tensor(x), parameter(np.eye(4)), parameter(np.zeros(4)))
    np.testing.assert_array_equal(out.data, x)


def test_dense_sum():
    out = dense_forward(Tensor([[1.0, 1.0]]), parameter([[1.0], [1.0]]), parameter([0.0]))
    np.testing.assert_array_equal(out.data, [[2.0]])


def test_dense_parameter_count():
    assert make_dense(512, 20, seed=0, name="fc").parameter_count == 10260


def test_dense_shape_mismatch():
    with pytest.raises(ShapeError):
        dense_forward(Tensor(np.ones((2, 3))), parameter(np.ones((4, 2))), parameter(np.zeros(2)))


def test_init_biases_are_zero():
    for spec in (LayerSpec("conv", 1, 4, kernel=3, name="c"), LayerSpec("dense", 5, 2, name="d")):
        params = init_params(spec, seed=3)
        bias = params.get("bias", params.get("b"))
        np.testing.assert_array_equal(bias.data, 0.0)


def test_init_is_deterministic():
    spec = LayerSpec("conv", 2, 3, kernel=3, name="c")
    a, b = init_params(spec, 9), init_params(spec, 9)
    assert a["kernel"].data.tobytes() == b["kernel"].data.tobytes()
    assert init_params(spec, 10)["kernel"].data.tobytes() != a["kernel"].data.tobytes()


def test_glorot_bound_for_first_conv():
    kernel = make_conv(1, 256, 9, 3, seed=0, name="conv1").kernel.data
    bound = glorot_bound(81, 9 * 9 * 256)
    assert bound == pytest.approx(math.sqrt(6.0 / (81 + 20736)))
    assert np.max(np.abs(kernel)) <= bound
    assert np.max(np.abs(kernel)) > 0.99 * bound


def test_dropout_is_identity_in_eval():
    x = Tensor(np.ones((4, 4)))
    assert dropout(x, 0.5, SplitMix64(0), training=False) is x


def test_dropout_scales_kept_units():
    out = dropout(Tensor(np.ones(10000)), 0.2, SplitMix64(1), training=True).data
    assert set(np.unique(out)) <= {0.0, 1.25}
    assert np.mean(out == 0.0) == pytest.approx(0.2, abs=0.02)
