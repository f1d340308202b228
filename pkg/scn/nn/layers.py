import math
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from scn.core import ops
from scn.core.random import SplitMix64
from scn.core.tensor import Tensor, parameter
from scn.errors import ShapeError


@dataclass
class Conv2dParams:
    kernel: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        out_ch, _, kh, kw = self.kernel.shape
        if kh != kw:
            raise ShapeError(f"conv2d: only square kernels are supported, got {kh}x{kw}")
        if self.bias.shape != (out_ch,):
            raise ShapeError(f"conv2d: bias shape {list(self.bias.shape)} does not match out_ch {out_ch}")
        if self.stride < 1 or self.padding < 0:
            raise ShapeError(f"conv2d: invalid stride={self.stride} padding={self.padding}")

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.kernel.shape[2]

    @property
    def parameter_count(self) -> int:
        return self.kernel.size + self.bias.size

    def named_parameters(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield f"{prefix}.kernel", self.kernel
        yield f"{prefix}.bias", self.bias

    def output_size(self, size: int) -> int:
        return (size + 2 * self.padding - self.kernel_size) // self.stride + 1


@dataclass
class BatchNormParams:
    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    momentum: float = 0.1
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ShapeError(f"batchnorm: epsilon must be > 0, got {self.epsilon}")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @property
    def parameter_count(self) -> int:
        return self.gamma.size + self.beta.size

    def named_parameters(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta

    def named_buffers(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield f"{prefix}.running_mean", self.running_mean
        yield f"{prefix}.running_var", self.running_var


@dataclass
class DenseParams:
    W: Tensor
    b: Tensor

    @property
    def parameter_count(self) -> int:
        return self.W.size + self.b.size

    def named_parameters(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield f"{prefix}.W", self.W
        yield f"{prefix}.b", self.b


@dataclass
class LayerSpec:
    """init_params 的层描述：kind 为 conv / dense / batchnorm / capsule"""

    kind: str
    in_dim: int = 1
    out_dim: int = 1
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    n_lower: int = 1
    n_upper: int = 1
    name: str = "layer"


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def glorot_uniform(shape: Tuple[int, ...], fan_in: int, fan_out: int, rng: SplitMix64,
                   name: Optional[str] = None) -> Tensor:
    bound = glorot_bound(fan_in, fan_out)
    count = int(np.prod(shape))
    return parameter(rng.uniform(count, -bound, bound).reshape(shape), name=name)


def init_params(spec: LayerSpec, seed: int) -> Dict[str, Tensor]:
    rng = SplitMix64(seed).derive(spec.name)
    if spec.kind == "conv":
        k = spec.kernel
        shape = (spec.out_dim, spec.in_dim, k, k)
        return {
            "kernel": glorot_uniform(shape, spec.in_dim * k * k, spec.out_dim * k * k, rng, f"{spec.name}.kernel"),
            "bias": parameter(np.zeros(spec.out_dim), name=f"{spec.name}.bias"),
        }
    if spec.kind == "dense":
        return {
            "W": glorot_uniform((spec.in_dim, spec.out_dim), spec.in_dim, spec.out_dim, rng, f"{spec.name}.W"),
            "b": parameter(np.zeros(spec.out_dim), name=f"{spec.name}.b"),
        }
    if spec.kind == "batchnorm":
        return {
            "gamma": parameter(np.ones(spec.out_dim), name=f"{spec.name}.gamma"),
            "beta": parameter(np.zeros(spec.out_dim), name=f"{spec.name}.beta"),
            "running_mean": Tensor(np.zeros(spec.out_dim)),
            "running_var": Tensor(np.ones(spec.out_dim)),
        }
    if spec.kind == "capsule":
        # 每个 W_ij 是 d_in x d_out 的变换矩阵
        shape = (spec.n_lower, spec.n_upper, spec.in_dim, spec.out_dim)
        return {"W": glorot_uniform(shape, spec.in_dim, spec.out_dim, rng, f"{spec.name}.W")}
    raise ShapeError(f"unknown layer kind {spec.kind!r}")


def make_conv(in_ch: int, out_ch: int, kernel: int, stride: int, seed: int, name: str,
              padding: int = 0) -> Conv2dParams:
    tensors = init_params(LayerSpec("conv", in_ch, out_ch, kernel, stride, padding, name=name), seed)
    return Conv2dParams(tensors["kernel"], tensors["bias"], stride, padding)


def make_batchnorm(channels: int, name: str, momentum: float = 0.1, epsilon: float = 1e-5) -> BatchNormParams:
    tensors = init_params(LayerSpec("batchnorm", out_dim=channels, name=name), 0)
    return BatchNormParams(tensors["gamma"], tensors["beta"], tensors["running_mean"],
                           tensors["running_var"], momentum, epsilon)


def make_dense(in_dim: int, out_dim: int, seed: int, name: str) -> DenseParams:
    tensors = init_params(LayerSpec("dense", in_dim, out_dim, name=name), seed)
    return DenseParams(tensors["W"], tensors["b"])


def conv2d_forward(x: Tensor, p: Conv2dParams) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"conv2d: expected input [N,C,H,W], got {list(x.shape)}")
    if x.shape[1] != p.in_channels:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, kernel expects {p.in_channels}")
    out = ops.conv2d(x, p.kernel, stride=p.stride, padding=p.padding)
    return out + p.bias.reshape(1, p.out_channels, 1, 1)


def conv2d_reference(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride: int = 1,
                     padding: int = 0) -> np.ndarray:
    """朴素的多重循环卷积，仅用于对照测试"""
    n, c, h, w = x.shape
    o, _, k, _ = kernel.shape
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + w] = x
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for b in range(n):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ic in range(c):
                        for di in range(k):
                            for dj in range(k):
                                acc += xp[b, ic, i * stride + di, j * stride + dj] * kernel[oc, ic, di, dj]
                    out[b, oc, i, j] = acc + bias[oc]
    return out


def batchnorm_forward(x: Tensor, p: BatchNormParams, training: bool) -> Tensor:
    if x.ndim < 2 or x.shape[1] != p.channels:
        raise ShapeError(f"batchnorm: expected [N,{p.channels},...], got {list(x.shape)}")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, p.channels) + (1,) * (x.ndim - 2)

    if training:
        n = int(np.prod([x.shape[a] for a in axes]))
        if x.shape[0] < 2:
            raise ShapeError(f"batch too small: batchnorm training needs N >= 2, got N={x.shape[0]}")
        mu = x.mean(axis=axes, keepdims=True)
        centered = x - mu
        var = centered.square().mean(axis=axes, keepdims=True)
        x_hat = centered / (var + p.epsilon).sqrt()
        batch_mean = mu.data.reshape(-1)
        unbiased = var.data.reshape(-1) * (n / (n - 1))
        p.running_mean.data = (1.0 - p.momentum) * p.running_mean.data + p.momentum * batch_mean
        p.running_var.data = np.maximum((1.0 - p.momentum) * p.running_var.data + p.momentum * unbiased, 0.0)
    else:
        mu = Tensor._wrap(p.running_mean.data.reshape(bshape))
        std = Tensor._wrap(np.sqrt(p.running_var.data + p.epsilon).reshape(bshape))
        x_hat = (x - mu) / std

    return x_hat * p.gamma.reshape(bshape) + p.beta.reshape(bshape)


def dense_forward(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(f"dense: shape mismatch x={list(x.shape)} W={list(W.shape)} b={list(b.shape)}")
    return ops.matmul(x, W) + b.reshape(1, W.shape[1])


def dropout(x: Tensor, rate: float, rng: Optional[SplitMix64], training: bool) -> Tensor:
    """inverted dropout，评估模式下为恒等映射"""
    if not training or rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.size) >= rate).reshape(x.shape)
    return x * Tensor._wrap(keep / (1.0 - rate))
