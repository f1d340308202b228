from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np

from scn.core import ops
from scn.core.tensor import Tensor
from scn.errors import ShapeError
from scn.nn.layers import BatchNormParams, Conv2dParams, batchnorm_forward, conv2d_forward


SQUASH_EPS = 1e-9
ACTIVATIONS = ("squash", "tanh")


@dataclass
class CapsuleGrid:
    poses: Tensor  # [N, n_caps, d]
    grid_h: int
    grid_w: int
    n_types: int

    def __post_init__(self):
        if self.poses.ndim != 3 or self.poses.shape[1] != self.grid_h * self.grid_w * self.n_types:
            raise ShapeError(
                f"capsule grid: poses {list(self.poses.shape)} do not match "
                f"{self.grid_h}x{self.grid_w}x{self.n_types}"
            )

    @property
    def n_caps(self) -> int:
        return self.poses.shape[1]

    @property
    def dim(self) -> int:
        return self.poses.shape[2]


@dataclass
class RoutingState:
    b: Tensor  # [N, n_lower, n_upper] 最终的 log prior
    c: Tensor  # [N, n_lower, n_upper] 最后一次迭代的耦合系数
    iterations: int
    history: List[np.ndarray] = field(default_factory=list)


@dataclass
class CapsuleLayerParams:
    W: Tensor  # [n_lower, n_upper, d_in, d_out]
    activation_kind: str = "tanh"

    def __post_init__(self):
        if self.W.ndim != 4:
            raise ShapeError(f"capsule layer: W must be [n_lower, n_upper, d_in, d_out], got {list(self.W.shape)}")
        if self.activation_kind not in ACTIVATIONS:
            raise ShapeError(f"unknown capsule activation {self.activation_kind!r}")

    @property
    def parameter_count(self) -> int:
        return self.W.size

    def named_parameters(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield f"{prefix}.W", self.W


@dataclass
class PrimaryCapsuleParams:
    """One convolution per pose dimension, each producing ``n_types`` channels."""

    convs: List[Conv2dParams]
    bn: Optional[BatchNormParams] = None

    @property
    def pose_dim(self) -> int:
        return len(self.convs)

    @property
    def n_types(self) -> int:
        return self.convs[0].out_channels

    @property
    def in_channels(self) -> int:
        return self.convs[0].in_channels

    @property
    def parameter_count(self) -> int:
        count = sum(c.parameter_count for c in self.convs)
        if self.bn is not None:
            count += self.bn.parameter_count
        return count

    def named_parameters(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        for i, conv in enumerate(self.convs):
            yield from conv.named_parameters(f"{prefix}.{i}")
        if self.bn is not None:
            yield from self.bn.named_parameters(f"{prefix}.bn")

    def named_buffers(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        if self.bn is not None:
            yield from self.bn.named_buffers(f"{prefix}.bn")


def squash(s: Tensor, axis: int = -1) -> Tensor:
    """v = ‖s‖²/(1+‖s‖²) · s/‖s‖，写成 s·‖s‖/(1+‖s‖²) 以避免除零"""
    norm = ((s * s).sum(axis=axis, keepdims=True) + SQUASH_EPS * SQUASH_EPS).sqrt()
    return s * (norm / (norm.square() + 1.0))


def _activate(s: Tensor, activation_kind: str) -> Tensor:
    if activation_kind == "squash":
        return squash(s, axis=-1)
    if activation_kind == "tanh":
        return s.tanh()
    raise ShapeError(f"unknown capsule activation {activation_kind!r}")


def dynamic_route(u_hat: Tensor, iterations: int, activation_kind: str = "squash",
                  detach_routing: bool = False) -> Tuple[Tensor, RoutingState]:
    """routing-by-agreement

    u_hat: [N, n_lower, n_upper, d_out]。b 每次前向都从 0 开始，最后一次
    迭代之后不再更新。
    """
    if iterations < 1:
        raise ShapeError(f"routing iterations must be >= 1, got {iterations}")
    if u_hat.ndim != 4:
        raise ShapeError(f"dynamic_route: expected u_hat [N, n_lower, n_upper, d], got {list(u_hat.shape)}")

    n, n_lower, n_upper, _ = u_hat.shape
    votes = u_hat.detach() if detach_routing else u_hat
    b = Tensor._wrap(np.zeros((n, n_lower, n_upper)))
    history: List[np.ndarray] = []
    c = v = None

    for it in range(iterations):
        c = b.softmax(axis=2)
        history.append(c.data.copy())
        s = ops.einsum("nlu,nlud->nud", c, u_hat)
        v = _activate(s, activation_kind)
        if it < iterations - 1:
            agreement = ops.einsum("nlud,nud->nlu", votes, v.detach() if detach_routing else v)
            b = b + agreement

    return v, RoutingState(b=b, c=c, iterations=iterations, history=history)


def primary_capsules_forward(features: Tensor, params: PrimaryCapsuleParams,
                             training: bool = False) -> CapsuleGrid:
    if features.ndim != 4 or features.shape[1] != params.in_channels:
        raise ShapeError(
            f"primary capsules: expected [N,{params.in_channels},H,W] features, got {list(features.shape)}"
        )
    # 把 8 个并行卷积拼成一个卷积计算，结果与逐个计算一致
    stacked = Conv2dParams(
        kernel=ops.concat([c.kernel for c in params.convs], axis=0),
        bias=ops.concat([c.bias for c in params.convs], axis=0),
        stride=params.convs[0].stride,
        padding=params.convs[0].padding,
    )
    out = conv2d_forward(features, stacked)  # [N, D*T, gh, gw]
    if params.bn is not None:
        out = batchnorm_forward(out, params.bn, training)

    n, _, gh, gw = out.shape
    d, t = params.pose_dim, params.n_types
    poses = out.reshape(n, d, t, gh, gw).transpose(0, 3, 4, 2, 1).reshape(n, gh * gw * t, d)
    return CapsuleGrid(squash(poses, axis=-1), gh, gw, t)


def capsule_predictions(grid: CapsuleGrid, p: CapsuleLayerParams) -> Tensor:
    n_lower, _, d_in, _ = p.W.shape
    if grid.dim != d_in or grid.n_caps != n_lower:
        raise ShapeError(
            f"capsule layer: grid [{grid.n_caps} caps x {grid.dim}] does not match W {list(p.W.shape)}"
        )
    return ops.einsum("nld,lude->nlue", grid.poses, p.W)


def capsule_layer_forward(grid: CapsuleGrid, p: CapsuleLayerParams, iterations: int,
                          detach_routing: bool = False) -> Tensor:
    v, _ = capsule_layer_route(grid, p, iterations, detach_routing)
    return v


def capsule_layer_route(grid: CapsuleGrid, p: CapsuleLayerParams, iterations: int,
                        detach_routing: bool = False) -> Tuple[Tensor, RoutingState]:
    u_hat = capsule_predictions(grid, p)
    return dynamic_route(u_hat, iterations, p.activation_kind, detach_routing)


def _check_open_unit(name: str, values: np.ndarray) -> None:
    if np.any(values <= 0.0) or np.any(values >= 1.0):
        raise ShapeError(f"concrete dropout: {name} must lie strictly inside (0, 1)")


def concrete_dropout_mask(p: Tensor, u, t: float, standard_concrete: bool = False) -> Tensor:
    """z̃ = σ((1/t)(log p − log(1−p)) + log u − log(1−u))

    standard_concrete 切换为常见写法 σ((logit(p) + logit(u)) / t)。
    """
    if t <= 0:
        raise ShapeError(f"concrete dropout: temperature must be > 0, got {t}")
    u_data = u.data if isinstance(u, Tensor) else np.asarray(u, dtype=np.float64)
    _check_open_unit("p", p.data)
    _check_open_unit("u", u_data)
    if u_data.shape != p.shape:
        raise ShapeError(f"concrete dropout: shape mismatch p={list(p.shape)} u={list(u_data.shape)}")

    logit_p = p.log() - (1.0 - p).log()
    logit_u = Tensor._wrap(np.log(u_data) - np.log(1.0 - u_data))
    if standard_concrete:
        return ((logit_p + logit_u) * (1.0 / t)).sigmoid()
    return (logit_p * (1.0 / t) + logit_u).sigmoid()


def clamp_uniform(u: np.ndarray) -> np.ndarray:
    return np.clip(u, 1e-7, 1.0 - 1e-7)


def concrete_dropout_regularizer(p: Tensor) -> Tensor:
    """Σ p log p + (1−p) log(1−p)"""
    return (p * p.log() + (1.0 - p) * (1.0 - p).log()).sum()
