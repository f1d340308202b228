"""Gradient-check suite over every differentiable layer at tiny shapes."""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from scn.core.gradcheck import grad_check
from scn.core.random import SplitMix64
from scn.core.tensor import Tensor, parameter
from scn.data.datasets import synth_dataset
from scn.data.protocol import PairBatch
from scn.models.encoder import CapsuleEncoder, build_capsule_params
from scn.models.siamese import SiameseNetwork
from scn.nn.capsules import (
    CapsuleGrid,
    CapsuleLayerParams,
    capsule_layer_forward,
    concrete_dropout_mask,
    dynamic_route,
    squash,
)
from scn.nn.layers import Conv2dParams, batchnorm_forward, conv2d_forward, dense_forward, make_batchnorm
from scn.nn.losses import contrastive_loss, distance, double_margin_loss

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
EPS = 1e-5


@dataclass
class GradCheckRow:
    layer: str
    error: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error)) and self.error < self.tolerance


@dataclass
class GradCheckReport:
    rows: List[GradCheckRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def format(self) -> str:
        width = max(len(row.layer) for row in self.rows)
        lines = [f"{'layer'.ljust(width)}  max_rel_error  status"]
        for row in self.rows:
            lines.append(f"{row.layer.ljust(width)}  {row.error:.3e}      {'ok' if row.passed else 'FAIL'}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (tolerance {TOLERANCE:g})")
        return "\n".join(lines)


class _Draw:
    def __init__(self, seed: int):
        self.rng = SplitMix64(seed)

    def array(self, *shape: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
        return self.rng.uniform(int(np.prod(shape)), lo, hi).reshape(shape)

    def param(self, *shape: int, lo: float = -1.0, hi: float = 1.0) -> Tensor:
        return parameter(self.array(*shape, lo=lo, hi=hi))

    def const(self, *shape: int, lo: float = -1.0, hi: float = 1.0) -> Tensor:
        return Tensor._wrap(self.array(*shape, lo=lo, hi=hi))


def _weighted(out: Tensor, w: Tensor) -> Tensor:
    return (out * w).sum()


def _check_all(f: Callable[[], Tensor], tensors: List[Tensor], max_components: Optional[int] = None) -> float:
    return max(grad_check(lambda _x: f(), t, EPS, max_components) for t in tensors)


def check_conv2d(seed: int) -> float:
    d = _Draw(seed)
    x, kernel, bias = d.param(2, 2, 6, 6), d.param(3, 2, 3, 3), d.param(3)
    w = d.const(2, 3, 3, 3)
    conv = Conv2dParams(kernel, bias, stride=2, padding=1)
    return _check_all(lambda: _weighted(conv2d_forward(x, conv), w), [x, kernel, bias])


def check_batchnorm(seed: int) -> float:
    d = _Draw(seed)
    x = d.param(4, 3, 2, 2)
    bn = make_batchnorm(3, "gradcheck.bn")
    bn.gamma.data = d.array(3, lo=0.5, hi=1.5)
    bn.beta.data = d.array(3)
    w = d.const(4, 3, 2, 2)
    return _check_all(lambda: _weighted(batchnorm_forward(x, bn, True), w), [x, bn.gamma, bn.beta])


def check_dense(seed: int) -> float:
    d = _Draw(seed)
    x, W, b = d.param(3, 4), d.param(4, 5), d.param(5)
    w = d.const(3, 5)
    return _check_all(lambda: _weighted(dense_forward(x, W, b), w), [x, W, b])


def check_squash(seed: int) -> float:
    d = _Draw(seed)
    s, w = d.param(3, 4), d.const(3, 4)
    return _check_all(lambda: _weighted(squash(s), w), [s])


def check_routing(seed: int) -> float:
    d = _Draw(seed)
    u_hat, w = d.param(2, 3, 2, 4), d.const(2, 2, 4)
    return _check_all(lambda: _weighted(dynamic_route(u_hat, 2, "squash")[0], w), [u_hat])


def check_tanh_capsule_layer(seed: int) -> float:
    d = _Draw(seed)
    poses = d.param(2, 3, 4, lo=-0.5, hi=0.5)
    layer = CapsuleLayerParams(d.param(3, 2, 4, 5, lo=-0.5, hi=0.5), activation_kind="tanh")
    w = d.const(2, 2, 5)

    def f() -> Tensor:
        return _weighted(capsule_layer_forward(CapsuleGrid(poses, 1, 1, 3), layer, 2), w)

    return _check_all(f, [poses, layer.W])


def check_contrastive(seed: int) -> float:
    d = _Draw(seed)
    e1, e2 = d.param(4, 5), d.param(4, 5)
    y = np.array([0.0, 1.0, 0.0, 1.0])

    def f() -> Tensor:
        D = distance(e1.l2norm(axis=1), e2.l2norm(axis=1), "euclidean_sq")
        return contrastive_loss(D, y, 2.0)

    return _check_all(f, [e1, e2])


def check_double_margin(seed: int) -> float:
    d = _Draw(seed)
    e1, e2 = d.param(4, 5), d.param(4, 5)
    y = np.array([0.0, 1.0, 0.0, 1.0])

    def f() -> Tensor:
        D = distance(e1.l2norm(axis=1), e2.l2norm(axis=1), "cosine")
        return double_margin_loss(D, y, 0.2, 0.5, "cosine")

    return _check_all(f, [e1, e2])


def check_concrete_dropout(seed: int) -> float:
    d = _Draw(seed)
    logit, v = d.param(2, 3), d.param(2, 3, 4)
    u = d.array(2, 3, lo=0.05, hi=0.95)  # 固定的噪声
    w = d.const(2, 3, 4)

    def f() -> Tensor:
        mask = concrete_dropout_mask(logit.sigmoid(), u, 0.1)
        return _weighted(v * mask.reshape(2, 3, 1), w)

    return _check_all(f, [logit, v])


def check_siamese_scn(seed: int) -> float:
    """极小尺寸的完整 SCN，2 个 pair 的 contrastive loss，对 conv1 与 face 层抽查"""
    size = 33
    params = build_capsule_params(seed, image_size=size, conv_channels=2, primary_types=2, primary_dim=2,
                                  face_caps=2, face_dim=3, embed_dim=3)
    encoder = CapsuleEncoder(params, image_size=size, routing_iters=2, dropout_rate=0.0)
    net = SiameseNetwork(encoder, "contrastive", "euclidean_sq", m=2.0)
    images = synth_dataset(2, 2, seed, size).images
    batch = PairBatch(
        Tensor._wrap(np.stack([images[0].image.data, images[0].image.data])),
        Tensor._wrap(np.stack([images[1].image.data, images[2].image.data])),
        np.array([0.0, 1.0]),
    )

    def f() -> Tensor:
        return net.loss(batch, "train", seed)[0]

    return _check_all(f, [params.conv1.kernel, params.face.W, params.fc.W], max_components=12)


CHECKS: Dict[str, Callable[[int], float]] = {
    "conv2d": check_conv2d,
    "batchnorm": check_batchnorm,
    "dense": check_dense,
    "squash": check_squash,
    "routing(2 iters)": check_routing,
    "tanh_capsule_layer": check_tanh_capsule_layer,
    "contrastive_loss": check_contrastive,
    "double_margin_loss": check_double_margin,
    "concrete_dropout": check_concrete_dropout,
    "siamese_scn": check_siamese_scn,
}


def run_gradcheck_suite(seed: int = 0) -> GradCheckReport:
    report = GradCheckReport()
    for name, check in CHECKS.items():
        try:
            error = float(check(seed))
        except Exception as e:
            logger.error(f"❌ gradient check {name} raised: {e}")
            error = float("inf")
        row = GradCheckRow(name, error)
        report.rows.append(row)
        logger.info(f"{'✅' if row.passed else '❌'} {name}: max relative error {error:.3e}")
    return report
