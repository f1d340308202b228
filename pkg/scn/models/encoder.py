import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from scn.config import RunConfig
from scn.core.random import SplitMix64
from scn.core.tensor import Tensor, parameter
from scn.errors import ConfigError, DataError, ShapeError
from scn.nn.capsules import (
    CapsuleGrid,
    CapsuleLayerParams,
    PrimaryCapsuleParams,
    capsule_layer_route,
    clamp_uniform,
    concrete_dropout_mask,
    concrete_dropout_regularizer,
    primary_capsules_forward,
)
from scn.nn.losses import capsule_lengths
from scn.nn.layers import (
    BatchNormParams,
    Conv2dParams,
    DenseParams,
    LayerSpec,
    batchnorm_forward,
    conv2d_forward,
    dense_forward,
    dropout,
    init_params,
    make_batchnorm,
    make_conv,
    make_dense,
)

logger = logging.getLogger(__name__)

CONV1_KERNEL, CONV1_STRIDE = 9, 3
PRIMARY_KERNEL, PRIMARY_STRIDE = 9, 3


@dataclass
class Embedding:
    vec: Tensor  # [N, embed_dim]
    normalized: bool

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.vec.shape


@dataclass
class EncoderParams:
    conv1: Conv2dParams
    bn1: BatchNormParams
    primary: PrimaryCapsuleParams
    face: CapsuleLayerParams
    fc: DenseParams
    dropout_logit: Optional[Tensor] = None  # [face_caps]，仅 SDropCapNet

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        params: "OrderedDict[str, Tensor]" = OrderedDict()
        params.update(self.conv1.named_parameters("conv1"))
        params.update(self.bn1.named_parameters("bn1"))
        params.update(self.primary.named_parameters("primary"))
        params.update(self.face.named_parameters("face"))
        params.update(self.fc.named_parameters("fc"))
        if self.dropout_logit is not None:
            params["dropout.logit"] = self.dropout_logit
        return params

    def named_buffers(self) -> "OrderedDict[str, Tensor]":
        buffers: "OrderedDict[str, Tensor]" = OrderedDict()
        buffers.update(self.bn1.named_buffers("bn1"))
        buffers.update(self.primary.named_buffers("primary"))
        return buffers

    def layer_counts(self) -> Dict[str, int]:
        counts = {
            "conv1": self.conv1.parameter_count,
            "bn1": self.bn1.parameter_count,
            "primary": self.primary.parameter_count,
            "face": self.face.parameter_count,
            "fc": self.fc.parameter_count,
        }
        if self.dropout_logit is not None:
            counts["dropout"] = self.dropout_logit.size
        return counts

    @property
    def parameter_count(self) -> int:
        return sum(self.layer_counts().values())


def _check_images(images: Tensor, image_size: int) -> None:
    if images.ndim != 4 or images.shape[1] != 1:
        raise ShapeError(f"encoder: expected images [N,1,H,W], got {list(images.shape)}")
    if images.shape[2] != image_size or images.shape[3] != image_size:
        raise ShapeError(
            f"encoder: wrong spatial size {images.shape[2]}x{images.shape[3]}, expected {image_size}x{image_size}"
        )
    if np.min(images.data) < 0.0 or np.max(images.data) > 1.0:
        raise DataError("encoder: pixel values must lie in [0, 1]")


def _mode_flag(mode: str) -> bool:
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode == "train"


def _finish(features: Tensor, normalize: bool) -> Embedding:
    return Embedding(features.l2norm(axis=1) if normalize else features, normalize)


class CapsuleEncoder:
    """SCN / SDropCapNet encoder

    conv1 → bn → relu → primary capsules → face capsules (routing, tanh)
    → [concrete dropout] → 512 → dense → ℓ2
    """

    def __init__(self, params: EncoderParams, image_size: int = 100, routing_iters: int = 4,
                 dropout_rate: float = 0.2, concrete: bool = False, concrete_temperature: float = 0.1,
                 standard_concrete: bool = False, detach_routing: bool = False,
                 normalize_at: str = "embedding"):
        if concrete and params.dropout_logit is None:
            raise ConfigError("sdropcapnet needs a dropout_logit parameter")
        if normalize_at not in ("embedding", "capsules"):
            raise ConfigError(f"normalize_at must be 'embedding' or 'capsules', got {normalize_at!r}")
        self.params = params
        self.image_size = image_size
        self.routing_iters = routing_iters
        self.dropout_rate = dropout_rate
        self.concrete = concrete
        self.concrete_temperature = concrete_temperature
        self.standard_concrete = standard_concrete
        self.detach_routing = detach_routing
        self.normalize_at = normalize_at
        self.kind = "sdropcapnet" if concrete else "scn"

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        return self.params.named_parameters()

    def named_buffers(self) -> "OrderedDict[str, Tensor]":
        return self.params.named_buffers()

    @property
    def parameter_count(self) -> int:
        return self.params.parameter_count

    def keep_probability(self) -> Optional[Tensor]:
        if self.params.dropout_logit is None:
            return None
        return self.params.dropout_logit.sigmoid()

    def face_poses(self, images: Tensor, training: bool, rng: SplitMix64) -> Tensor:
        p = self.params
        h = conv2d_forward(images, p.conv1)
        h = batchnorm_forward(h, p.bn1, training).relu()
        h = dropout(h, self.dropout_rate, rng.derive("dropout", "conv1"), training)

        grid = primary_capsules_forward(h, p.primary, training)
        poses = dropout(grid.poses, self.dropout_rate, rng.derive("dropout", "primary"), training)
        grid = CapsuleGrid(poses, grid.grid_h, grid.grid_w, grid.n_types)

        v, _ = capsule_layer_route(grid, p.face, self.routing_iters, self.detach_routing)
        if self.concrete:
            v = self._concrete_dropout(v, training, rng.derive("concrete"))
        return v  # [N, face_caps, face_dim]

    def _concrete_dropout(self, v: Tensor, training: bool, rng: SplitMix64) -> Tensor:
        n, caps, _ = v.shape
        logit = self.params.dropout_logit.reshape(1, caps)
        if not training:
            return v * logit.sigmoid().reshape(1, caps, 1)
        p = (logit + Tensor._wrap(np.zeros((n, caps)))).sigmoid()
        u = clamp_uniform(rng.random(n * caps).reshape(n, caps))
        mask = concrete_dropout_mask(p, u, self.concrete_temperature, self.standard_concrete)
        return v * mask.reshape(n, caps, 1)

    def regularizer(self) -> Optional[Tensor]:
        p = self.keep_probability()
        return None if p is None else concrete_dropout_regularizer(p)

    def forward(self, images: Tensor, mode: str = "eval", seed: int = 0) -> Embedding:
        training = _mode_flag(mode)
        _check_images(images, self.image_size)
        rng = SplitMix64(seed).derive("encode")
        v = self.face_poses(images, training, rng)
        n, caps, dim = v.shape
        flat = v.reshape(n, caps * dim)
        if self.normalize_at == "capsules":
            flat = flat.l2norm(axis=1)
        out = dense_forward(flat, self.params.fc.W, self.params.fc.b)
        return _finish(out, self.normalize_at == "embedding")


class StandardEncoder:
    """对照用的小型 CNN：conv(32, 9×9/3)-bn-relu → conv(64, 5×5/2)-bn-relu → dense → ℓ2"""

    kind = "standard"

    def __init__(self, conv1: Conv2dParams, bn1: BatchNormParams, conv2: Conv2dParams,
                 bn2: BatchNormParams, fc: DenseParams, image_size: int = 100, dropout_rate: float = 0.2):
        self.conv1, self.bn1, self.conv2, self.bn2, self.fc = conv1, bn1, conv2, bn2, fc
        self.image_size = image_size
        self.dropout_rate = dropout_rate

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        params: "OrderedDict[str, Tensor]" = OrderedDict()
        params.update(self.conv1.named_parameters("conv1"))
        params.update(self.bn1.named_parameters("bn1"))
        params.update(self.conv2.named_parameters("conv2"))
        params.update(self.bn2.named_parameters("bn2"))
        params.update(self.fc.named_parameters("fc"))
        return params

    def named_buffers(self) -> "OrderedDict[str, Tensor]":
        buffers: "OrderedDict[str, Tensor]" = OrderedDict()
        buffers.update(self.bn1.named_buffers("bn1"))
        buffers.update(self.bn2.named_buffers("bn2"))
        return buffers

    @property
    def parameter_count(self) -> int:
        return sum(t.size for t in self.named_parameters().values())

    def regularizer(self) -> Optional[Tensor]:
        return None

    def forward(self, images: Tensor, mode: str = "eval", seed: int = 0) -> Embedding:
        training = _mode_flag(mode)
        _check_images(images, self.image_size)
        rng = SplitMix64(seed).derive("encode")
        h = batchnorm_forward(conv2d_forward(images, self.conv1), self.bn1, training).relu()
        h = dropout(h, self.dropout_rate, rng.derive("dropout", "conv1"), training)
        h = batchnorm_forward(conv2d_forward(h, self.conv2), self.bn2, training).relu()
        h = dropout(h, self.dropout_rate, rng.derive("dropout", "conv2"), training)
        n = h.shape[0]
        flat = h.reshape(n, h.size // n)
        return _finish(dense_forward(flat, self.fc.W, self.fc.b), True)


Encoder = Union[CapsuleEncoder, StandardEncoder]


def encode(images: Tensor, encoder: Encoder, mode: str = "eval", seed: int = 0) -> Embedding:
    return encoder.forward(images, mode, seed)


def _conv_out(size: int, kernel: int, stride: int, what: str) -> int:
    out = (size - kernel) // stride + 1
    if size < kernel or out < 1:
        raise ShapeError(f"{what}: kernel {kernel}x{kernel} larger than input {size}x{size}")
    return out


def primary_grid_size(image_size: int) -> int:
    conv1 = _conv_out(image_size, CONV1_KERNEL, CONV1_STRIDE, "conv1")
    return _conv_out(conv1, PRIMARY_KERNEL, PRIMARY_STRIDE, "primary capsules")


def build_capsule_params(seed: int, image_size: int = 100, conv_channels: int = 256, primary_types: int = 32,
                         primary_dim: int = 8, face_caps: int = 32, face_dim: int = 16, embed_dim: int = 20,
                         bn_in_capsules: bool = False, concrete: bool = False,
                         concrete_init_p: float = 0.9) -> EncoderParams:
    grid = primary_grid_size(image_size)
    n_lower = grid * grid * primary_types

    conv1 = make_conv(1, conv_channels, CONV1_KERNEL, CONV1_STRIDE, seed, "conv1")
    bn1 = make_batchnorm(conv_channels, "bn1")
    primary = PrimaryCapsuleParams(
        convs=[make_conv(conv_channels, primary_types, PRIMARY_KERNEL, PRIMARY_STRIDE, seed, f"primary.{i}")
               for i in range(primary_dim)],
        bn=make_batchnorm(primary_dim * primary_types, "primary.bn") if bn_in_capsules else None,
    )
    face_spec = LayerSpec("capsule", in_dim=primary_dim, out_dim=face_dim, n_lower=n_lower,
                          n_upper=face_caps, name="face")
    face = CapsuleLayerParams(init_params(face_spec, seed)["W"], activation_kind="tanh")
    fc = make_dense(face_caps * face_dim, embed_dim, seed, "fc")

    logit = None
    if concrete:
        logit = parameter(np.full(face_caps, math.log(concrete_init_p / (1.0 - concrete_init_p))),
                          name="dropout.logit")

    params = EncoderParams(conv1, bn1, primary, face, fc, logit)
    logger.info(
        f"📊 capsule encoder: {grid}x{grid}x{primary_types} primary capsules -> "
        f"{face_caps}x{face_dim} face capsules, face layer has {face.parameter_count:,} parameters"
    )
    return params


def build_standard(seed: int, image_size: int = 100, embed_dim: int = 20,
                   dropout_rate: float = 0.2) -> StandardEncoder:
    c1 = _conv_out(image_size, 9, 3, "standard conv1")
    c2 = _conv_out(c1, 5, 2, "standard conv2")
    conv1 = make_conv(1, 32, 9, 3, seed, "conv1")
    conv2 = make_conv(32, 64, 5, 2, seed, "conv2")
    fc = make_dense(64 * c2 * c2, embed_dim, seed, "fc")
    return StandardEncoder(conv1, make_batchnorm(32, "bn1"), conv2, make_batchnorm(64, "bn2"), fc,
                           image_size, dropout_rate)


def build_encoder(config: RunConfig) -> Encoder:
    if config.model == "standard":
        encoder = build_standard(config.seed, config.image_size, config.embed_dim, config.dropout_rate)
    else:
        concrete = config.model == "sdropcapnet"
        params = build_capsule_params(
            config.seed, config.image_size, config.conv_channels, config.primary_types, config.primary_dim,
            config.face_caps, config.face_dim, config.embed_dim, config.bn_in_capsules, concrete,
            config.concrete_init_p,
        )
        encoder = CapsuleEncoder(
            params, config.image_size, config.routing_iters, config.dropout_rate, concrete,
            config.concrete_temperature, config.standard_concrete, config.detach_routing, config.normalize_at,
        )
    logger.info(f"🚀 built {encoder.kind} encoder with {encoder.parameter_count:,} parameters")
    return encoder


class ClassCapsuleHead:
    """可选的胶囊分类头，输出 [N, n_class, d]，供 margin / spread loss 使用"""

    def __init__(self, n_lower: int, d_in: int, n_class: int, d_out: int = 16, seed: int = 0,
                 routing_iters: int = 3):
        spec = LayerSpec("capsule", in_dim=d_in, out_dim=d_out, n_lower=n_lower, n_upper=n_class, name="class_caps")
        self.layer = CapsuleLayerParams(init_params(spec, seed)["W"], activation_kind="squash")
        self.routing_iters = routing_iters

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict(self.layer.named_parameters("class_caps"))

    def forward(self, poses: Tensor) -> Tensor:
        if poses.ndim != 3:
            raise ShapeError(f"class head: expected poses [N, caps, d], got {list(poses.shape)}")
        grid = CapsuleGrid(poses, 1, 1, poses.shape[1])
        v, _ = capsule_layer_route(grid, self.layer, self.routing_iters)
        return v

    @staticmethod
    def activations(v: Tensor) -> Tensor:
        return capsule_lengths(v)
