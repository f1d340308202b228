from scn.nn.layers import (
    BatchNormParams,
    Conv2dParams,
    DenseParams,
    LayerSpec,
    batchnorm_forward,
    conv2d_forward,
    conv2d_reference,
    dense_forward,
    dropout,
    init_params,
    make_batchnorm,
    make_conv,
    make_dense,
)
from scn.nn.capsules import (
    CapsuleGrid,
    CapsuleLayerParams,
    PrimaryCapsuleParams,
    RoutingState,
    capsule_layer_forward,
    concrete_dropout_mask,
    dynamic_route,
    primary_capsules_forward,
    squash,
)
from scn.nn.losses import (
    contrastive_loss,
    distance,
    double_margin_loss,
    margin_loss,
    spread_loss,
    spread_margin,
)
from scn.nn.optim import SGD, AMSGrad, OptimState, amsgrad_step, sgd_step

__all__ = [
    "AMSGrad",
    "BatchNormParams",
    "CapsuleGrid",
    "CapsuleLayerParams",
    "Conv2dParams",
    "DenseParams",
    "LayerSpec",
    "OptimState",
    "PrimaryCapsuleParams",
    "RoutingState",
    "SGD",
    "amsgrad_step",
    "batchnorm_forward",
    "capsule_layer_forward",
    "concrete_dropout_mask",
    "contrastive_loss",
    "conv2d_forward",
    "conv2d_reference",
    "dense_forward",
    "distance",
    "double_margin_loss",
    "dropout",
    "dynamic_route",
    "init_params",
    "make_batchnorm",
    "make_conv",
    "make_dense",
    "margin_loss",
    "primary_capsules_forward",
    "sgd_step",
    "spread_loss",
    "spread_margin",
    "squash",
]
