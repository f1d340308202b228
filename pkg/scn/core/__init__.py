from scn.core.tensor import (
    Graph,
    Tensor,
    constant,
    current_graph,
    graph_scope,
    no_grad,
    parameter,
    reset_default_graph,
    tensor_create,
)
from scn.core.ops import PRIMITIVES, apply_primitive
from scn.core.autograd import Gradients, backward
from scn.core.gradcheck import grad_check
from scn.core.random import SplitMix64

__all__ = [
    "Graph",
    "Gradients",
    "PRIMITIVES",
    "SplitMix64",
    "Tensor",
    "apply_primitive",
    "backward",
    "constant",
    "current_graph",
    "grad_check",
    "graph_scope",
    "no_grad",
    "parameter",
    "reset_default_graph",
    "tensor_create",
]
