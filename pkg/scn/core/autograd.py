from __future__ import annotations

from typing import Dict, Iterator, Mapping, Optional

import numpy as np

from scn.core.ops import PRIMITIVES
from scn.core.tensor import Graph, Tensor
from scn.errors import GraphError


class Gradients(Mapping[int, Tensor]):
    """node_id -> 梯度张量（仅包含 requires_grad 的叶子节点）"""

    def __init__(self, graph: Optional[Graph], grads: Dict[int, Tensor]):
        self.graph = graph
        self._grads = grads

    def __getitem__(self, node_id: int) -> Tensor:
        return self._grads[node_id]

    def __iter__(self) -> Iterator[int]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def of(self, tensor: Tensor) -> Tensor:
        node_id = self.graph.leaf_id(tensor) if self.graph is not None else None
        if node_id is None or node_id not in self._grads:
            return Tensor._wrap(np.zeros(tensor.shape))
        return self._grads[node_id]

    def array(self, tensor: Tensor) -> np.ndarray:
        return self.of(tensor).data


def backward(loss: Tensor) -> Gradients:
    if loss.shape != (1,):
        raise GraphError(f"backward needs a scalar loss of shape [1], got {list(loss.shape)}")
    if not loss.requires_grad or loss._graph is None:
        return Gradients(None, {})

    graph = loss._graph
    nodes = graph.nodes
    pending: Dict[int, np.ndarray] = {loss._node_id: np.ones(1)}

    for node_id in range(loss._node_id, -1, -1):
        g = pending.get(node_id)
        node = nodes[node_id]
        if g is None or node.is_leaf:
            continue
        del pending[node_id]
        needs = [i is not None for i in node.inputs]
        input_grads = PRIMITIVES[node.primitive].backward(g, node.saved, needs, **node.attrs)
        for input_id, input_grad in zip(node.inputs, input_grads):
            if input_id is None or input_grad is None:
                continue
            if input_id in pending:
                pending[input_id] = pending[input_id] + input_grad
            else:
                pending[input_id] = input_grad

    grads: Dict[int, Tensor] = {}
    for leaf_id, node in graph.leaves():
        g = pending.get(leaf_id)
        data = np.zeros(node.shape) if g is None else np.array(g, dtype=np.float64).reshape(node.shape)
        grads[leaf_id] = Tensor._wrap(data)
    return Gradients(graph, grads)
