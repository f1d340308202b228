from __future__ import annotations

import contextvars
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from scn.core.random import SplitMix64
from scn.errors import ShapeError


@dataclass
class Node:
    primitive: str
    inputs: Tuple[Optional[int], ...]
    shape: Tuple[int, ...]
    saved: Dict[str, Any] = field(default_factory=dict)
    attrs: Dict[str, Any] = field(default_factory=dict)
    leaf: Optional["Tensor"] = None

    @property
    def is_leaf(self) -> bool:
        return self.primitive == "leaf"


class Graph:
    """Append-only tape. A node's inputs always precede it."""

    def __init__(self):
        self.nodes: List[Node] = []
        self._leaf_ids: Dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def track(self, tensor: "Tensor") -> int:
        if tensor._graph is self and tensor._node_id is not None:
            return tensor._node_id
        node_id = self._leaf_ids.get(id(tensor))
        if node_id is None:
            node_id = len(self.nodes)
            self.nodes.append(Node("leaf", (), tensor.shape, leaf=tensor))
            self._leaf_ids[id(tensor)] = node_id
        tensor._graph, tensor._node_id = self, node_id
        return node_id

    def add(self, primitive: str, inputs: Sequence[Optional[int]], shape: Tuple[int, ...],
            saved: Dict[str, Any], attrs: Dict[str, Any]) -> int:
        for input_id in inputs:
            if input_id is not None and input_id >= len(self.nodes):
                raise ShapeError(f"{primitive}: input node {input_id} not in graph")
        self.nodes.append(Node(primitive, tuple(inputs), shape, saved, attrs))
        return len(self.nodes) - 1

    def leaf_id(self, tensor: "Tensor") -> Optional[int]:
        return self._leaf_ids.get(id(tensor))

    def leaves(self) -> Iterator[Tuple[int, Node]]:
        for node_id in self._leaf_ids.values():
            yield node_id, self.nodes[node_id]


_active_graph: contextvars.ContextVar[Optional[Graph]] = contextvars.ContextVar("scn_graph", default=None)
_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("scn_grad_enabled", default=True)
_default_graph = Graph()


def current_graph() -> Graph:
    graph = _active_graph.get()
    return graph if graph is not None else _default_graph


def reset_default_graph() -> None:
    global _default_graph
    _default_graph = Graph()


def grad_enabled() -> bool:
    return _grad_enabled.get()


@contextmanager
def graph_scope() -> Iterator[Graph]:
    """每个训练步骤使用一张新的计算图"""
    graph = Graph()
    token = _active_graph.set(graph)
    try:
        yield graph
    finally:
        _active_graph.reset(token)


@contextmanager
def no_grad() -> Iterator[None]:
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


ArrayLike = Union[np.ndarray, Sequence, float, int]


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_graph", "_node_id", "__weakref__")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1)
        if 0 in array.shape:
            raise ShapeError(f"tensor shape entries must be >= 1, got {list(array.shape)}")
        self.data = array
        self.requires_grad = requires_grad
        self.name = name
        self._graph: Optional[Graph] = None
        self._node_id: Optional[int] = None

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "Tensor":
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.requires_grad = False
        tensor.name = None
        tensor._graph = None
        tensor._node_id = None
        return tensor

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={list(self.shape)} requires_grad={self.requires_grad}>"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def node_id(self) -> Optional[int]:
        if self._graph is current_graph():
            return self._node_id
        return None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {list(self.shape)}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def __getitem__(self, index) -> "Tensor":
        if not isinstance(index, tuple):
            index = (index,)
        return ops.slice_(self, index)

    def __add__(self, other): return ops.add(self, other)
    def __radd__(self, other): return ops.add(other, self)
    def __sub__(self, other): return ops.sub(self, other)
    def __rsub__(self, other): return ops.sub(other, self)
    def __mul__(self, other): return ops.mul(self, other)
    def __rmul__(self, other): return ops.mul(other, self)
    def __truediv__(self, other): return ops.div(self, other)
    def __rtruediv__(self, other): return ops.div(other, self)
    def __neg__(self): return ops.negate(self)
    def __matmul__(self, other): return ops.matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False): return ops.sum_(self, axis, keepdims)
    def mean(self, axis=None, keepdims: bool = False): return ops.mean(self, axis, keepdims)
    def max(self, axis=None, keepdims: bool = False): return ops.max_(self, axis, keepdims)
    def exp(self): return ops.exp(self)
    def log(self): return ops.log(self)
    def sqrt(self): return ops.sqrt(self)
    def square(self): return ops.square(self)
    def abs(self): return ops.abs_(self)
    def tanh(self): return ops.tanh(self)
    def sigmoid(self): return ops.sigmoid(self)
    def relu(self): return ops.relu(self)
    def softmax(self, axis: int = -1): return ops.softmax(self, axis)
    def l2norm(self, axis: int = -1): return ops.l2norm(self, axis)
    def reshape(self, *shape): return ops.reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)
    def transpose(self, *axes): return ops.transpose(self, axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else (axes or None))


def parameter(data: ArrayLike, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def constant(data: ArrayLike) -> Tensor:
    return Tensor(data, requires_grad=False)


def tensor_create(shape: Sequence[int], init: str = "zeros", *, value: float = 0.0,
                  lo: float = 0.0, hi: float = 1.0, mu: float = 0.0, sigma: float = 1.0,
                  seed: int = 0, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    """init 取值 zeros / ones / constant / uniform / normal"""
    shape = [int(s) for s in shape]
    if not shape:
        raise ShapeError("scalar must be shape [1]")
    if any(s < 1 for s in shape):
        raise ShapeError(f"shape entries must be >= 1, got {shape}")
    count = int(np.prod(shape))

    if init == "zeros":
        data = np.zeros(count)
    elif init == "ones":
        data = np.ones(count)
    elif init == "constant":
        data = np.full(count, float(value))
    elif init == "uniform":
        if not lo < hi:
            raise ShapeError(f"uniform init needs lo < hi, got lo={lo} hi={hi}")
        data = SplitMix64(seed).uniform(count, lo, hi)
    elif init == "normal":
        if sigma < 0:
            raise ShapeError(f"normal init needs sigma >= 0, got {sigma}")
        data = SplitMix64(seed).normal(count, mu, sigma)
    else:
        raise ShapeError(f"unknown init {init!r}")

    return Tensor(data.reshape(shape), requires_grad=requires_grad, name=name)


from scn.core import ops  # noqa: E402
