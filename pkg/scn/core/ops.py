"""Differentiable primitives.

Every primitive is a class with a ``forward`` returning ``(value, saved)`` and
a ``backward`` mapping the output gradient to one gradient per input (``None``
for inputs that do not need one). Elementwise binary primitives broadcast over
size-1 axes only; ranks must match.
"""
from __future__ import annotations

from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from scn.core.tensor import Tensor, current_graph, grad_enabled
from scn.errors import ShapeError

Grads = Tuple[Optional[np.ndarray], ...]

PRIMITIVES: Dict[str, Type["Primitive"]] = {}


def register(name: str) -> Callable[[Type["Primitive"]], Type["Primitive"]]:
    def decorator(cls: Type["Primitive"]) -> Type["Primitive"]:
        cls.name = name
        PRIMITIVES[name] = cls
        return cls
    return decorator


class Primitive:
    name = ""
    arity: Optional[int] = 1

    @staticmethod
    def forward(*xs: np.ndarray, **attrs: Any) -> Tuple[np.ndarray, Dict[str, Any]]:
        raise NotImplementedError

    @staticmethod
    def backward(g: np.ndarray, saved: Dict[str, Any], needs: Sequence[bool], **attrs: Any) -> Grads:
        raise NotImplementedError


def apply_primitive(op: str, inputs: Sequence[Tensor], **attrs: Any) -> Tensor:
    prim = PRIMITIVES.get(op)
    if prim is None:
        raise ShapeError(f"unknown primitive {op!r}")
    if prim.arity is not None and len(inputs) != prim.arity:
        raise ShapeError(f"{op}: expected {prim.arity} inputs, got {len(inputs)}")

    value, saved = prim.forward(*[t.data for t in inputs], **attrs)
    out = Tensor._wrap(np.asarray(value, dtype=np.float64))
    if out.data.ndim == 0:
        out.data = out.data.reshape(1)

    if grad_enabled() and any(t.requires_grad for t in inputs):
        graph = current_graph()
        ids = [graph.track(t) if t.requires_grad else None for t in inputs]
        node_id = graph.add(op, ids, out.shape, saved, attrs)
        out.requires_grad = True
        out._graph, out._node_id = graph, node_id
    return out


def as_tensor(value: Union[Tensor, float, int, np.ndarray], like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 0 and like is not None:
        array = array.reshape((1,) * like.ndim)
    return Tensor._wrap(array.reshape(1) if array.ndim == 0 else array)


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    axes = tuple(sorted(a % ndim for a in axis))
    if len(set(axes)) != len(axes):
        raise ShapeError(f"repeated axis in {axis}")
    return axes


def _broadcast_shape(op: str, a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    if len(a) != len(b):
        raise ShapeError(f"{op}: shape mismatch {list(a)} vs {list(b)} (ranks differ)")
    out = []
    for da, db in zip(a, b):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: shape mismatch {list(a)} vs {list(b)}")
        out.append(max(da, db))
    return tuple(out)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _reduced_shape(shape: Tuple[int, ...], axes: Tuple[int, ...], keepdims: bool) -> Tuple[int, ...]:
    if keepdims:
        return tuple(1 if i in axes else s for i, s in enumerate(shape))
    out = tuple(s for i, s in enumerate(shape) if i not in axes)
    return out or (1,)


class _Binary(Primitive):
    arity = 2


@register("add")
class Add(_Binary):
    @staticmethod
    def forward(a, b):
        _broadcast_shape("add", a.shape, b.shape)
        return a + b, {"a_shape": a.shape, "b_shape": b.shape}

    @staticmethod
    def backward(g, saved, needs):
        return (_unbroadcast(g, saved["a_shape"]) if needs[0] else None,
                _unbroadcast(g, saved["b_shape"]) if needs[1] else None)


@register("sub")
class Sub(_Binary):
    @staticmethod
    def forward(a, b):
        _broadcast_shape("sub", a.shape, b.shape)
        return a - b, {"a_shape": a.shape, "b_shape": b.shape}

    @staticmethod
    def backward(g, saved, needs):
        return (_unbroadcast(g, saved["a_shape"]) if needs[0] else None,
                _unbroadcast(-g, saved["b_shape"]) if needs[1] else None)


@register("mul")
class Mul(_Binary):
    @staticmethod
    def forward(a, b):
        _broadcast_shape("mul", a.shape, b.shape)
        return a * b, {"a": a, "b": b}

    @staticmethod
    def backward(g, saved, needs):
        a, b = saved["a"], saved["b"]
        return (_unbroadcast(g * b, a.shape) if needs[0] else None,
                _unbroadcast(g * a, b.shape) if needs[1] else None)


@register("div")
class Div(_Binary):
    @staticmethod
    def forward(a, b):
        _broadcast_shape("div", a.shape, b.shape)
        return a / b, {"a": a, "b": b}

    @staticmethod
    def backward(g, saved, needs):
        a, b = saved["a"], saved["b"]
        return (_unbroadcast(g / b, a.shape) if needs[0] else None,
                _unbroadcast(-g * a / (b * b), b.shape) if needs[1] else None)


@register("matmul")
class MatMul(_Binary):
    @staticmethod
    def forward(a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: shape mismatch {list(a.shape)} vs {list(b.shape)}")
        return a @ b, {"a": a, "b": b}

    @staticmethod
    def backward(g, saved, needs):
        a, b = saved["a"], saved["b"]
        return (g @ b.T if needs[0] else None, a.T @ g if needs[1] else None)


@register("einsum")
class Einsum(_Binary):
    """Two-operand contraction, e.g. ``nld,lude->nlue``."""

    @staticmethod
    def _parse(subscripts: str) -> Tuple[str, str, str]:
        inputs, out = subscripts.replace(" ", "").split("->")
        a, b = inputs.split(",")
        for part in (a, b):
            if len(set(part)) != len(part):
                raise ShapeError(f"einsum: repeated index in operand {part!r}")
        for part, other in ((a, b), (b, a)):
            missing = set(part) - set(other) - set(out)
            if missing:
                raise ShapeError(f"einsum: index {sorted(missing)} of {part!r} is summed out locally")
        return a, b, out

    @staticmethod
    def forward(a, b, subscripts: str):
        sa, sb, _ = Einsum._parse(subscripts)
        if a.ndim != len(sa) or b.ndim != len(sb):
            raise ShapeError(f"einsum {subscripts}: shape mismatch {list(a.shape)} vs {list(b.shape)}")
        sizes: Dict[str, int] = {}
        for sub, shape in ((sa, a.shape), (sb, b.shape)):
            for index, size in zip(sub, shape):
                if sizes.setdefault(index, size) != size:
                    raise ShapeError(f"einsum {subscripts}: shape mismatch {list(a.shape)} vs {list(b.shape)}")
        return np.einsum(subscripts, a, b, optimize=True), {"a": a, "b": b}

    @staticmethod
    def backward(g, saved, needs, subscripts: str):
        sa, sb, out = Einsum._parse(subscripts)
        a, b = saved["a"], saved["b"]
        ga = np.einsum(f"{out},{sb}->{sa}", g, b, optimize=True) if needs[0] else None
        gb = np.einsum(f"{out},{sa}->{sb}", g, a, optimize=True) if needs[1] else None
        return ga, gb


def _conv_windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return windows[:, :, ::stride, ::stride]


@register("conv2d")
class Conv2d(_Binary):
    """Valid cross-correlation of x [N,C,H,W] with w [O,C,kh,kw]."""

    @staticmethod
    def forward(x, w, stride: int = 1, padding: int = 0):
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"conv2d: shape mismatch {list(x.shape)} vs {list(w.shape)}")
        kh, kw = w.shape[2], w.shape[3]
        hp, wp = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
        if kh > hp or kw > wp:
            raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        windows = _conv_windows(xp, kh, kw, stride)
        out = np.einsum("nchwij,ocij->nohw", windows, w, optimize=True)
        return out, {"xp": xp, "w": w, "x_shape": x.shape}

    @staticmethod
    def backward(g, saved, needs, stride: int = 1, padding: int = 0):
        xp, w = saved["xp"], saved["w"]
        kh, kw = w.shape[2], w.shape[3]
        ho, wo = g.shape[2], g.shape[3]
        gx = gw = None
        if needs[1]:
            gw = np.einsum("nohw,nchwij->ocij", g, _conv_windows(xp, kh, kw, stride), optimize=True)
        if needs[0]:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += \
                        np.einsum("nohw,oc->nchw", g, w[:, :, i, j], optimize=True)
            h, wd = saved["x_shape"][2], saved["x_shape"][3]
            gx = gxp[:, :, padding:padding + h, padding:padding + wd]
        return gx, gw


class _Reduce(Primitive):
    @staticmethod
    def _expand(g: np.ndarray, saved: Dict[str, Any]) -> np.ndarray:
        return np.broadcast_to(g.reshape(saved["keep_shape"]), saved["in_shape"])


@register("sum")
class Sum(_Reduce):
    @staticmethod
    def forward(x, axis=None, keepdims=False):
        axes = _normalize_axes(axis, x.ndim)
        out = x.sum(axis=axes, keepdims=True)
        return out.reshape(_reduced_shape(x.shape, axes, keepdims)), \
            {"keep_shape": out.shape, "in_shape": x.shape}

    @staticmethod
    def backward(g, saved, needs, axis=None, keepdims=False):
        return (np.array(_Reduce._expand(g, saved)),)


@register("mean")
class Mean(_Reduce):
    @staticmethod
    def forward(x, axis=None, keepdims=False):
        axes = _normalize_axes(axis, x.ndim)
        out = x.mean(axis=axes, keepdims=True)
        count = int(np.prod([x.shape[a] for a in axes]))
        return out.reshape(_reduced_shape(x.shape, axes, keepdims)), \
            {"keep_shape": out.shape, "in_shape": x.shape, "count": count}

    @staticmethod
    def backward(g, saved, needs, axis=None, keepdims=False):
        return (_Reduce._expand(g, saved) / saved["count"],)


@register("max")
class Max(_Reduce):
    @staticmethod
    def forward(x, axis=None, keepdims=False):
        axes = _normalize_axes(axis, x.ndim)
        out = x.max(axis=axes, keepdims=True)
        mask = (x == out).astype(np.float64)
        mask /= mask.sum(axis=axes, keepdims=True)
        return out.reshape(_reduced_shape(x.shape, axes, keepdims)), \
            {"keep_shape": out.shape, "in_shape": x.shape, "mask": mask}

    @staticmethod
    def backward(g, saved, needs, axis=None, keepdims=False):
        return (_Reduce._expand(g, saved) * saved["mask"],)


@register("exp")
class Exp(Primitive):
    @staticmethod
    def forward(x):
        y = np.exp(x)
        return y, {"y": y}

    @staticmethod
    def backward(g, saved, needs):
        return (g * saved["y"],)


@register("log")
class Log(Primitive):
    @staticmethod
    def forward(x):
        return np.log(x), {"x": x}

    @staticmethod
    def backward(g, saved, needs):
        return (g / saved["x"],)


@register("sqrt")
class Sqrt(Primitive):
    @staticmethod
    def forward(x):
        y = np.sqrt(x)
        return y, {"y": y}

    @staticmethod
    def backward(g, saved, needs):
        return (g * 0.5 / saved["y"],)


@register("square")
class Square(Primitive):
    @staticmethod
    def forward(x):
        return x * x, {"x": x}

    @staticmethod
    def backward(g, saved, needs):
        return (2.0 * g * saved["x"],)


@register("abs")
class Abs(Primitive):
    @staticmethod
    def forward(x):
        return np.abs(x), {"sign": np.sign(x)}

    @staticmethod
    def backward(g, saved, needs):
        return (g * saved["sign"],)


@register("negate")
class Negate(Primitive):
    @staticmethod
    def forward(x):
        return -x, {}

    @staticmethod
    def backward(g, saved, needs):
        return (-g,)


@register("tanh")
class Tanh(Primitive):
    @staticmethod
    def forward(x):
        y = np.tanh(x)
        return y, {"y": y}

    @staticmethod
    def backward(g, saved, needs):
        y = saved["y"]
        return (g * (1.0 - y * y),)


@register("sigmoid")
class Sigmoid(Primitive):
    @staticmethod
    def forward(x):
        # 分段计算，避免 exp 溢出
        z = np.exp(-np.abs(x))
        y = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
        return y, {"y": y}

    @staticmethod
    def backward(g, saved, needs):
        y = saved["y"]
        return (g * y * (1.0 - y),)


@register("relu")
class Relu(Primitive):
    @staticmethod
    def forward(x):
        mask = x > 0
        return np.where(mask, x, 0.0), {"mask": mask}

    @staticmethod
    def backward(g, saved, needs):
        return (g * saved["mask"],)


@register("reshape")
class Reshape(Primitive):
    @staticmethod
    def forward(x, shape):
        shape = tuple(int(s) for s in shape)
        if -1 not in shape and int(np.prod(shape)) != x.size:
            raise ShapeError(f"reshape: shape mismatch {list(x.shape)} vs {list(shape)}")
        try:
            return x.reshape(shape), {"in_shape": x.shape}
        except ValueError as e:
            raise ShapeError(f"reshape: shape mismatch {list(x.shape)} vs {list(shape)}") from e

    @staticmethod
    def backward(g, saved, needs, shape):
        return (g.reshape(saved["in_shape"]),)


@register("transpose")
class Transpose(Primitive):
    @staticmethod
    def forward(x, axes=None):
        axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(a % x.ndim for a in axes)
        if sorted(axes) != list(range(x.ndim)):
            raise ShapeError(f"transpose: axes {list(axes)} invalid for shape {list(x.shape)}")
        return np.transpose(x, axes), {"inverse": tuple(np.argsort(axes))}

    @staticmethod
    def backward(g, saved, needs, axes=None):
        return (np.transpose(g, saved["inverse"]),)


@register("concat")
class Concat(Primitive):
    arity = None

    @staticmethod
    def forward(*xs, axis=0):
        if not xs:
            raise ShapeError("concat: no inputs")
        ref = xs[0]
        axis = axis % ref.ndim
        for x in xs[1:]:
            if x.ndim != ref.ndim or any(x.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != axis):
                raise ShapeError(f"concat: shape mismatch {list(ref.shape)} vs {list(x.shape)}")
        sizes = [x.shape[axis] for x in xs]
        return np.concatenate(xs, axis=axis), {"sizes": sizes, "axis": axis}

    @staticmethod
    def backward(g, saved, needs, axis=0):
        splits = np.cumsum(saved["sizes"])[:-1]
        parts = np.split(g, splits, axis=saved["axis"])
        return tuple(p if need else None for p, need in zip(parts, needs))


@register("slice")
class Slice(Primitive):
    """Basic slicing with ``slice`` objects only, so rank is preserved."""

    @staticmethod
    def forward(x, index):
        if any(not isinstance(s, slice) for s in index):
            raise ShapeError("slice: only slice objects are supported (use reshape to drop axes)")
        out = x[index]
        if 0 in out.shape:
            raise ShapeError(f"slice: empty result from shape {list(x.shape)}")
        return out, {"in_shape": x.shape}

    @staticmethod
    def backward(g, saved, needs, index):
        gx = np.zeros(saved["in_shape"])
        gx[index] = g
        return (gx,)


@register("softmax")
class Softmax(Primitive):
    @staticmethod
    def forward(x, axis=-1):
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)
        return y, {"y": y}

    @staticmethod
    def backward(g, saved, needs, axis=-1):
        y = saved["y"]
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)


@register("l2norm")
class L2Norm(Primitive):
    """x / sqrt(Σx² + eps²) along ``axis``."""

    @staticmethod
    def forward(x, axis=-1, eps=1e-12):
        norm = np.sqrt((x * x).sum(axis=axis, keepdims=True) + eps * eps)
        y = x / norm
        return y, {"y": y, "norm": norm}

    @staticmethod
    def backward(g, saved, needs, axis=-1, eps=1e-12):
        y, norm = saved["y"], saved["norm"]
        return ((g - y * (g * y).sum(axis=axis, keepdims=True)) / norm,)


# functional API

def _binary(op: str, a, b) -> Tensor:
    like = a if isinstance(a, Tensor) else b
    return apply_primitive(op, [as_tensor(a, like), as_tensor(b, like)])


def add(a, b) -> Tensor: return _binary("add", a, b)
def sub(a, b) -> Tensor: return _binary("sub", a, b)
def mul(a, b) -> Tensor: return _binary("mul", a, b)
def div(a, b) -> Tensor: return _binary("div", a, b)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("matmul", [a, b])


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("einsum", [as_tensor(a), as_tensor(b)], subscripts=subscripts)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    return apply_primitive("conv2d", [x, w], stride=int(stride), padding=int(padding))


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return apply_primitive("sum", [x], axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return apply_primitive("mean", [x], axis=axis, keepdims=keepdims)


def max_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return apply_primitive("max", [x], axis=axis, keepdims=keepdims)


def exp(x: Tensor) -> Tensor: return apply_primitive("exp", [x])
def log(x: Tensor) -> Tensor: return apply_primitive("log", [x])
def sqrt(x: Tensor) -> Tensor: return apply_primitive("sqrt", [x])
def square(x: Tensor) -> Tensor: return apply_primitive("square", [x])
def abs_(x: Tensor) -> Tensor: return apply_primitive("abs", [x])
def negate(x: Tensor) -> Tensor: return apply_primitive("negate", [as_tensor(x)])
def tanh(x: Tensor) -> Tensor: return apply_primitive("tanh", [x])
def sigmoid(x: Tensor) -> Tensor: return apply_primitive("sigmoid", [x])
def relu(x: Tensor) -> Tensor: return apply_primitive("relu", [x])


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return apply_primitive("reshape", [x], shape=tuple(shape))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    return apply_primitive("transpose", [x], axes=None if axes is None else tuple(axes))


def concat(xs: List[Tensor], axis: int = 0) -> Tensor:
    return apply_primitive("concat", list(xs), axis=axis)


def slice_(x: Tensor, index: Tuple[slice, ...]) -> Tensor:
    return apply_primitive("slice", [x], index=tuple(index))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return apply_primitive("softmax", [x], axis=axis)


def l2norm(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    return apply_primitive("l2norm", [x], axis=axis, eps=eps)
