import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Tuple, Union

import numpy as np

from scn.core.autograd import Gradients
from scn.core.tensor import Tensor
from scn.errors import ConfigError, ShapeError


GradLike = Union[Tensor, np.ndarray]


@dataclass
class OptimState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    v_hat: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros(cls, params: Mapping[str, Tensor]) -> "OptimState":
        return cls(
            m={k: np.zeros(p.shape) for k, p in params.items()},
            v={k: np.zeros(p.shape) for k, p in params.items()},
            v_hat={k: np.zeros(p.shape) for k, p in params.items()},
            t=0,
        )

    def named_tensors(self) -> List[Tuple[str, np.ndarray]]:
        tensors: List[Tuple[str, np.ndarray]] = [("optim/t", np.array([float(self.t)]))]
        for slot in ("m", "v", "v_hat"):
            for name, value in getattr(self, slot).items():
                tensors.append((f"optim/{slot}/{name}", value))
        return tensors

    @classmethod
    def from_named_tensors(cls, tensors: Iterable[Tuple[str, np.ndarray]]) -> "OptimState":
        state = cls()
        for name, value in tensors:
            if name == "optim/t":
                state.t = int(value.reshape(-1)[0])
                continue
            _, slot, key = name.split("/", 2)
            getattr(state, slot)[key] = value
        return state


def _grad_array(grad: GradLike) -> np.ndarray:
    return grad.data if isinstance(grad, Tensor) else np.asarray(grad, dtype=np.float64)


def _check_shapes(params: Mapping[str, Tensor], grads: Mapping[str, GradLike]) -> None:
    for name, p in params.items():
        if name not in grads:
            raise ShapeError(f"missing gradient for parameter {name}")
        g = _grad_array(grads[name])
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {list(g.shape)} does not match parameter {name} {list(p.shape)}")


def amsgrad_step(params: Mapping[str, Tensor], grads: Mapping[str, GradLike], state: OptimState,
                 alpha: float = 0.001, theta1: float = 0.9, theta2: float = 0.999, eps: float = 1e-8,
                 flat_lr: bool = False) -> Tuple[Mapping[str, Tensor], OptimState]:
    """AMSGrad 更新，不做偏差修正，α_t = α/√t（flat_lr 时 α_t = α）"""
    if not (0.0 <= theta1 < 1.0 and 0.0 <= theta2 < 1.0):
        raise ConfigError(f"theta1/theta2 must lie in [0, 1), got {theta1}, {theta2}")
    _check_shapes(params, grads)

    state.t += 1
    alpha_t = alpha if flat_lr else alpha / math.sqrt(state.t)
    for name, p in params.items():
        g = _grad_array(grads[name])
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
            state.v_hat[name] = np.zeros(p.shape)
        m = theta1 * m + (1.0 - theta1) * g
        v = theta2 * state.v[name] + (1.0 - theta2) * (g * g)
        v_hat = np.maximum(state.v_hat[name], v)
        state.m[name], state.v[name], state.v_hat[name] = m, v, v_hat
        p.data = p.data - alpha_t * m / (np.sqrt(v_hat) + eps)
    return params, state


def sgd_step(params: Mapping[str, Tensor], grads: Mapping[str, GradLike], lr: float) -> Mapping[str, Tensor]:
    _check_shapes(params, grads)
    for name, p in params.items():
        p.data = p.data - lr * _grad_array(grads[name])
    return params


def _collect(params: Mapping[str, Tensor], grads: Union[Gradients, Mapping[str, GradLike]]) -> Dict[str, GradLike]:
    if isinstance(grads, Gradients):
        return {name: grads.of(p) for name, p in params.items()}
    return dict(grads)


class AMSGrad:
    def __init__(self, params: Mapping[str, Tensor], alpha: float = 0.001, theta1: float = 0.9,
                 theta2: float = 0.999, eps: float = 1e-8, flat_lr: bool = False):
        self.params = dict(params)
        self.alpha = alpha
        self.theta1 = theta1
        self.theta2 = theta2
        self.eps = eps
        self.flat_lr = flat_lr
        self.state = OptimState.zeros(self.params)

    def step(self, grads: Union[Gradients, Mapping[str, GradLike]]) -> None:
        amsgrad_step(self.params, _collect(self.params, grads), self.state,
                     self.alpha, self.theta1, self.theta2, self.eps, self.flat_lr)

    def load_state(self, state: OptimState) -> None:
        for name, p in self.params.items():
            for slot in ("m", "v", "v_hat"):
                value = getattr(state, slot).get(name)
                if value is None or value.shape != p.shape:
                    raise ShapeError(f"optimizer state {slot}/{name} missing or mismatched")
        self.state = state


class SGD:
    def __init__(self, params: Mapping[str, Tensor], lr: float = 0.01):
        self.params = dict(params)
        self.lr = lr
        self.state = OptimState()

    def step(self, grads: Union[Gradients, Mapping[str, GradLike]]) -> None:
        sgd_step(self.params, _collect(self.params, grads), self.lr)
        self.state.t += 1

    def load_state(self, state: OptimState) -> None:
        self.state = state
