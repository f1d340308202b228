from typing import Sequence, Union

import numpy as np

from scn.core.tensor import Tensor
from scn.errors import ConfigError, ShapeError

METRICS = ("euclidean_sq", "manhattan_exp", "cosine")

Labels = Union[Tensor, np.ndarray, Sequence[float]]


def _labels(y: Labels, n: int) -> Tensor:
    data = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    data = data.reshape(-1).astype(np.float64)
    if data.shape != (n,):
        raise ShapeError(f"labels: expected {n} labels, got {list(data.shape)}")
    if not np.all((data == 0.0) | (data == 1.0)):
        raise ShapeError("labels must be binary (0 = matching, 1 = non-matching)")
    return Tensor._wrap(data)


def _vec(e) -> Tensor:
    return e.vec if hasattr(e, "vec") else e


def distance(e1, e2, metric: str = "euclidean_sq") -> Tensor:
    """成对距离 D [N]；manhattan_exp 返回的是 [0,1] 内的相似度"""
    a, b = _vec(e1), _vec(e2)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"distance: shape mismatch {list(a.shape)} vs {list(b.shape)}")
    if metric == "euclidean_sq":
        return (a - b).square().sum(axis=1)
    if metric == "manhattan_exp":
        return (-(a - b).abs().sum(axis=1)).exp()
    if metric == "cosine":
        return 1.0 - (a.l2norm(axis=1) * b.l2norm(axis=1)).sum(axis=1)
    raise ConfigError(f"unknown metric {metric!r}")


def _as_distance(D: Tensor, metric: str) -> Tensor:
    # manhattan_exp 是相似度，内部换成 1 − D 当作距离
    return 1.0 - D if metric == "manhattan_exp" else D


def contrastive_loss(D: Tensor, y: Labels, m: float, metric: str = "euclidean_sq") -> Tensor:
    """mean(½(1−y)·D + ½·y·max(0, m−D))"""
    if m <= 0:
        raise ConfigError(f"contrastive margin must be > 0, got {m}")
    if metric == "manhattan_exp" and m > 1.0:
        raise ConfigError(f"margin m={m} outside (0, 1] for manhattan_exp")
    labels = _labels(y, D.shape[0])
    dist = _as_distance(D, metric)
    per_pair = 0.5 * (1.0 - labels) * dist + 0.5 * labels * (m - dist).relu()
    return per_pair.mean()


def double_margin_loss(D: Tensor, y: Labels, m_n: float = 0.2, m_p: float = 0.5,
                       metric: str = "euclidean_sq") -> Tensor:
    """mean((1−y)·max(0, D−m_n)² + y·max(m_p−D, 0)²)"""
    if not 0 < m_n < m_p:
        raise ConfigError(f"double margin needs 0 < m_n < m_p, got m_n={m_n} m_p={m_p}")
    labels = _labels(y, D.shape[0])
    dist = _as_distance(D, metric)
    per_pair = (1.0 - labels) * (dist - m_n).relu().square() + labels * (m_p - dist).relu().square()
    return per_pair.mean()


def _one_hot(targets, n: int, n_class: int) -> Tensor:
    idx = np.asarray(targets, dtype=np.int64).reshape(-1)
    if idx.shape != (n,) or np.any(idx < 0) or np.any(idx >= n_class):
        raise ShapeError(f"targets must be {n} class indices in [0, {n_class})")
    onehot = np.zeros((n, n_class))
    onehot[np.arange(n), idx] = 1.0
    return Tensor._wrap(onehot)


def capsule_lengths(v: Tensor) -> Tensor:
    return ((v * v).sum(axis=2) + 1e-18).sqrt()


def margin_loss(v: Tensor, targets, m_plus: float = 0.9, lam: float = 0.5) -> Tensor:
    """Σ_c T_c·max(0, m⁺−‖v_c‖)² + λ(1−T_c)·max(0, ‖v_c‖−m⁻)²，按 batch 取均值"""
    if v.ndim != 3:
        raise ShapeError(f"margin loss: expected v [N, n_class, d], got {list(v.shape)}")
    n, n_class, _ = v.shape
    T = _one_hot(targets, n, n_class)
    m_minus = 1.0 - m_plus
    lengths = capsule_lengths(v)
    present = T * (m_plus - lengths).relu().square()
    absent = lam * (1.0 - T) * (lengths - m_minus).relu().square()
    return (present + absent).sum(axis=1).mean()


def spread_loss(a: Tensor, targets, m: float) -> Tensor:
    """Σ_{i≠t} max(0, m−(a_t−a_i))²，按 batch 取均值"""
    if not 0 < m <= 1:
        raise ConfigError(f"spread margin must lie in (0, 1], got {m}")
    if a.ndim != 2:
        raise ShapeError(f"spread loss: expected a [N, n_class], got {list(a.shape)}")
    n, n_class = a.shape
    T = _one_hot(targets, n, n_class)
    a_t = (a * T).sum(axis=1, keepdims=True)
    gaps = (m - (a_t - a)).relu().square() * (1.0 - T)
    return gaps.sum(axis=1).mean()


def spread_margin(epoch: int, epochs: int, start: float = 0.2, end: float = 0.9) -> float:
    """margin 在训练过程中从 0.2 线性增加到 0.9"""
    if epochs <= 1:
        return end
    frac = min(max(epoch / (epochs - 1), 0.0), 1.0)
    return start + (end - start) * frac
