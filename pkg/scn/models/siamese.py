from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from scn.config import RunConfig
from scn.core.tensor import Tensor
from scn.data.protocol import PairBatch
from scn.errors import ConfigError
from scn.models.encoder import Embedding, Encoder
from scn.nn.losses import METRICS, contrastive_loss, distance, double_margin_loss

LOSSES = ("contrastive", "double_margin")


class SiameseNetwork:
    """两个分支共享同一个 encoder；左右图像拼成一个 batch 只做一次前向"""

    def __init__(self, encoder: Encoder, loss: str = "contrastive", metric: str = "euclidean_sq",
                 m: float = 2.0, m_n: float = 0.2, m_p: float = 0.5, concrete_reg_weight: float = 0.0):
        if loss not in LOSSES:
            raise ConfigError(f"unknown loss {loss!r}")
        if metric not in METRICS:
            raise ConfigError(f"unknown metric {metric!r}")
        self.encoder = encoder
        self.loss_name = loss
        self.metric = metric
        self.m = m
        self.m_n = m_n
        self.m_p = m_p
        self.concrete_reg_weight = concrete_reg_weight

    @classmethod
    def from_config(cls, encoder: Encoder, config: RunConfig) -> "SiameseNetwork":
        return cls(encoder, config.loss, config.metric, config.margin, config.m_n, config.m_p,
                   config.concrete_reg_weight)

    def embed_pair(self, batch: PairBatch, mode: str = "eval", seed: int = 0) -> Tuple[Embedding, Embedding]:
        n = len(batch)
        images = Tensor._wrap(np.concatenate([batch.left.data, batch.right.data], axis=0))
        joint = self.encoder.forward(images, mode, seed)
        return (Embedding(joint.vec[0:n], joint.normalized),
                Embedding(joint.vec[n:2 * n], joint.normalized))

    def forward_pair(self, batch: PairBatch, mode: str = "eval", seed: int = 0) -> Tensor:
        e1, e2 = self.embed_pair(batch, mode, seed)
        return distance(e1, e2, self.metric)

    def pair_loss(self, D: Tensor, labels) -> Tensor:
        if self.loss_name == "contrastive":
            return contrastive_loss(D, labels, self.m, self.metric)
        return double_margin_loss(D, labels, self.m_n, self.m_p, self.metric)

    def loss(self, batch: PairBatch, mode: str = "eval", seed: int = 0) -> Tuple[Tensor, Tensor]:
        """返回 (loss, D)；训练模式下附加 concrete dropout 正则项"""
        D = self.forward_pair(batch, mode, seed)
        loss = self.pair_loss(D, batch.labels)
        if mode == "train" and self.concrete_reg_weight:
            reg = self.encoder.regularizer()
            if reg is not None:
                loss = loss + self.concrete_reg_weight * reg
        return loss, D

    def default_threshold(self) -> float:
        # 没有验证集时使用 margin 的一半（manhattan_exp 取 1 − m/2）
        if self.loss_name == "double_margin":
            mid = 0.5 * (self.m_n + self.m_p)
        else:
            mid = 0.5 * self.m
        return 1.0 - mid if self.metric == "manhattan_exp" else mid


def predict_match(D, threshold: float, metric: str) -> np.ndarray:
    d = D.data if isinstance(D, Tensor) else np.asarray(D, dtype=np.float64)
    if metric == "manhattan_exp":
        return d > threshold
    if metric in ("euclidean_sq", "cosine"):
        return d < threshold
    raise ConfigError(f"unknown metric {metric!r}")


def accuracy(D, labels, threshold: float, metric: str) -> float:
    matches = predict_match(D, threshold, metric)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    return float(np.mean(matches == (y == 0.0)))


def select_threshold(D, labels, metric: str, points: int = 101) -> Tuple[float, float]:
    """在 [min D, max D] 上做 101 点穷举搜索，准确率相同时取最小阈值"""
    d = D.data if isinstance(D, Tensor) else np.asarray(D, dtype=np.float64)
    candidates = np.linspace(float(np.min(d)), float(np.max(d)), points)
    scores = np.array([accuracy(d, labels, t, metric) for t in candidates])
    best = int(np.argmax(scores))
    return float(candidates[best]), float(scores[best])


@dataclass
class DensityHistogram:
    edges: np.ndarray  # [bins + 1]
    matching: np.ndarray  # [bins]
    non_matching: np.ndarray  # [bins]

    def rows(self):
        for i in range(len(self.matching)):
            yield self.edges[i], self.edges[i + 1], int(self.matching[i]), int(self.non_matching[i])


def histogram(D, labels, bins: int = 50, value_range: Optional[Tuple[float, float]] = None) -> DensityHistogram:
    d = D.data if isinstance(D, Tensor) else np.asarray(D, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    lo, hi = value_range if value_range is not None else (float(np.min(d)), float(np.max(d)))
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    matching, _ = np.histogram(d[y == 0.0], bins=edges)
    non_matching, _ = np.histogram(d[y == 1.0], bins=edges)
    return DensityHistogram(edges, matching, non_matching)


def overlap_coefficient(hist_a, hist_b) -> float:
    """Σ min(a/Σa, b/Σb)；1 表示两个分布完全重合"""
    a = np.asarray(hist_a, dtype=np.float64)
    b = np.asarray(hist_b, dtype=np.float64)
    if a.sum() == 0 or b.sum() == 0:
        return 0.0
    return float(np.minimum(a / a.sum(), b / b.sum()).sum())
