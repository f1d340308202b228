"""Subject-holdout protocol: splits, folds, pair sampling and the split audit."""
import logging
import math
from dataclasses import dataclass, field
from typing import AbstractSet, Callable, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from scn.core.random import SplitMix64
from scn.core.tensor import Tensor
from scn.data.datasets import FaceDataset, FaceImage
from scn.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

ImageId = Tuple[int, int]  # (subject_id, image_index)
MAX_REDRAWS = 1000


@dataclass(frozen=True)
class SplitSpec:
    train_subjects: FrozenSet[int]
    test_subjects: FrozenSet[int]
    seed: int = 0

    def __post_init__(self):
        overlap = self.train_subjects & self.test_subjects
        if overlap:
            raise DataError(f"split is not subject-disjoint: {sorted(overlap)}")

    def subjects(self, side: str) -> FrozenSet[int]:
        if side == "train":
            return self.train_subjects
        if side == "test":
            return self.test_subjects
        raise ConfigError(f"unknown split side {side!r}")


@dataclass
class PairBatch:
    left: Tensor  # [N, 1, H, W]
    right: Tensor
    labels: np.ndarray  # [N]，0 = 同一人，1 = 不同人
    left_ids: List[ImageId] = field(default_factory=list)
    right_ids: List[ImageId] = field(default_factory=list)

    def __post_init__(self):
        n = self.labels.shape[0]
        if self.left.shape[0] != n or self.right.shape[0] != n:
            raise DataError(
                f"pair batch: left {list(self.left.shape)} / right {list(self.right.shape)} / labels [{n}] disagree"
            )

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subjects(self) -> FrozenSet[int]:
        return frozenset(s for s, _ in self.left_ids) | frozenset(s for s, _ in self.right_ids)

    def slice(self, start: int, stop: int) -> "PairBatch":
        return PairBatch(
            Tensor._wrap(self.left.data[start:stop]),
            Tensor._wrap(self.right.data[start:stop]),
            self.labels[start:stop],
            self.left_ids[start:stop],
            self.right_ids[start:stop],
        )

    def batches(self, batch_size: int) -> Iterator["PairBatch"]:
        for start in range(0, len(self), batch_size):
            yield self.slice(start, min(start + batch_size, len(self)))


def split_subjects(ds: FaceDataset, n_holdout: int, seed: int) -> SplitSpec:
    subjects = ds.subjects
    if not 0 <= n_holdout < len(subjects):
        raise ConfigError(f"holdout must lie in [0, {len(subjects)}), got {n_holdout}")
    order = SplitMix64(seed).derive("split").permutation(len(subjects))
    test = frozenset(subjects[i] for i in order[:n_holdout])
    return SplitSpec(frozenset(subjects) - test, test, seed)


def kfold(ds: FaceDataset, k: int, seed: int) -> List[SplitSpec]:
    if k < 2:
        raise ConfigError("k must be ≥ 2")
    subjects = ds.subjects
    if k > len(subjects):
        raise ConfigError(f"k={k} exceeds the number of subjects ({len(subjects)})")
    order = SplitMix64(seed).derive("kfold").permutation(len(subjects))
    shuffled = np.array(subjects)[order]
    everyone = frozenset(subjects)
    folds = []
    for chunk in np.array_split(shuffled, k):
        test = frozenset(int(s) for s in chunk)
        folds.append(SplitSpec(everyone - test, test, seed))
    return folds


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _stack(images: Sequence[FaceImage]) -> Tensor:
    return Tensor._wrap(np.stack([img.image.data for img in images]))


def pair_key(a: ImageId, b: ImageId) -> FrozenSet[ImageId]:
    return frozenset((a, b))


def _draw(draw: Callable[[], Tuple[FaceImage, FaceImage]], exclude: AbstractSet[FrozenSet[ImageId]],
          what: str) -> Tuple[FaceImage, FaceImage]:
    for _ in range(MAX_REDRAWS):
        a, b = draw()
        if pair_key((a.subject_id, a.image_index), (b.subject_id, b.image_index)) not in exclude:
            return a, b
    raise DataError(f"cannot draw a {what} pair outside the excluded set after {MAX_REDRAWS} tries")


def sample_pairs(ds: FaceDataset, spec: SplitSpec, n_pairs: int, pos_ratio: float, seed: int,
                 side: str = "train", exclude: AbstractSet[FrozenSet[ImageId]] = frozenset()) -> PairBatch:
    """round(n·pos_ratio) 个同人对，其余为异人对，最后整体打乱

    exclude 中的图像对（不分左右）会被重新抽取，用来让训练对避开验证切片。
    """
    if n_pairs < 1:
        raise ConfigError(f"n_pairs must be >= 1, got {n_pairs}")
    if not 0.0 <= pos_ratio <= 1.0:
        raise ConfigError(f"pos_ratio must lie in [0, 1], got {pos_ratio}")

    allowed = spec.subjects(side)
    groups = {s: imgs for s, imgs in ds.by_subject().items() if s in allowed}
    subjects = sorted(groups)
    n_pos = _round_half_up(n_pairs * pos_ratio)
    n_neg = n_pairs - n_pos

    # 只有一张图的 subject 不能组成正样本对，重新抽取其他 subject
    eligible = [s for s in subjects if len(groups[s]) >= 2]
    if n_pos and not eligible:
        raise DataError(f"cannot build matching pairs: no {side} subject has >= 2 images")
    if n_neg and len(subjects) < 2:
        raise DataError(f"cannot build non-matching pairs: {side} split has {len(subjects)} subject(s)")

    rng = SplitMix64(seed).derive("pairs", side)
    left: List[FaceImage] = []
    right: List[FaceImage] = []
    labels: List[float] = []

    def matching() -> Tuple[FaceImage, FaceImage]:
        imgs = groups[eligible[rng.integer(len(eligible))]]
        i = rng.integer(len(imgs))
        j = rng.integer(len(imgs) - 1)
        j = j + 1 if j >= i else j
        return imgs[i], imgs[j]

    def non_matching() -> Tuple[FaceImage, FaceImage]:
        a = rng.integer(len(subjects))
        b = rng.integer(len(subjects) - 1)
        b = b + 1 if b >= a else b
        imgs_a, imgs_b = groups[subjects[a]], groups[subjects[b]]
        return imgs_a[rng.integer(len(imgs_a))], imgs_b[rng.integer(len(imgs_b))]

    for _ in range(n_pos):
        a, b = _draw(matching, exclude, "matching")
        left.append(a)
        right.append(b)
        labels.append(0.0)

    for _ in range(n_neg):
        a, b = _draw(non_matching, exclude, "non-matching")
        left.append(a)
        right.append(b)
        labels.append(1.0)

    order = rng.permutation(n_pairs)
    left = [left[i] for i in order]
    right = [right[i] for i in order]
    return PairBatch(
        _stack(left),
        _stack(right),
        np.array(labels)[order],
        [(img.subject_id, img.image_index) for img in left],
        [(img.subject_id, img.image_index) for img in right],
    )


class PairStream:
    """按 epoch 确定性地生成训练 pair，同时提供验证切片与测试 pair"""

    def __init__(self, ds: FaceDataset, spec: SplitSpec, pairs_per_epoch: int, batch_size: int,
                 pos_ratio: float = 0.5, seed: int = 0, validation_fraction: float = 0.1,
                 test_pairs: int = 500, fixed_pairs: bool = False):
        if batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
        self.ds = ds
        self.spec = spec
        self.pairs_per_epoch = pairs_per_epoch
        self.batch_size = batch_size
        self.pos_ratio = pos_ratio
        self.seed = seed
        self.validation_fraction = validation_fraction
        self.n_test_pairs = test_pairs
        self.fixed_pairs = fixed_pairs
        self._root = SplitMix64(seed)
        self._validation: Optional[PairBatch] = None
        self._test: Optional[PairBatch] = None

    def _seed(self, *keys) -> int:
        return self._root.derive(*keys).seed

    def epoch_pairs(self, epoch: int) -> PairBatch:
        """pairs_per_epoch 个训练对，不含验证切片里的图像对"""
        key = 0 if self.fixed_pairs else epoch
        return sample_pairs(self.ds, self.spec, self.pairs_per_epoch, self.pos_ratio,
                            self._seed("epoch", key), "train", self.validation_keys())

    def epoch(self, epoch: int) -> List[PairBatch]:
        return list(self.epoch_pairs(epoch).batches(self.batch_size))

    def validation(self) -> Optional[PairBatch]:
        n = _round_half_up(self.pairs_per_epoch * self.validation_fraction)
        if n < 1:
            return None
        if self._validation is None:
            self._validation = sample_pairs(self.ds, self.spec, n, self.pos_ratio,
                                            self._seed("validation"), "train")
        return self._validation

    def validation_keys(self) -> FrozenSet[FrozenSet[ImageId]]:
        validation = self.validation()
        if validation is None:
            return frozenset()
        return frozenset(pair_key(a, b) for a, b in zip(validation.left_ids, validation.right_ids))

    def test(self) -> Optional[PairBatch]:
        if not self.spec.test_subjects or self.n_test_pairs < 1:
            return None
        if self._test is None:
            self._test = sample_pairs(self.ds, self.spec, self.n_test_pairs, self.pos_ratio,
                                      self._seed("test"), "test")
        return self._test


@dataclass
class SplitAudit:
    train_subjects: FrozenSet[int]
    test_subjects: FrozenSet[int]
    train_seen: FrozenSet[int]
    test_seen: FrozenSet[int]

    @property
    def overlap(self) -> FrozenSet[int]:
        return self.train_seen & self.test_seen

    @property
    def leaked(self) -> FrozenSet[int]:
        return (self.train_seen - self.train_subjects) | (self.test_seen - self.test_subjects)

    @property
    def ok(self) -> bool:
        return not self.overlap and not self.leaked

    def report(self) -> str:
        lines = [
            f"train_subjects = {' '.join(str(s) for s in sorted(self.train_subjects))}",
            f"test_subjects = {' '.join(str(s) for s in sorted(self.test_subjects))}",
            f"train_seen = {len(self.train_seen)}",
            f"test_seen = {len(self.test_seen)}",
            f"overlap = {' '.join(str(s) for s in sorted(self.overlap)) or 'none'}",
            f"status = {'ok' if self.ok else 'VIOLATION'}",
        ]
        return "\n".join(lines) + "\n"


def _seen(items: Iterable[Union[PairBatch, Iterable[int]]]) -> FrozenSet[int]:
    seen: FrozenSet[int] = frozenset()
    for item in items:
        seen |= item.subjects() if isinstance(item, PairBatch) else frozenset(item)
    return seen


def audit_split(split: SplitSpec, train_batches: Iterable[Union[PairBatch, Iterable[int]]],
                test_batches: Iterable[Union[PairBatch, Iterable[int]]] = ()) -> SplitAudit:
    """训练 / 测试 pair 流中出现过的 subject 必须各自落在对应的一侧且互不相交

    batches 可以是 PairBatch，也可以是已经收集好的 subject id 集合。
    """
    train_seen, test_seen = _seen(train_batches), _seen(test_batches)
    audit = SplitAudit(split.train_subjects, split.test_subjects, train_seen, test_seen)
    if audit.ok:
        logger.info(f"✅ zero-shot audit: {len(train_seen)} train / {len(test_seen)} test subjects, no overlap")
    else:
        logger.error(f"❌ zero-shot audit failed: overlap={sorted(audit.overlap)} leaked={sorted(audit.leaked)}")
    return audit
