import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from PIL import Image

from scn.core.random import SplitMix64
from scn.core.tensor import Tensor
from scn.data.pgm import read_pgm
from scn.data.preprocess import preprocess
from scn.errors import DataError

logger = logging.getLogger(__name__)

SOURCES = ("att", "lfw", "synthetic")
_ORL_SUBJECT = re.compile(r"^s(\d+)$")
_ORL_IMAGE = re.compile(r"^(\d+)\.pgm$")
_JPEG_SUFFIXES = {".jpg", ".jpeg"}


@dataclass(frozen=True)
class FaceImage:
    subject_id: int
    image_index: int
    image: Tensor  # [1, H, W]，取值 [0, 1]


@dataclass
class FaceDataset:
    images: List[FaceImage]
    source: str
    subject_names: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DataError(f"unknown dataset source {self.source!r}")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def subjects(self) -> List[int]:
        return sorted({img.subject_id for img in self.images})

    @property
    def image_shape(self):
        return self.images[0].image.shape if self.images else None

    def by_subject(self) -> Dict[int, List[FaceImage]]:
        groups: Dict[int, List[FaceImage]] = {}
        for img in self.images:
            groups.setdefault(img.subject_id, []).append(img)
        return groups

    def restrict(self, subjects) -> "FaceDataset":
        keep = set(subjects)
        return FaceDataset([img for img in self.images if img.subject_id in keep], self.source,
                           {k: v for k, v in self.subject_names.items() if k in keep})


def _require_dir(root: Union[str, Path], what: str) -> Path:
    root = Path(root).expanduser()
    if not root.is_dir():
        raise DataError(f"{what} dataset directory not found: {root}")
    return root


def load_att(root: Union[str, Path], image_size: int = 100) -> FaceDataset:
    """ORL 目录结构 s{XX}/{Y}.pgm -> subject_id=XX, image_index=Y"""
    root = _require_dir(root, "AT&T")
    images: List[FaceImage] = []
    for subject_dir in sorted(root.iterdir(), key=lambda p: p.name):
        match = _ORL_SUBJECT.match(subject_dir.name)
        if not subject_dir.is_dir() or match is None:
            continue
        subject_id = int(match.group(1))
        for image_path in sorted(subject_dir.iterdir(), key=lambda p: p.name):
            image_match = _ORL_IMAGE.match(image_path.name)
            if image_match is None:
                continue
            image = preprocess(read_pgm(image_path), image_size)
            images.append(FaceImage(subject_id, int(image_match.group(1)), image))

    if not images:
        raise DataError(f"no s{{XX}}/{{Y}}.pgm images found under {root}")
    images.sort(key=lambda img: (img.subject_id, img.image_index))
    logger.info(f"📊 AT&T: {len(images)} images, {len({i.subject_id for i in images})} subjects from {root}")
    return FaceDataset(images, "att")


def _read_lfw_image(path: Path) -> Tensor:
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return Tensor(rgb)  # [H, W, 3]，灰度化在 preprocess 中完成


def load_lfw(root: Union[str, Path], min_images: int = 2, image_size: int = 100) -> FaceDataset:
    """每人一个目录，目录下为 JPEG（或同结构的 PGM 镜像）"""
    root = _require_dir(root, "LFW")
    images: List[FaceImage] = []
    names: Dict[int, str] = {}
    people = sorted(p for p in root.iterdir() if p.is_dir())
    for person in people:
        files = sorted(f for f in person.iterdir()
                       if f.suffix.lower() in _JPEG_SUFFIXES or f.suffix.lower() == ".pgm")
        if len(files) < min_images:
            continue
        subject_id = len(names) + 1
        names[subject_id] = person.name
        for index, path in enumerate(files, 1):
            images.append(FaceImage(subject_id, index, preprocess(_read_lfw_image(path), image_size)))

    if not images:
        raise DataError(f"no LFW identities with >= {min_images} images under {root}")
    logger.info(f"📊 LFW: {len(images)} images, {len(names)} identities from {root}")
    return FaceDataset(images, "lfw", names)


@dataclass(frozen=True)
class _Blob:
    cy: float
    cx: float
    sy: float
    sx: float
    angle: float
    amplitude: float


def _subject_blobs(subject_id: int, seed: int, size: int) -> List[_Blob]:
    rng = SplitMix64(seed).derive("synth", "template", subject_id)
    blobs = []
    for _ in range(2):
        cy, cx = rng.uniform(2, 0.25 * size, 0.75 * size)
        sy, sx = rng.uniform(2, 0.06 * size, 0.16 * size)
        angle, amplitude = rng.uniform(1, 0.0, math.pi)[0], rng.uniform(1, 0.6, 1.0)[0]
        blobs.append(_Blob(cy, cx, sy, sx, angle, amplitude))
    return blobs


def _render(blobs: List[_Blob], size: int, dy: float = 0.0, dx: float = 0.0, theta: float = 0.0) -> np.ndarray:
    ys, xs = np.meshgrid(np.arange(size) + 0.5, np.arange(size) + 0.5, indexing="ij")
    c = size / 2.0
    # 逆变换：先去平移，再绕图像中心反向旋转
    y0, x0 = ys - c - dy, xs - c - dx
    cos_t, sin_t = math.cos(-theta), math.sin(-theta)
    py = c + cos_t * y0 + sin_t * x0
    px = c - sin_t * y0 + cos_t * x0

    image = np.zeros((size, size))
    for b in blobs:
        ca, sa = math.cos(b.angle), math.sin(b.angle)
        u = ca * (py - b.cy) + sa * (px - b.cx)
        v = -sa * (py - b.cy) + ca * (px - b.cx)
        image += b.amplitude * np.exp(-0.5 * ((u / b.sy) ** 2 + (v / b.sx) ** 2))
    return np.clip(image, 0.0, 1.0)


def synth_template(subject_id: int, seed: int, size: int = 100) -> Tensor:
    """某个 subject 的基础图像（无抖动）"""
    return Tensor(_render(_subject_blobs(subject_id, seed, size), size).reshape(1, size, size))


def synth_dataset(n_subjects: int = 40, n_per_subject: int = 10, seed: int = 0,
                  size: int = 100, max_shift: float = 3.0, max_rotation_deg: float = 10.0) -> FaceDataset:
    """两个高斯斑块组成的人脸替身；同一 subject 的实例只有小幅平移和旋转"""
    if n_subjects < 1 or n_per_subject < 1:
        raise DataError(f"synthetic dataset needs >= 1 subject and image, got {n_subjects}x{n_per_subject}")
    max_theta = math.radians(max_rotation_deg)
    images: List[FaceImage] = []
    for subject_id in range(1, n_subjects + 1):
        blobs = _subject_blobs(subject_id, seed, size)
        for index in range(1, n_per_subject + 1):
            rng = SplitMix64(seed).derive("synth", "instance", subject_id, index)
            dy, dx = rng.uniform(2, -max_shift, max_shift)
            theta = rng.uniform(1, -max_theta, max_theta)[0]
            image = _render(blobs, size, dy, dx, theta)
            images.append(FaceImage(subject_id, index, Tensor(image.reshape(1, size, size))))
    logger.debug(f"synthetic dataset: {n_subjects} subjects x {n_per_subject} images, seed={seed}")
    return FaceDataset(images, "synthetic")


def load_dataset(name: str, data_dir: Optional[Union[str, Path]], image_size: int = 100,
                 seed: int = 0, synth_subjects: int = 40, synth_per_subject: int = 10) -> FaceDataset:
    if name == "synthetic":
        return synth_dataset(synth_subjects, synth_per_subject, seed, image_size)
    if data_dir is None:
        raise DataError(f"dataset {name!r} needs a data directory")
    root = Path(data_dir).expanduser()
    if name == "att":
        att_root = root / "att" if (root / "att").is_dir() else root
        return load_att(att_root, image_size)
    if name == "lfw":
        lfw_root = root / "lfw" if (root / "lfw").is_dir() else root
        return load_lfw(lfw_root, image_size=image_size)
    raise DataError(f"unknown dataset {name!r}")
