from typing import Union

import numpy as np

from scn.core.tensor import Tensor
from scn.errors import ShapeError

LUMA = np.array([0.299, 0.587, 0.114])

ImageLike = Union[Tensor, np.ndarray]


def to_grayscale(image: ImageLike) -> np.ndarray:
    """[H,W] / [1,H,W] / [3,H,W] / [H,W,3] -> [H,W]"""
    array = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if array.ndim == 2:
        return array
    if array.ndim == 3 and array.shape[0] == 1:
        return array[0]
    if array.ndim == 3 and array.shape[0] == 3:
        return np.tensordot(LUMA, array, axes=(0, 0))
    if array.ndim == 3 and array.shape[2] == 3:
        return array @ LUMA
    raise ShapeError(f"preprocess: unsupported image shape {list(array.shape)}")


def source_coords(out_size: int, in_size: int) -> np.ndarray:
    # align_corners=false：src = (i + 0.5)·scale − 0.5，截断到 [0, in−1]
    scale = in_size / out_size
    src = (np.arange(out_size) + 0.5) * scale - 0.5
    return np.clip(src, 0.0, in_size - 1)


def _resize_axis(array: np.ndarray, out_size: int, axis: int) -> np.ndarray:
    in_size = array.shape[axis]
    if in_size == out_size:
        return array
    src = source_coords(out_size, in_size)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_size - 1)
    w = src - i0
    a = np.take(array, i0, axis=axis)
    b = np.take(array, i1, axis=axis)
    shape = [1, 1]
    shape[axis] = out_size
    w = w.reshape(shape)
    return (1.0 - w) * a + w * b


def resize_bilinear(array: np.ndarray, height: int, width: int) -> np.ndarray:
    if array.ndim != 2:
        raise ShapeError(f"resize: expected [H,W], got {list(array.shape)}")
    if array.shape[0] < 2 or array.shape[1] < 2:
        raise ShapeError(f"resize: image must be at least 2x2, got {list(array.shape)}")
    return _resize_axis(_resize_axis(array, height, 0), width, 1)


def preprocess(image: ImageLike, target: int = 100) -> Tensor:
    """灰度化 + 双线性缩放到 target×target，返回 [1, target, target]"""
    gray = to_grayscale(image)
    resized = resize_bilinear(gray, target, target)
    return Tensor(np.array(resized, dtype=np.float64).reshape(1, target, target))
