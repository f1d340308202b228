"""PGM (portable graymap) reader and writer.

Supports P2 (ASCII) and P5 (binary) with maxval up to 65535; binary samples
wider than one byte are big-endian. Pixels are returned as raw / maxval.
"""
import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from scn.core.tensor import Tensor
from scn.errors import PGMError

logger = logging.getLogger(__name__)

_WHITESPACE = b" \t\n\r\v\f"


def _read_header(data: bytes) -> Tuple[bytes, List[int], int]:
    """返回 (magic, [width, height, maxval], 像素数据起始偏移)"""
    if len(data) < 2 or data[:2] not in (b"P2", b"P5"):
        raise PGMError(PGMError.BAD_MAGIC, f"bad magic {data[:2]!r}, expected P2 or P5")
    magic = data[:2]
    pos = 2
    fields: List[int] = []
    while len(fields) < 3:
        if pos >= len(data):
            raise PGMError(PGMError.BAD_HEADER, "header ended before width, height and maxval")
        ch = data[pos:pos + 1]
        if ch not in _WHITESPACE and ch != b"#":
            start = pos
            while pos < len(data) and data[pos:pos + 1] not in _WHITESPACE and data[pos:pos + 1] != b"#":
                pos += 1
            token = data[start:pos]
            if not token.isdigit():
                raise PGMError(PGMError.BAD_HEADER, f"expected an integer in header, got {token!r}")
            fields.append(int(token))
        elif ch == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            pos += 1
    # 头部之后恰好一个空白字符
    if pos < len(data) and data[pos:pos + 1] in _WHITESPACE:
        pos += 1
    return magic, fields, pos


def load_pgm(data: bytes) -> Tensor:
    """解析 PGM 字节串，返回 [1, H, W] 的 [0,1] 灰度张量"""
    magic, (width, height, maxval), offset = _read_header(data)
    if width < 1 or height < 1:
        raise PGMError(PGMError.BAD_HEADER, f"invalid size {width}x{height}")
    if maxval < 1 or maxval > 65535:
        raise PGMError(PGMError.BAD_MAXVAL, f"maxval must lie in [1, 65535], got {maxval}")

    count = width * height
    if magic == b"P5":
        sample = 1 if maxval < 256 else 2
        payload = data[offset:offset + count * sample]
        if len(payload) < count * sample:
            raise PGMError(PGMError.TRUNCATED, "unexpected end of pixel data")
        raw = np.frombuffer(payload, dtype=np.uint8 if sample == 1 else ">u2").astype(np.int64)
    else:
        tokens = _ascii_samples(data[offset:])
        if len(tokens) < count:
            raise PGMError(PGMError.TRUNCATED, "unexpected end of pixel data")
        try:
            raw = np.array([int(t) for t in tokens[:count]], dtype=np.int64)
        except ValueError:
            raise PGMError(PGMError.BAD_PIXEL, "non-integer sample in P2 pixel data")

    if np.any(raw > maxval):
        raise PGMError(PGMError.BAD_PIXEL, f"sample exceeds maxval {maxval}")
    return Tensor((raw.astype(np.float64) / maxval).reshape(1, height, width))


def _ascii_samples(body: bytes) -> List[bytes]:
    samples: List[bytes] = []
    for line in body.splitlines():
        samples.extend(line.split(b"#", 1)[0].split())
    return samples


def read_pgm(path: Union[str, Path]) -> Tensor:
    path = Path(path)
    try:
        return load_pgm(path.read_bytes())
    except PGMError as e:
        logger.error(f"❌ 无法解析 PGM 文件 {path}: {e}")
        raise


def write_pgm(image: Union[Tensor, np.ndarray], path: Union[str, Path], maxval: int = 255) -> Path:
    """写出 P5 文件；image 为 [1,H,W] 或 [H,W]，取值 [0,1]"""
    array = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if array.ndim == 3:
        array = array[0]
    if not 1 <= maxval <= 65535:
        raise PGMError(PGMError.BAD_MAXVAL, f"maxval must lie in [1, 65535], got {maxval}")
    raw = np.rint(np.clip(array, 0.0, 1.0) * maxval)
    height, width = array.shape
    body = raw.astype(np.uint8 if maxval < 256 else ">u2").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{width} {height}\n{maxval}\n".encode("ascii") + body)
    return path
