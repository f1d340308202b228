"""Binary checkpoint format.

Layout: ``b"SCNCKPT1"`` + payload + CRC32(payload) as little-endian u32.
Payload: version u16, tensor count u32, then per tensor a u16 name length,
the UTF-8 name, a u8 rank, rank u32 dims and little-endian float64 data.
"""
import logging
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Tuple, Union

import numpy as np

from scn.core.tensor import Tensor
from scn.errors import CheckpointError
from scn.nn.optim import OptimState

logger = logging.getLogger(__name__)

MAGIC = b"SCNCKPT1"
VERSION = 1
PARAM_PREFIX = "param/"
BUFFER_PREFIX = "buffer/"
OPTIM_PREFIX = "optim/"

ArrayOrTensor = Union[np.ndarray, Tensor]


@dataclass
class Checkpoint:
    params: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    buffers: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    optim_state: Optional[OptimState] = None

    def names(self) -> List[str]:
        names = [PARAM_PREFIX + k for k in self.params] + [BUFFER_PREFIX + k for k in self.buffers]
        if self.optim_state is not None:
            names += [name for name, _ in self.optim_state.named_tensors()]
        return names


def _array(value: ArrayOrTensor) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)


def encode_tensors(tensors: List[Tuple[str, np.ndarray]]) -> bytes:
    chunks = [struct.pack("<HI", VERSION, len(tensors))]
    for name, value in tensors:
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        array = np.ascontiguousarray(value, dtype="<f8")
        if array.ndim > 0xFF:
            raise CheckpointError(f"tensor {name} has too many dimensions")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(array.tobytes())
    return b"".join(chunks)


def decode_tensors(payload: bytes) -> List[Tuple[str, np.ndarray]]:
    try:
        version, count = struct.unpack_from("<HI", payload, 0)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        offset = 6
        tensors = []
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", payload, offset)
            offset += 2
            name = payload[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", payload, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", payload, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            nbytes = 8 * size
            if offset + nbytes > len(payload):
                raise CheckpointError("checkpoint corrupt: tensor data truncated")
            array = np.frombuffer(payload, dtype="<f8", count=size, offset=offset).astype(np.float64)
            offset += nbytes
            tensors.append((name, array.reshape(dims)))
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"checkpoint corrupt: {e}") from e
    if offset != len(payload):
        raise CheckpointError("checkpoint corrupt: trailing bytes in payload")
    return tensors


def save_checkpoint(params: Mapping[str, ArrayOrTensor], optim_state: Optional[OptimState],
                    path: Union[str, Path], buffers: Optional[Mapping[str, ArrayOrTensor]] = None) -> Path:
    tensors = [(PARAM_PREFIX + name, _array(v)) for name, v in params.items()]
    tensors += [(BUFFER_PREFIX + name, _array(v)) for name, v in (buffers or {}).items()]
    if optim_state is not None:
        tensors += optim_state.named_tensors()
    payload = encode_tensors(tensors)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(MAGIC + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    logger.debug(f"checkpoint saved: {path} ({len(tensors)} tensors)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not an SCN checkpoint (bad magic)")
    payload, (crc,) = data[len(MAGIC):-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint corrupt: CRC mismatch")

    ckpt = Checkpoint()
    optim_tensors = []
    for name, value in decode_tensors(payload):
        if name.startswith(PARAM_PREFIX):
            ckpt.params[name[len(PARAM_PREFIX):]] = value
        elif name.startswith(BUFFER_PREFIX):
            ckpt.buffers[name[len(BUFFER_PREFIX):]] = value
        elif name.startswith(OPTIM_PREFIX):
            optim_tensors.append((name, value))
        else:
            raise CheckpointError(f"checkpoint corrupt: unknown tensor {name!r}")
    if optim_tensors:
        ckpt.optim_state = OptimState.from_named_tensors(optim_tensors)
    return ckpt


def _assign(targets: Mapping[str, Tensor], source: Mapping[str, np.ndarray], kind: str) -> None:
    for name, tensor in targets.items():
        value = source.get(name)
        if value is None:
            raise CheckpointError(f"checkpoint is missing {kind} {name}")
        if value.shape != tensor.shape:
            raise CheckpointError(
                f"shape mismatch for {kind} {name}: checkpoint {list(value.shape)} vs model {list(tensor.shape)}"
            )
    for name, tensor in targets.items():
        tensor.data = source[name].copy()


def apply_checkpoint(model, ckpt: Checkpoint) -> None:
    """把 checkpoint 中的参数和 buffer 写回 encoder；按模型顺序报告第一个不匹配的张量"""
    params = model.named_parameters()
    extra = [name for name in ckpt.params if name not in params]
    if extra:
        raise CheckpointError(f"checkpoint has unknown parameter {extra[0]}")
    _assign(params, ckpt.params, "parameter")
    _assign(model.named_buffers(), ckpt.buffers, "buffer")
