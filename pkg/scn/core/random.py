"""SplitMix64 generator.

The n-th output of a stream seeded with ``s`` is ``mix(s + n * GOLDEN)``,
so blocks of draws are computed vectorised and the sequence is identical on
every platform.
"""
import zlib
from typing import Union

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_GOLDEN = np.uint64(GOLDEN)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)


def mix64(value: int) -> int:
    z = (value + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _key_to_int(key: Union[int, str]) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & MASK64


class SplitMix64:
    def __init__(self, seed: int = 0):
        self.seed = int(seed) & MASK64
        self.state = self.seed

    def derive(self, *keys: Union[int, str]) -> "SplitMix64":
        """派生一个独立的子随机流（不推进当前状态）"""
        value = self.seed
        for key in keys:
            value = mix64(value ^ mix64(_key_to_int(key)))
        return SplitMix64(value)

    def next_uint64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * _GOLDEN
        self.state = (self.state + n * GOLDEN) & MASK64
        return _mix(z)

    def random(self, n: int) -> np.ndarray:
        """[0, 1) 上的 53 位精度浮点数"""
        return (self.next_uint64(n) >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)

    def uniform(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return lo + (hi - lo) * self.random(n)

    def normal(self, n: int, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        u = self.random(2 * n)
        u1 = 1.0 - u[0::2]  # (0, 1]
        u2 = u[1::2]
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return mu + sigma * z

    def integers(self, n: int, high: int) -> np.ndarray:
        return np.minimum(np.floor(self.random(n) * high).astype(np.int64), high - 1)

    def integer(self, high: int) -> int:
        return int(self.integers(1, high)[0])

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.random(n), kind="stable")
