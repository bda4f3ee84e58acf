"""Deterministic numeric kernels: orthonormal DCT, counter-based Gaussian RNG, zigzag scans."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError

SUPPORTED_SIZES = (8, 16)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _check_size(size: int) -> None:
    if size not in SUPPORTED_SIZES:
        raise ConfigurationError(f"unsupported block size {size}; expected one of {SUPPORTED_SIZES}")


@lru_cache(maxsize=None)
def dct_matrix(size: int) -> np.ndarray:
    """Orthonormal DCT-II basis T, rows are frequencies: coeffs = T @ x @ T.T."""
    _check_size(size)
    k = np.arange(size)[:, None]
    n = np.arange(size)[None, :]
    t = np.cos(np.pi * (2 * n + 1) * k / (2 * size))
    t[0, :] *= np.sqrt(1.0 / size)
    t[1:, :] *= np.sqrt(2.0 / size)
    t.setflags(write=False)
    return t


def _as_block(block) -> np.ndarray:
    b = np.asarray(block, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ConfigurationError(f"expected a square block, got shape {b.shape}")
    _check_size(b.shape[0])
    return b


def dct2_forward(block) -> np.ndarray:
    b = _as_block(block)
    t = dct_matrix(b.shape[0])
    return t @ b @ t.T


def dct2_inverse(coeffs) -> np.ndarray:
    c = _as_block(coeffs)
    t = dct_matrix(c.shape[0])
    return t.T @ c @ t


# ---------------------------------------------------------------------------
# Counter-based RNG (SplitMix64 finalizer over a keyed counter, Box-Muller).


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x.astype(np.uint64, copy=True)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _mix_scalar(x: int) -> int:
    return int(_splitmix64(np.array([x & _MASK64], dtype=np.uint64))[0])


def stream_id_for(purpose: str) -> int:
    """Stable 64-bit stream id derived from a purpose label such as "sketch"."""
    return int.from_bytes(hashlib.blake2b(purpose.encode("utf-8"), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id", "counter"):
            v = getattr(self, name)
            if not 0 <= v <= _MASK64:
                raise ConfigurationError(f"{name} must be an unsigned 64-bit integer, got {v}")

    @classmethod
    def for_purpose(cls, seed: int, purpose: str) -> "RngStream":
        return cls(seed=seed, stream_id=stream_id_for(purpose))

    def substream(self, label: str | int) -> "RngStream":
        """Derive an independent stream keyed by (this stream, label)."""
        tag = stream_id_for(label) if isinstance(label, str) else int(label)
        return RngStream(seed=self.seed, stream_id=_mix_scalar(self.stream_id ^ _mix_scalar(tag + 1)))

    def _key(self) -> int:
        return _mix_scalar(self.seed ^ _mix_scalar(self.stream_id + 0x632BE59BD9B4E019))

    def uint64(self, n: int) -> tuple[np.ndarray, "RngStream"]:
        if n < 0:
            raise ConfigurationError("n must be non-negative")
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = np.uint64(self._key()) + idx * _GOLDEN
        return _splitmix64(state), replace(self, counter=(self.counter + n) & _MASK64)

    def uniform(self, n: int) -> tuple[np.ndarray, "RngStream"]:
        """Uniform draws in the open interval (0, 1)."""
        bits, nxt = self.uint64(n)
        return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53, nxt


def rng_gaussian(stream: RngStream, n: int, variance: float = 1.0) -> tuple[np.ndarray, RngStream]:
    """Draw ``n`` i.i.d. N(0, variance) samples; returns (samples, advanced stream)."""
    if not variance > 0 or not np.isfinite(variance):
        raise ConfigurationError(f"variance must be positive, got {variance}")
    pairs = (n + 1) // 2
    u, nxt = stream.uniform(2 * pairs)
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[:n] * np.sqrt(variance), nxt


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanOrder:
    size: int
    order: tuple[int, ...]

    def positions(self) -> list[tuple[int, int]]:
        return [divmod(i, self.size) for i in self.order]


@lru_cache(maxsize=None)
def zigzag_order(size: int) -> ScanOrder:
    _check_size(size)
    order = []
    for s in range(2 * size - 1):
        rows = range(max(0, s - size + 1), min(s, size - 1) + 1)
        if s % 2 == 0:
            rows = reversed(rows)
        order.extend(r * size + (s - r) for r in rows)
    return ScanOrder(size, tuple(order))


@lru_cache(maxsize=None)
def zigzag_index_array(size: int) -> np.ndarray:
    a = np.array(zigzag_order(size).order, dtype=np.intp)
    a.setflags(write=False)
    return a
