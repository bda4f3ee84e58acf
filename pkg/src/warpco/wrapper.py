"""The sandwich wrappers.

Reduction ``g1`` is a per-pixel (1x1) channel mix. Restoration ``g2`` is a
zero-padded 3x3 convolution, an elementwise tanh (skipped when
``bypass`` is set) and a 1x1 convolution back to the feature channels.
Arrays follow the (channels, height, width) convention; most functions also
accept extra leading batch dimensions.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, InputError, ShapeError, TrainingError
from .numerics import RngStream, rng_gaussian

log = logging.getLogger(__name__)

PARAM_MAGIC = b"WRP1"
FEATURE_MAGIC = b"FTN1"


@dataclass(frozen=True, eq=False)
class WrapperParams:
    g1_weight: np.ndarray  # (C', C)
    g1_bias: np.ndarray  # (C',)
    conv3_weight: np.ndarray  # (C_mid, C', 3, 3)
    conv3_bias: np.ndarray  # (C_mid,)
    conv1_weight: np.ndarray  # (C, C_mid)
    conv1_bias: np.ndarray  # (C,)
    bypass: bool = False

    def __post_init__(self):
        for name in self.array_names():
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        cr, c = self.g1_weight.shape
        cm = self.conv3_weight.shape[0]
        expected = {
            "g1_bias": (cr,),
            "conv3_weight": (cm, cr, 3, 3),
            "conv3_bias": (cm,),
            "conv1_weight": (c, cm),
            "conv1_bias": (c,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @staticmethod
    def array_names() -> tuple[str, ...]:
        return ("g1_weight", "g1_bias", "conv3_weight", "conv3_bias", "conv1_weight", "conv1_bias")

    @property
    def channels(self) -> int:
        return self.g1_weight.shape[1]

    @property
    def reduced_channels(self) -> int:
        return self.g1_weight.shape[0]

    @property
    def mid_channels(self) -> int:
        return self.conv3_weight.shape[0]

    def __eq__(self, other):
        if not isinstance(other, WrapperParams) or self.bypass != other.bypass:
            return False
        return all(
            getattr(self, n).shape == getattr(other, n).shape
            and getattr(self, n).tobytes() == getattr(other, n).tobytes()
            for n in self.array_names()
        )


def init_params(channels: int, reduced: int, mid: int, seed: int, bypass: bool = False) -> WrapperParams:
    """Seeded Gaussian weights with variance 1/fan-in, zero biases."""
    stream = RngStream.for_purpose(seed, "wrapper-init")
    g1, stream = rng_gaussian(stream, reduced * channels, 1.0 / channels)
    k3, stream = rng_gaussian(stream, mid * reduced * 9, 1.0 / (9 * reduced))
    k1, stream = rng_gaussian(stream, channels * mid, 1.0 / mid)
    return WrapperParams(
        g1_weight=g1.reshape(reduced, channels),
        g1_bias=np.zeros(reduced),
        conv3_weight=k3.reshape(mid, reduced, 3, 3),
        conv3_bias=np.zeros(mid),
        conv1_weight=k1.reshape(channels, mid),
        conv1_bias=np.zeros(channels),
        bypass=bypass,
    )


def _f64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def _check_channels(x: np.ndarray, expected: int, what: str) -> None:
    if x.ndim < 3 or x.shape[-3] != expected:
        raise ShapeError(f"{what}: expected {expected} channels in a (..., C, H, W) array, got shape {x.shape}")


# ---------------------------------------------------------------------------
# Convolution kernels


def _windows(x: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 neighbourhoods, shape (..., C, H, W, 3, 3)."""
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    return sliding_window_view(np.pad(x, pad), (3, 3), axis=(-2, -1))


def _conv3x3(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    nd = x.ndim
    out = np.tensordot(_windows(x), k, axes=([nd - 3, nd, nd + 1], [1, 2, 3]))
    return np.moveaxis(out, -1, -3)


def _conv3x3_input_grad(g: np.ndarray, k: np.ndarray) -> np.ndarray:
    # adjoint of a zero-padded correlation: correlate with the flipped, transposed kernel
    flipped = np.ascontiguousarray(k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return _conv3x3(g, flipped)


def _conv3x3_weight_grad(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    win = _windows(x).reshape((-1,) + x.shape[-3:] + (3, 3))
    g = g.reshape((-1,) + g.shape[-3:])
    return np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))


def _mix(w: np.ndarray, x: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Per-pixel channel mix (1x1 convolution)."""
    lead, (c, h, wd) = x.shape[:-3], x.shape[-3:]
    out = (w @ x.reshape(lead + (c, h * wd))).reshape(lead + (w.shape[0], h, wd))
    if b is not None:
        out += b[:, None, None]
    return out


# ---------------------------------------------------------------------------
# Forward passes and VJP


def reduce_forward(params: WrapperParams, y) -> np.ndarray:
    y = _f64(y)
    _check_channels(y, params.channels, "reduce_forward")
    return _mix(_f64(params.g1_weight), y, _f64(params.g1_bias))


def _restore_pre(params: WrapperParams, z: np.ndarray) -> np.ndarray:
    return _conv3x3(z, _f64(params.conv3_weight)) + _f64(params.conv3_bias)[:, None, None]


def restore_forward(params: WrapperParams, z) -> np.ndarray:
    z = _f64(z)
    _check_channels(z, params.reduced_channels, "restore_forward")
    a = _restore_pre(params, z)
    m = a if params.bypass else np.tanh(a)
    return _mix(_f64(params.conv1_weight), m, _f64(params.conv1_bias))


def restore_vjp(params: WrapperParams, z, cotangent) -> np.ndarray:
    """Return J_g(z)^T v for the restoration network linearized at ``z``.

    ``cotangent`` may carry leading batch dimensions (one VJP per entry);
    ``z`` is a single (C', H, W) linearization point.
    """
    z = _f64(z)
    v = _f64(cotangent)
    _check_channels(z, params.reduced_channels, "restore_vjp point")
    _check_channels(v, params.channels, "restore_vjp cotangent")
    if z.ndim != 3 or v.shape[-2:] != z.shape[-2:]:
        raise ShapeError(f"cotangent spatial shape {v.shape[-2:]} does not match point {z.shape}")
    dm = _mix(_f64(params.conv1_weight).T, v)
    if not params.bypass:
        t = np.tanh(_restore_pre(params, z))
        dm = dm * (1.0 - t * t)
    return _conv3x3_input_grad(dm, _f64(params.conv3_weight))


def sandwich(params: WrapperParams, y) -> np.ndarray:
    return restore_forward(params, reduce_forward(params, y))


# ---------------------------------------------------------------------------
# Fitting


@dataclass(frozen=True)
class FitConfig:
    reduced_channels: int = 4
    mid_channels: int = 8
    learning_rate: float = 0.1
    iterations: int = 1500
    seed: int = 0
    checkpoint_every: int = 25
    bypass: bool = False
    # reduced channels the restoration network is forced to ignore
    ignore_channels: tuple[int, ...] = ()


@dataclass
class FitResult:
    params: WrapperParams
    loss_trace: list[float] = field(default_factory=list)


def _loss_and_grads(p: dict, y: np.ndarray, bypass: bool, mask: np.ndarray):
    z = _mix(p["g1_weight"], y, p["g1_bias"])
    a = _conv3x3(z, p["conv3_weight"] * mask) + p["conv3_bias"][:, None, None]
    m = a if bypass else np.tanh(a)
    out = _mix(p["conv1_weight"], m, p["conv1_bias"])
    r = out - y
    loss = float(np.mean(r * r))
    g_out = 2.0 * r / r.size
    grads = {
        "conv1_weight": np.einsum("nchw,nohw->co", g_out, m),
        "conv1_bias": g_out.sum(axis=(0, 2, 3)),
    }
    g_m = _mix(p["conv1_weight"].T, g_out)
    g_a = g_m if bypass else g_m * (1.0 - m * m)
    grads["conv3_weight"] = _conv3x3_weight_grad(g_a, z) * mask
    grads["conv3_bias"] = g_a.sum(axis=(0, 2, 3))
    g_z = _conv3x3_input_grad(g_a, p["conv3_weight"] * mask)
    grads["g1_weight"] = np.einsum("nohw,nchw->oc", g_z, y)
    grads["g1_bias"] = g_z.sum(axis=(0, 2, 3))
    return loss, grads


def fit_wrappers(dataset: Sequence[np.ndarray], config: FitConfig = FitConfig()) -> FitResult:
    """Fit g1/g2 for idempotence by full-batch gradient descent.

    The objective is the mean squared error of ``g2(g1(y))`` against ``y``
    (averaged over tensors and samples). Loss is evaluated every
    ``checkpoint_every`` iterations and the best parameters seen are kept.
    """
    if len(dataset) == 0:
        raise InputError("fit_wrappers needs a non-empty dataset")
    shapes = {np.shape(t) for t in dataset}
    if len(shapes) != 1:
        raise InputError(f"dataset tensors have mixed shapes: {sorted(shapes)}")
    y = np.stack([_f64(t) for t in dataset])
    if y.ndim != 4:
        raise InputError(f"expected (C, H, W) tensors, got shape {y.shape[1:]}")
    c = y.shape[1]
    init = init_params(c, config.reduced_channels, config.mid_channels, config.seed, config.bypass)
    p = {n: _f64(getattr(init, n)).copy() for n in WrapperParams.array_names()}
    mask = np.ones_like(p["conv3_weight"])
    for ch in config.ignore_channels:
        mask[:, ch] = 0.0
    p["conv3_weight"] *= mask

    best_loss, best = np.inf, None
    trace: list[float] = []
    for it in range(config.iterations + 1):
        loss, grads = _loss_and_grads(p, y, config.bypass, mask)
        if not np.isfinite(loss):
            raise TrainingError("loss became non-finite", it)
        if it % config.checkpoint_every == 0 or it == config.iterations:
            if loss < best_loss:
                best_loss, best = loss, {n: a.copy() for n, a in p.items()}
            trace.append(best_loss)
            log.debug("iter %d loss %.6g (best %.6g)", it, loss, best_loss)
        if it == config.iterations:
            break
        for n in p:
            p[n] -= config.learning_rate * grads[n]
    params = WrapperParams(**best, bypass=config.bypass)
    return FitResult(params=params, loss_trace=trace)


def reconstruction_mse(params: WrapperParams, dataset: Sequence[np.ndarray]) -> float:
    y = np.stack([_f64(t) for t in dataset])
    r = sandwich(params, y) - y
    return float(np.mean(r * r))


# ---------------------------------------------------------------------------
# Tiling


@dataclass(frozen=True)
class TilingLayout:
    rows: int
    cols: int
    channels: int
    tile_height: int
    tile_width: int

    def __post_init__(self):
        if min(self.rows, self.cols, self.channels, self.tile_height, self.tile_width) < 1:
            raise ShapeError(f"layout dimensions must be positive: {self}")
        if self.rows * self.cols < self.channels:
            raise ShapeError(f"{self.rows}x{self.cols} grid cannot hold {self.channels} channels")

    @classmethod
    def square(cls, channels: int, tile_height: int, tile_width: int) -> "TilingLayout":
        cols = int(np.ceil(np.sqrt(channels)))
        rows = int(np.ceil(channels / cols))
        return cls(rows, cols, channels, tile_height, tile_width)

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.rows * self.tile_height, self.cols * self.tile_width

    @property
    def n_samples(self) -> int:
        h, w = self.frame_shape
        return h * w

    def tile_slices(self, k: int) -> tuple[slice, slice]:
        r, c = divmod(k, self.cols)
        th, tw = self.tile_height, self.tile_width
        return slice(r * th, (r + 1) * th), slice(c * tw, (c + 1) * tw)

    def padding_mask(self) -> np.ndarray:
        """Boolean frame mask, True on samples that belong to no channel."""
        mask = np.ones(self.frame_shape, dtype=bool)
        for k in range(self.channels):
            mask[self.tile_slices(k)] = False
        return mask


@dataclass(frozen=True, eq=False)
class PackedFrame:
    samples: np.ndarray
    layout: TilingLayout

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.shape != self.layout.frame_shape:
            raise ShapeError(f"frame shape {s.shape} does not match layout {self.layout.frame_shape}")
        object.__setattr__(self, "samples", s)


def pack_tiles(z, layout: TilingLayout) -> PackedFrame:
    z = _f64(z)
    if z.shape != (layout.channels, layout.tile_height, layout.tile_width):
        raise ShapeError(
            f"features of shape {z.shape} do not fit layout "
            f"({layout.channels}, {layout.tile_height}, {layout.tile_width})"
        )
    frame = np.zeros(layout.frame_shape)
    for k in range(layout.channels):
        frame[layout.tile_slices(k)] = z[k]
    return PackedFrame(frame, layout)


def unpack_tiles(frame: PackedFrame | np.ndarray, layout: TilingLayout | None = None) -> np.ndarray:
    if isinstance(frame, PackedFrame):
        layout = layout or frame.layout
        samples = frame.samples
    else:
        samples = _f64(frame)
    if layout is None:
        raise ShapeError("unpack_tiles needs a layout")
    if samples.shape[-2:] != layout.frame_shape:
        raise ShapeError(f"frame shape {samples.shape} does not match layout {layout.frame_shape}")
    return np.stack([samples[(...,) + layout.tile_slices(k)] for k in range(layout.channels)], axis=-3)


# ---------------------------------------------------------------------------
# Serialization


def save_params(params: WrapperParams, path) -> None:
    parts = [
        PARAM_MAGIC,
        struct.pack("<III", params.channels, params.reduced_channels, params.mid_channels),
        struct.pack("<B", int(params.bypass)),
    ]
    for name in WrapperParams.array_names():
        arr = getattr(params, name).astype("<f4").ravel()
        parts.append(struct.pack("<I", arr.size))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _check_magic(r: _Reader, magic: bytes) -> None:
    got = r.take(4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic.decode()!r}", 0)


def load_params(path) -> WrapperParams:
    r = _Reader(Path(path).read_bytes())
    _check_magic(r, PARAM_MAGIC)
    c, cr, cm = r.unpack("<III", "dimensions")
    (bypass,) = r.unpack("<B", "bypass flag")
    if bypass > 1:
        raise FormatError(f"bypass flag must be 0 or 1, got {bypass}", r.pos - 1)
    shapes = [(cr, c), (cr,), (cm, cr, 3, 3), (cm,), (c, cm), (c,)]
    arrays = {}
    for name, shape in zip(WrapperParams.array_names(), shapes):
        start = r.pos
        (n,) = r.unpack("<I", f"{name} length")
        if n != int(np.prod(shape)):
            raise FormatError(f"{name} length {n} inconsistent with dimensions {shape}", start)
        arrays[name] = np.frombuffer(r.take(4 * n, name), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after parameter arrays", r.pos)
    try:
        return WrapperParams(**arrays, bypass=bool(bypass))
    except ShapeError as exc:
        raise FormatError(str(exc), r.pos) from None


def save_features(frames: Sequence[np.ndarray], path) -> None:
    arr = np.stack([np.asarray(f, dtype=np.float64) for f in frames]).astype("<f4")
    if arr.ndim != 4:
        raise ShapeError(f"expected a sequence of (C, H, W) tensors, got {arr.shape}")
    n, c, h, w = arr.shape
    Path(path).write_bytes(FEATURE_MAGIC + struct.pack("<IIII", c, h, w, n) + arr.tobytes())


def load_features(path) -> list[np.ndarray]:
    r = _Reader(Path(path).read_bytes())
    _check_magic(r, FEATURE_MAGIC)
    c, h, w, n = r.unpack("<IIII", "dimensions")
    count = c * h * w * n
    data = np.frombuffer(r.take(4 * count, "samples"), dtype="<f4")
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after samples", r.pos)
    frames = data.astype(np.float64).reshape(n, c, h, w)
    if not np.all(np.isfinite(frames)):
        raise FormatError("non-finite samples", FEATURE_MAGIC.__len__() + 16)
    return list(frames)


def identity_params(channels: int, mid: int | None = None) -> WrapperParams:
    """g1 = identity, g2 = identity with the nonlinearity bypassed."""
    mid = channels if mid is None else mid
    k = np.zeros((mid, channels, 3, 3))
    k[np.arange(channels), np.arange(channels), 1, 1] = 1.0
    w1 = np.zeros((channels, mid))
    w1[np.arange(channels), np.arange(channels)] = 1.0
    return WrapperParams(
        g1_weight=np.eye(channels),
        g1_bias=np.zeros(channels),
        conv3_weight=k,
        conv3_bias=np.zeros(mid),
        conv1_weight=w1,
        conv1_bias=np.zeros(channels),
        bypass=True,
    )


def with_bypass(params: WrapperParams, bypass: bool) -> WrapperParams:
    return replace(params, bypass=bypass)
