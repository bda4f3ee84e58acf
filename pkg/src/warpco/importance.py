"""Importance maps from the sketched Jacobian of the restoration wrapper.

A map holds one non-negative weight per packed-frame sample, the diagonal of
``(S J_g)^T (S J_g)`` where ``S`` is a Gaussian sketch acting on the wrapper
output space. Maps are stored as float32; averaging accumulates in float64.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, FormatError, InputError, ResourceError, ShapeError
from .numerics import RngStream, rng_gaussian
from .wrapper import PackedFrame, TilingLayout, WrapperParams, pack_tiles, restore_vjp, unpack_tiles

MAP_MAGIC = b"IMP1"
MAP_VERSION = 1
EXACT_MAP_CAP = 1 << 16


class MapSource(enum.IntEnum):
    PER_FRAME = 0
    IFRAME_REUSE = 1
    FROZEN = 2


class LambdaRule(enum.Enum):
    PAPER_L2 = "paper_l2"
    MEAN_L1 = "mean_l1"


@dataclass(frozen=True, eq=False)
class ImportanceMap:
    weights: np.ndarray  # flat, n_p float32
    n_s: int
    sketch_seed: int
    source: MapSource = MapSource.PER_FRAME
    frame_index: int | None = None

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float32).ravel())
        if not np.all(np.isfinite(w)):
            raise InputError("importance weights must be finite")
        if np.any(w < 0):
            raise InputError("importance weights must be non-negative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "source", MapSource(self.source))

    @property
    def n_p(self) -> int:
        return self.weights.size

    def as_frame(self, shape: tuple[int, int]) -> np.ndarray:
        if shape[0] * shape[1] != self.n_p:
            raise ShapeError(f"map of {self.n_p} samples cannot cover a {shape} frame")
        return self.weights.reshape(shape).astype(np.float64)

    def __eq__(self, other):
        return (
            isinstance(other, ImportanceMap)
            and self.weights.tobytes() == other.weights.tobytes()
            and (self.n_s, self.sketch_seed, self.source, self.frame_index)
            == (other.n_s, other.sketch_seed, other.source, other.frame_index)
        )


@dataclass(frozen=True)
class SketchSpec:
    n_s: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n_s < 1:
            raise ConfigurationError(f"sketch dimension must be >= 1, got {self.n_s}")

    def matrix(self, n_f: int) -> np.ndarray:
        """Rows of S, shape (n_s, n_f), entries N(0, 1/n_s)."""
        stream = RngStream.for_purpose(self.seed, "sketch")
        s, _ = rng_gaussian(stream, self.n_s * n_f, 1.0 / self.n_s)
        return s.reshape(self.n_s, n_f)


@dataclass(frozen=True)
class MetricParams:
    lam: float
    tau: float
    alpha: float
    lambda_sse: float
    tau_tilde: float
    rule: LambdaRule = LambdaRule.PAPER_L2

    @property
    def is_degenerate(self) -> bool:
        return self.lam == 0.0 and self.tau == 0.0


def _linearization_point(z: PackedFrame, layout: TilingLayout) -> np.ndarray:
    samples = z.samples if isinstance(z, PackedFrame) else np.asarray(z, dtype=np.float64)
    if samples.shape != layout.frame_shape:
        raise ShapeError(f"frame shape {samples.shape} does not match layout {layout.frame_shape}")
    return unpack_tiles(samples, layout)


def _frame_weights(h_feat: np.ndarray, layout: TilingLayout) -> np.ndarray:
    return pack_tiles(h_feat, layout).samples  # padding tiles stay exactly 0


def sketched_rows(params_g2: WrapperParams, z, layout: TilingLayout, spec: SketchSpec) -> np.ndarray:
    """u_k = J_g^T v_k for each sketch row, shape (n_s, C', th, tw)."""
    point = _linearization_point(z, layout)
    c, h, w = params_g2.channels, layout.tile_height, layout.tile_width
    v = spec.matrix(c * h * w).reshape(spec.n_s, c, h, w)
    return restore_vjp(params_g2, point, v)


def compute_map(params_g2: WrapperParams, z, layout: TilingLayout, spec: SketchSpec) -> ImportanceMap:
    u = sketched_rows(params_g2, z, layout, spec)
    h = np.sum(u * u, axis=0)
    return ImportanceMap(_frame_weights(h, layout).ravel(), spec.n_s, spec.seed, MapSource.PER_FRAME)


def exact_jacobian(params_g2: WrapperParams, z, layout: TilingLayout, cap: int = EXACT_MAP_CAP) -> np.ndarray:
    """Dense Jacobian of g2 at unpack(z), shape (n_f, C'*th*tw); one VJP per output coordinate."""
    point = _linearization_point(z, layout)
    c, h, w = params_g2.channels, layout.tile_height, layout.tile_width
    n_f = c * h * w
    if n_f > cap:
        raise ResourceError(f"exact Jacobian needs {n_f} VJPs, above the cap of {cap}")
    rows = []
    eye_chunk = 512
    for start in range(0, n_f, eye_chunk):
        stop = min(start + eye_chunk, n_f)
        basis = np.zeros((stop - start, n_f))
        basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
        rows.append(restore_vjp(params_g2, point, basis.reshape(-1, c, h, w)).reshape(stop - start, -1))
    return np.concatenate(rows)


def exact_map(params_g2: WrapperParams, z, layout: TilingLayout, cap: int = EXACT_MAP_CAP) -> np.ndarray:
    """Exact diag(J_g^T J_g) laid out as a frame (float64); test oracle."""
    jac = exact_jacobian(params_g2, z, layout, cap)
    h = np.sum(jac * jac, axis=0).reshape(params_g2.reduced_channels, layout.tile_height, layout.tile_width)
    return _frame_weights(h, layout)


def derive_metric_params(
    imap: ImportanceMap | np.ndarray,
    alpha: float,
    lambda_sse: float,
    rule: LambdaRule = LambdaRule.PAPER_L2,
    n_p: int | None = None,
) -> MetricParams:
    """Split tau = alpha * tau_tilde and scale the Lagrangian from the map norm.

    PAPER_L2: tau_tilde = ||h||_2, lambda = (||h||_2 / n_p + tau) * lambda_sse.
    MEAN_L1:  tau_tilde = ||h||_1 / n_p, lambda = (||h||_1 / n_p + tau) * lambda_sse.
    """
    if alpha < 0 or lambda_sse < 0:
        raise ConfigurationError(f"alpha and lambda_sse must be non-negative (got {alpha}, {lambda_sse})")
    h = np.asarray(imap.weights if isinstance(imap, ImportanceMap) else imap, dtype=np.float64).ravel()
    n_p = h.size if n_p is None else n_p
    if n_p <= 0:
        raise ConfigurationError("n_p must be positive")
    rule = LambdaRule(rule)
    if rule is LambdaRule.PAPER_L2:
        norm = float(np.sqrt(np.sum(h * h)))
        tau_tilde = norm
        scale = norm / n_p
    else:
        tau_tilde = float(np.sum(h)) / n_p
        scale = tau_tilde
    tau = alpha * tau_tilde
    return MetricParams(
        lam=(scale + tau) * lambda_sse,
        tau=tau,
        alpha=alpha,
        lambda_sse=lambda_sse,
        tau_tilde=tau_tilde,
        rule=rule,
    )


@dataclass(frozen=True)
class GopStructure:
    length: int = 4

    def __post_init__(self):
        if self.length < 1:
            raise ConfigurationError(f"GOP length must be >= 1, got {self.length}")

    def is_intra(self, frame_index: int) -> bool:
        return frame_index % self.length == 0

    def intra_index(self, frame_index: int) -> int:
        return frame_index - frame_index % self.length


def assign_maps_iwa(
    gop: GopStructure,
    frames: Sequence[PackedFrame],
    params_g2: WrapperParams,
    layout: TilingLayout,
    spec: SketchSpec,
) -> list[ImportanceMap]:
    """One map per I frame; P frames reuse their GOP's I-frame map."""
    if len(frames) == 0:
        raise InputError("assign_maps_iwa needs at least one frame")
    maps: list[ImportanceMap] = []
    current = None
    for t, frame in enumerate(frames):
        if gop.is_intra(t):
            m = compute_map(params_g2, frame, layout, spec)
            current = ImportanceMap(m.weights, m.n_s, m.sketch_seed, MapSource.IFRAME_REUSE, t)
        maps.append(current)
    return maps


def average_maps(maps: Sequence[ImportanceMap]) -> ImportanceMap:
    if len(maps) == 0:
        raise InputError("average_maps needs at least one map")
    sizes = {m.n_p for m in maps}
    if len(sizes) != 1:
        raise InputError(f"maps have mixed lengths {sorted(sizes)}")
    acc = np.zeros(maps[0].n_p)
    for m in maps:
        acc += m.weights  # float32 values sum exactly in float64 for any realistic count
    first = maps[0]
    return ImportanceMap(acc / len(maps), first.n_s, first.sketch_seed, MapSource.FROZEN)


def freeze_map(
    params_g2: WrapperParams, frames: Sequence[PackedFrame], layout: TilingLayout, spec: SketchSpec
) -> ImportanceMap:
    return average_maps([compute_map(params_g2, f, layout, spec) for f in frames])


# ---------------------------------------------------------------------------
# File format: magic, u32 version, u32 n_p, u32 n_s, u64 seed, u8 source
# [+ u32 frame index for I-frame reuse], then n_p float32 weights.


def save_map(imap: ImportanceMap, path) -> None:
    head = MAP_MAGIC + struct.pack("<IIIQB", MAP_VERSION, imap.n_p, imap.n_s, imap.sketch_seed, int(imap.source))
    if imap.source is MapSource.IFRAME_REUSE:
        head += struct.pack("<I", imap.frame_index or 0)
    Path(path).write_bytes(head + imap.weights.astype("<f4").tobytes())


def load_map(path) -> ImportanceMap:
    data = Path(path).read_bytes()
    if data[:4] != MAP_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAP_MAGIC.decode()!r}", 0)
    fixed = struct.calcsize("<IIIQB")
    if len(data) < 4 + fixed:
        raise FormatError("truncated map header", len(data))
    version, n_p, n_s, seed, tag = struct.unpack_from("<IIIQB", data, 4)
    if version != MAP_VERSION:
        raise FormatError(f"unsupported map version {version}, expected {MAP_VERSION}", 4)
    if tag not in {s.value for s in MapSource}:
        raise FormatError(f"unknown source tag {tag}", 4 + fixed - 1)
    pos = 4 + fixed
    frame_index = None
    if tag == MapSource.IFRAME_REUSE:
        if len(data) < pos + 4:
            raise FormatError("truncated frame index", len(data))
        (frame_index,) = struct.unpack_from("<I", data, pos)
        pos += 4
    if len(data) != pos + 4 * n_p:
        raise FormatError(f"expected {n_p} weights, file holds {(len(data) - pos) // 4}", pos)
    weights = np.frombuffer(data, dtype="<f4", offset=pos, count=n_p)
    bad = np.flatnonzero(~np.isfinite(weights) | (weights < 0))
    if bad.size:
        raise FormatError(f"invalid weight {weights[bad[0]]} at index {bad[0]}", pos + 4 * int(bad[0]))
    return ImportanceMap(weights.copy(), n_s, seed, MapSource(tag), frame_index)
