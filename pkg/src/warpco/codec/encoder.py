"""Block-based encoder with per-block Lagrangian RDO under a pluggable metric.

Each 16x16 CTU is coded either whole or as four 8x8 leaves. A leaf is Skip
(prediction only) or Residual (DCT + RDOQ at one of the allowed QP offsets,
with a motion vector on P frames). Every candidate is actually coded, so the
rates compared by the RDO are exact bit counts.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import ConfigurationError, ShapeError
from ..importance import (
    GopStructure,
    ImportanceMap,
    LambdaRule,
    MetricParams,
    SketchSpec,
    assign_maps_iwa,
    compute_map,
    derive_metric_params,
)
from ..numerics import dct2_forward
from ..wrapper import PackedFrame, TilingLayout, WrapperParams
from .bitio import BitWriter
from .predict import I_FRAME, P_FRAME, motion_search, mv_bits, predict_inter, predict_intra_dc
from .quant import dequantize_residual, lambda_sse_from_qp, quant_step_from_qp, rdoq_quantize
from .rdo import DistortionMetric, block_distortion, rdo_select

MAGIC = b"WAC1"
VERSION = 1
QP_OFFSET_TABLE = (-2, 0, 2)
# normalized samples have this standard deviation, comparable to 8-bit video texture
SAMPLE_SCALE = 32.0
HEADER_FORMAT = "<4sBHHHBBHBBBB"

SKIP = 0
RESIDUAL = 1


class RdoMode(enum.IntEnum):
    SSE = 0
    WA = 1
    IWA = 2
    FWA = 3

    @classmethod
    def parse(cls, name: "str | RdoMode") -> "RdoMode":
        if isinstance(name, RdoMode):
            return name
        try:
            return cls[name.upper()]
        except KeyError:
            raise ConfigurationError(f"unknown RDO mode {name!r}; expected one of sse, wa, iwa, fwa") from None


@dataclass(frozen=True)
class EncoderConfig:
    qp: int = 24
    qp_offsets: tuple[int, ...] = (-2, 0, 2)
    gop_length: int = 4
    search_range: int = 2
    lambda_c: float = 0.57
    ctu_size: int = 16
    allow_split: bool = True
    alpha: float = 0.05
    rule: LambdaRule = LambdaRule.PAPER_L2

    def __post_init__(self):
        if not 0 <= self.qp <= 51:
            raise ConfigurationError(f"QP must lie in [0, 51], got {self.qp}")
        offsets = tuple(self.qp_offsets)
        if not offsets or 0 not in offsets or any(o not in QP_OFFSET_TABLE for o in offsets):
            raise ConfigurationError(f"qp_offsets must be a non-empty subset of {QP_OFFSET_TABLE} containing 0")
        if len(set(offsets)) != len(offsets):
            raise ConfigurationError("qp_offsets must not repeat")
        object.__setattr__(self, "qp_offsets", offsets)
        object.__setattr__(self, "rule", LambdaRule(self.rule))
        if self.gop_length < 1 or self.gop_length > 255:
            raise ConfigurationError("gop_length must lie in [1, 255]")
        if not 0 <= self.search_range <= 255:
            raise ConfigurationError("search_range must lie in [0, 255]")
        if self.ctu_size != 16:
            raise ConfigurationError("only 16x16 CTUs are supported")
        if not self.lambda_c > 0:
            raise ConfigurationError("lambda_c must be positive")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be non-negative")

    @property
    def gop(self) -> GopStructure:
        return GopStructure(self.gop_length)

    @property
    def lambda_sse(self) -> float:
        return lambda_sse_from_qp(self.qp, self.lambda_c)


def effective_qp(base: int, offset_index: int) -> int:
    return min(max(base + QP_OFFSET_TABLE[offset_index], 0), 51)


@dataclass
class LeafChoice:
    row: int
    col: int
    size: int
    mode: int
    qp_index: int = 1
    mv: tuple[int, int] = (0, 0)
    pairs: tuple[tuple[int, int], ...] = ()
    recon: np.ndarray | None = None
    distortion: float = 0.0
    bits: int = 0


@dataclass
class BlockRecord:
    row: int
    col: int
    size: int
    mode: int
    qp_index: int
    mv: tuple[int, int]
    bits: int
    distortion: float


@dataclass
class FrameRecon:
    frame_type: int
    samples: np.ndarray  # real-domain reconstruction
    normalized: np.ndarray
    mean: float
    scale: float
    blocks: list[BlockRecord] = field(default_factory=list)
    frame_bits: int = 0
    overhead_bits: int = 0


@dataclass
class _FrameContext:
    orig: np.ndarray
    recon: np.ndarray
    reference: np.ndarray | None
    frame_type: int
    metric: DistortionMetric
    config: EncoderConfig


def normalization(samples: np.ndarray) -> tuple[float, float]:
    """Frame mean and divisor, rounded to float32 as stored in the frame header."""
    mean = float(np.float32(np.mean(samples)))
    std = float(np.std(samples))
    scale = float(np.float32(std / SAMPLE_SCALE)) if std > 0 else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    return mean, scale


def normalize(samples: np.ndarray, mean: float, scale: float) -> np.ndarray:
    return (samples - mean) / scale


def denormalize(samples: np.ndarray, mean: float, scale: float) -> np.ndarray:
    return samples * scale + mean


def leaf_candidates(ctx: _FrameContext, row: int, col: int, size: int) -> list[LeafChoice]:
    """All leaf options in canonical order: Skip, then Residual per allowed QP offset."""
    cfg, metric = ctx.config, ctx.metric
    orig = ctx.orig[row : row + size, col : col + size]
    pos = (row, col)
    if ctx.frame_type == I_FRAME:
        skip_pred = predict_intra_dc(ctx.recon, row, col, size)
        res_pred, mv = skip_pred, (0, 0)
        side_bits = 0
    else:
        skip_pred = predict_inter(ctx.reference, row, col, size, (0, 0))
        mv = motion_search(orig, ctx.reference, pos, cfg.search_range, metric, metric.lam)
        res_pred = predict_inter(ctx.reference, row, col, size, mv)
        side_bits = mv_bits(mv)
    out = [LeafChoice(row, col, size, SKIP, recon=skip_pred, bits=1,
                      distortion=block_distortion(metric, orig, skip_pred, pos))]
    coeffs = dct2_forward(orig - res_pred)
    weight = metric.block_weight(row, col, size)
    for offset in cfg.qp_offsets:
        qp_index = QP_OFFSET_TABLE.index(offset)
        step = quant_step_from_qp(effective_qp(cfg.qp, qp_index))
        q = rdoq_quantize(coeffs, step, metric.lam, weight)
        recon = res_pred if q.is_zero else res_pred + dequantize_residual(q.levels, step)
        out.append(LeafChoice(
            row, col, size, RESIDUAL, qp_index, mv, q.pairs, recon,
            block_distortion(metric, orig, recon, pos), 3 + side_bits + q.bits,
        ))
    return out


def _best_leaf(ctx: _FrameContext, row: int, col: int, size: int) -> LeafChoice:
    cands = leaf_candidates(ctx, row, col, size)
    return cands[rdo_select([(c, c.distortion, c.bits) for c in cands], ctx.metric.lam)]


def _decide_ctu(ctx: _FrameContext, row: int, col: int, forced: int | None) -> list[LeafChoice]:
    size = ctx.config.ctu_size
    if forced is not None:
        leaf = leaf_candidates(ctx, row, col, size)[forced]
        ctx.recon[row : row + size, col : col + size] = leaf.recon
        return [leaf]
    whole = _best_leaf(ctx, row, col, size)
    if not ctx.config.allow_split:
        ctx.recon[row : row + size, col : col + size] = whole.recon
        return [whole]
    half = size // 2
    subs = []
    for dr, dc in ((0, 0), (0, half), (half, 0), (half, half)):
        leaf = _best_leaf(ctx, row + dr, col + dc, half)
        ctx.recon[row + dr : row + dr + half, col + dc : col + dc + half] = leaf.recon
        subs.append(leaf)
    options = [
        ([whole], whole.distortion, 1 + whole.bits),
        (subs, sum(s.distortion for s in subs), 1 + sum(s.bits for s in subs)),
    ]
    chosen = options[rdo_select(options, ctx.metric.lam)][0]
    if chosen is options[0][0]:
        ctx.recon[row : row + size, col : col + size] = whole.recon
    return chosen


def write_leaf(writer: BitWriter, leaf: LeafChoice, frame_type: int) -> None:
    writer.write_bit(leaf.mode)
    if leaf.mode == SKIP:
        return
    writer.write_bits(leaf.qp_index, 2)
    if frame_type == P_FRAME:
        writer.write_se(leaf.mv[0])
        writer.write_se(leaf.mv[1])
    writer.write_ue(len(leaf.pairs))
    for run, level in leaf.pairs:
        writer.write_ue(run)
        writer.write_se(level)


def encode_frame(
    z: PackedFrame | np.ndarray,
    metric: DistortionMetric,
    config: EncoderConfig,
    frame_type: int,
    writer: BitWriter,
    reference: np.ndarray | None = None,
    forced: Mapping[int, int] | None = None,
) -> FrameRecon:
    """Code one frame into ``writer`` (which must be byte aligned).

    ``reference`` is the previous real-domain reconstruction (P frames).
    ``forced`` maps a CTU index to a leaf candidate index (Skip, then the
    Residual offsets in config order) and disables the split search there.
    """
    samples = z.samples if isinstance(z, PackedFrame) else np.asarray(z, dtype=np.float64)
    fh, fw = samples.shape
    ctu = config.ctu_size
    if fh % ctu or fw % ctu:
        raise ShapeError(f"frame {samples.shape} is not divisible into {ctu}x{ctu} CTUs")
    if metric.weights is not None and metric.weights.shape != samples.shape:
        raise ShapeError(f"importance map shape {metric.weights.shape} does not match frame {samples.shape}")
    if frame_type == P_FRAME and reference is None:
        raise ShapeError("P frame without a reference")
    mean, scale = normalization(samples)
    ctx = _FrameContext(
        orig=normalize(samples, mean, scale),
        recon=np.zeros_like(samples),
        reference=None if reference is None else normalize(reference, mean, scale),
        frame_type=frame_type,
        metric=metric,
        config=config,
    )
    start = writer.bit_count
    writer.write_bits(frame_type, 8)
    writer.write_bytes(struct.pack("<ff", mean, scale))
    result = FrameRecon(frame_type, samples, ctx.recon, mean, scale)
    index = 0
    for row in range(0, fh, ctu):
        for col in range(0, fw, ctu):
            leaves = _decide_ctu(ctx, row, col, None if forced is None else forced.get(index))
            writer.write_bit(1 if len(leaves) > 1 else 0)
            for leaf in leaves:
                before = writer.bit_count
                write_leaf(writer, leaf, frame_type)
                written = writer.bit_count - before
                assert written == leaf.bits, "rate model and bitstream disagree"
                result.blocks.append(BlockRecord(
                    leaf.row, leaf.col, leaf.size, leaf.mode, leaf.qp_index, leaf.mv, written, leaf.distortion,
                ))
            index += 1
    writer.align()
    result.frame_bits = writer.bit_count - start
    result.overhead_bits = result.frame_bits - sum(b.bits for b in result.blocks)
    result.samples = denormalize(ctx.recon, mean, scale)
    return result


# ---------------------------------------------------------------------------


@dataclass
class Bitstream:
    data: bytes
    header: dict
    frame_bits: list[int]
    block_bits: list[list[int]]
    overhead_bits: list[int]

    HEADER_BYTES = struct.calcsize(HEADER_FORMAT)

    @property
    def payload(self) -> bytes:
        return self.data[self.HEADER_BYTES :]

    @property
    def total_bits(self) -> int:
        return 8 * len(self.data)


@dataclass
class EncodeResult:
    bitstream: Bitstream
    recon: list[FrameRecon]
    maps: list[ImportanceMap | None]
    metrics: list[DistortionMetric]


def pack_header(layout: TilingLayout, n_frames: int, config: EncoderConfig, mode: RdoMode) -> bytes:
    fh, fw = layout.frame_shape
    return struct.pack(
        HEADER_FORMAT, MAGIC, VERSION, layout.channels, fh, fw, layout.rows, layout.cols,
        n_frames, config.qp, int(mode), config.gop_length, config.search_range,
    )


def maps_for_mode(
    mode: RdoMode,
    frames: Sequence[PackedFrame],
    wrapper: WrapperParams | None,
    layout: TilingLayout,
    sketch: SketchSpec,
    gop: GopStructure,
    frozen_map: ImportanceMap | None = None,
) -> list[ImportanceMap | None]:
    """Importance map used for each frame under ``mode`` (None for SSE)."""
    mode = RdoMode.parse(mode)
    if mode is RdoMode.SSE:
        return [None] * len(frames)
    if mode is RdoMode.FWA:
        if frozen_map is None:
            raise ConfigurationError("FWA mode needs a frozen importance map")
        if frozen_map.n_p != layout.n_samples:
            raise ConfigurationError(f"frozen map has {frozen_map.n_p} samples, frames have {layout.n_samples}")
        return [frozen_map] * len(frames)
    if wrapper is None:
        raise ConfigurationError(f"{mode.name} mode needs the restoration wrapper")
    if mode is RdoMode.WA:
        return [compute_map(wrapper, f, layout, sketch) for f in frames]
    return list(assign_maps_iwa(gop, frames, wrapper, layout, sketch))


MetricFn = Callable[[ImportanceMap, float], MetricParams]


def encode_sequence(
    frames: Sequence[PackedFrame],
    wrapper: WrapperParams | None,
    mode: RdoMode | str,
    config: EncoderConfig = EncoderConfig(),
    sketch: SketchSpec = SketchSpec(),
    frozen_map: ImportanceMap | None = None,
    maps: Sequence[ImportanceMap | None] | None = None,
    metric_fn: MetricFn | None = None,
) -> EncodeResult:
    """Encode an IPPP sequence of packed frames.

    ``maps`` overrides the per-frame importance maps (e.g. maps cached across
    QPs); ``metric_fn(map, lambda_sse)`` overrides the tau/lambda derivation.
    """
    mode = RdoMode.parse(mode)
    if not frames:
        raise ConfigurationError("encode_sequence needs at least one frame")
    layout = frames[0].layout
    if any(f.layout != layout for f in frames):
        raise ShapeError("all frames must share one tiling layout")
    if maps is None:
        maps = maps_for_mode(mode, frames, wrapper, layout, sketch, config.gop, frozen_map)
    elif len(maps) != len(frames):
        raise ConfigurationError("one importance map per frame is required")
    lambda_sse = config.lambda_sse
    writer = BitWriter()
    writer.write_bytes(pack_header(layout, len(frames), config, mode))
    recons, metrics = [], []
    reference = None
    for t, frame in enumerate(frames):
        imap = maps[t]
        if imap is None:
            metric = DistortionMetric.sse(lambda_sse)
        else:
            params = (
                metric_fn(imap, lambda_sse)
                if metric_fn is not None
                else derive_metric_params(imap, config.alpha, lambda_sse, config.rule, layout.n_samples)
            )
            metric = DistortionMetric.weighted(imap, params, layout.frame_shape)
        frame_type = I_FRAME if config.gop.is_intra(t) else P_FRAME
        rec = encode_frame(frame, metric, config, frame_type, writer, reference)
        reference = rec.samples
        recons.append(rec)
        metrics.append(metric)
    bitstream = Bitstream(
        data=writer.getvalue(),
        header={"layout": layout, "frames": len(frames), "qp": config.qp, "mode": mode,
                "gop_length": config.gop_length, "search_range": config.search_range},
        frame_bits=[r.frame_bits for r in recons],
        block_bits=[[b.bits for b in r.blocks] for r in recons],
        overhead_bits=[r.overhead_bits for r in recons],
    )
    return EncodeResult(bitstream, recons, list(maps), metrics)
