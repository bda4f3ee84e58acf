"""Bitstream parser and reconstruction; mirrors the encoder sample for sample."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import BitstreamError
from ..wrapper import PackedFrame, TilingLayout
from .bitio import BitReader
from .encoder import (
    HEADER_FORMAT,
    MAGIC,
    QP_OFFSET_TABLE,
    RESIDUAL,
    VERSION,
    RdoMode,
    denormalize,
    effective_qp,
    normalize,
)
from .predict import I_FRAME, P_FRAME, predict_inter, predict_intra_dc
from .quant import dequantize_residual, pairs_to_levels, quant_step_from_qp

CTU = 16


@dataclass
class SequenceHeader:
    layout: TilingLayout
    frames: int
    qp: int
    mode: RdoMode
    gop_length: int
    search_range: int


@dataclass
class DecodedSequence:
    header: SequenceHeader
    frames: list[PackedFrame]


def parse_header(data: bytes) -> SequenceHeader:
    size = struct.calcsize(HEADER_FORMAT)
    if len(data) < size:
        raise BitstreamError("truncated sequence header", 8 * len(data))
    magic, version, channels, fh, fw, rows, cols, n, qp, metric, gop, rng = struct.unpack_from(HEADER_FORMAT, data)
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {magic!r}, expected {MAGIC.decode()!r}", 0)
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}", 32)
    if rows == 0 or cols == 0 or fh % rows or fw % cols or fh % CTU or fw % CTU or fh == 0 or fw == 0:
        raise BitstreamError(f"inconsistent frame geometry {fh}x{fw} with {rows}x{cols} tiles", 40)
    if not 0 <= qp <= 51 or metric > 3 or gop == 0:
        raise BitstreamError("invalid coding parameters in header", 8 * (size - 4))
    try:
        layout = TilingLayout(rows, cols, channels, fh // rows, fw // cols)
    except ValueError as exc:
        raise BitstreamError(str(exc), 40) from None
    return SequenceHeader(layout, n, qp, RdoMode(metric), gop, rng)


def _decode_leaf(reader, recon, reference, frame_type, row, col, size, hdr) -> None:
    mode = reader.read_bit()
    if frame_type == I_FRAME:
        pred = predict_intra_dc(recon, row, col, size)
    else:
        pred = None
    if mode != RESIDUAL:
        if pred is None:
            pred = predict_inter(reference, row, col, size, (0, 0))
        recon[row : row + size, col : col + size] = pred
        return
    at = reader.pos
    qp_index = reader.read_bits(2)
    if qp_index >= len(QP_OFFSET_TABLE):
        raise BitstreamError(f"invalid QP offset index {qp_index}", at, reader.frame)
    if frame_type == P_FRAME:
        at = reader.pos
        mv = (reader.read_se(), reader.read_se())
        if max(abs(mv[0]), abs(mv[1])) > hdr.search_range:
            raise BitstreamError(f"motion vector {mv} exceeds search range {hdr.search_range}", at, reader.frame)
        pred = predict_inter(reference, row, col, size, mv)
    at = reader.pos
    count = reader.read_ue()
    if count > size * size:
        raise BitstreamError(f"{count} coefficient pairs in a {size}x{size} block", at, reader.frame)
    pairs = [(reader.read_ue(), reader.read_se()) for _ in range(count)]
    try:
        levels = pairs_to_levels(pairs, size)
    except ValueError as exc:
        raise BitstreamError(str(exc), reader.pos, reader.frame) from None
    if count:
        step = quant_step_from_qp(effective_qp(hdr.qp, qp_index))
        pred = pred + dequantize_residual(levels, step)
    recon[row : row + size, col : col + size] = pred


def decode_sequence(data: bytes) -> DecodedSequence:
    hdr = parse_header(data)
    reader = BitReader(data, 8 * struct.calcsize(HEADER_FORMAT))
    fh, fw = hdr.layout.frame_shape
    frames = []
    reference = None
    for t in range(hdr.frames):
        reader.frame = t
        at = reader.pos
        frame_type = reader.read_bits(8)
        if frame_type not in (I_FRAME, P_FRAME) or (frame_type == P_FRAME and reference is None):
            raise BitstreamError(f"invalid frame type {frame_type}", at, t)
        at = reader.pos
        mean, scale = struct.unpack("<ff", reader.read_bytes(8))
        if not (np.isfinite(mean) and np.isfinite(scale) and scale > 0):
            raise BitstreamError(f"invalid normalization ({mean}, {scale})", at, t)
        mean, scale = float(mean), float(scale)
        recon = np.zeros((fh, fw))
        ref_n = None if reference is None else normalize(reference, mean, scale)
        for row in range(0, fh, CTU):
            for col in range(0, fw, CTU):
                if reader.read_bit():
                    half = CTU // 2
                    for dr, dc in ((0, 0), (0, half), (half, 0), (half, half)):
                        _decode_leaf(reader, recon, ref_n, frame_type, row + dr, col + dc, half, hdr)
                else:
                    _decode_leaf(reader, recon, ref_n, frame_type, row, col, CTU, hdr)
        at = reader.pos
        pad = (-reader.pos) % 8
        if reader.read_bits(pad):
            raise BitstreamError("non-zero alignment bits", at, t)
        with np.errstate(over="ignore", invalid="ignore"):
            out = denormalize(recon, mean, scale)
        if not np.all(np.isfinite(out)):
            raise BitstreamError("reconstruction overflowed", reader.pos, t)
        reference = out
        frames.append(PackedFrame(out, hdr.layout))
    if reader.bits_left:
        raise BitstreamError(f"{reader.bits_left} trailing bits after the last frame", reader.pos)
    return DecodedSequence(hdr, frames)
