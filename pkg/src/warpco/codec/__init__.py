"""Decodable block transform codec for packed feature frames."""

from .bitio import BitReader, BitWriter, se_length, ue_length
from .decoder import DecodedSequence, decode_sequence, parse_header
from .encoder import (
    Bitstream,
    EncodeResult,
    EncoderConfig,
    FrameRecon,
    RdoMode,
    encode_frame,
    encode_sequence,
    maps_for_mode,
)
from .predict import I_FRAME, P_FRAME, motion_search, predict_block
from .quant import lambda_sse_from_qp, quant_step_from_qp, rdoq_quantize
from .rdo import DistortionMetric, block_distortion, rdo_select
