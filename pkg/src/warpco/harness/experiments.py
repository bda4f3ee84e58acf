"""RD sweeps, high-rate checks and the constructed wrapper scenarios."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError
from ..codec import EncoderConfig, RdoMode, decode_sequence, encode_sequence, maps_for_mode
from ..importance import ImportanceMap, SketchSpec, freeze_map
from ..wrapper import (
    FitConfig,
    PackedFrame,
    TilingLayout,
    WrapperParams,
    fit_wrappers,
    pack_tiles,
    reduce_forward,
    restore_forward,
    unpack_tiles,
)
from .metrics import RdCurve, RdPoint, quality_fsnr
from .synth import SynthConfig, gen_synthetic_sequence


def layout_for(params: WrapperParams, height: int, width: int) -> TilingLayout:
    return TilingLayout.square(params.reduced_channels, height, width)


def pack_sequence(params: WrapperParams, ys: Sequence[np.ndarray], layout: TilingLayout | None = None):
    h, w = np.shape(ys[0])[-2:]
    layout = layout or layout_for(params, h, w)
    return [pack_tiles(reduce_forward(params, y), layout) for y in ys], layout


def restore_sequence(params: WrapperParams, frames: Sequence[PackedFrame]) -> list[np.ndarray]:
    return [restore_forward(params, unpack_tiles(f)) for f in frames]


def sweep(
    ys: Sequence[np.ndarray],
    wrapper: WrapperParams,
    mode: RdoMode | str,
    qps: Sequence[int],
    config: EncoderConfig = EncoderConfig(),
    sketch: SketchSpec = SketchSpec(),
    frozen_map: ImportanceMap | None = None,
    label: str | None = None,
    timing: bool = False,
    maps: Sequence[ImportanceMap | None] | None = None,
    metric_fn=None,
) -> RdCurve:
    """Encode/decode ``ys`` at every QP and measure rate and y-domain FSNR.

    Importance maps do not depend on QP, so they are computed once and shared
    by every point. Wall time is recorded only when ``timing`` is set, which
    keeps reports byte-reproducible by default.
    """
    mode = RdoMode.parse(mode)
    zs, layout = pack_sequence(wrapper, ys)
    if maps is None:
        maps = maps_for_mode(mode, zs, wrapper, layout, sketch, config.gop, frozen_map)
    curve = RdCurve(label or mode.name.lower(), mode.name.lower())
    for qp in qps:
        cfg = replace(config, qp=qp)
        t0 = time.perf_counter()
        enc = encode_sequence(zs, wrapper, mode, cfg, sketch, frozen_map, maps=maps, metric_fn=metric_fn)
        elapsed = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        dec = decode_sequence(enc.bitstream.data).frames
        y_hat = restore_sequence(wrapper, dec)
        sse_z = float(sum(np.sum((d.samples - z.samples) ** 2) for d, z in zip(dec, zs)))
        sse_y = float(sum(np.sum((a - b) ** 2) for a, b in zip(y_hat, ys)))
        curve.points.append(RdPoint(
            qp=qp,
            rate=enc.bitstream.total_bits / len(zs),
            quality=quality_fsnr(ys, y_hat),
            sse_z=sse_z,
            sse_y=sse_y,
            encode_ms=elapsed,
        ))
    return curve.sorted()


@dataclass
class HighRateRecord:
    qp: int
    bits_per_frame: float
    term_main: float
    term_cross: float
    term_eta: float
    ratio: float


def validate_high_rate(
    ys: Sequence[np.ndarray],
    wrapper: WrapperParams,
    qps: Sequence[int],
    config: EncoderConfig = EncoderConfig(),
) -> list[HighRateRecord]:
    """Size the three terms of the feature-domain error expansion under SSE encoding.

    eta = y - g2(z) is the codec-free wrapper error, e = g2(z_hat) - g2(z) the
    compression error seen after restoration.
    """
    zs, _ = pack_sequence(wrapper, ys)
    g2_z = restore_sequence(wrapper, zs)
    eta = [y - g for y, g in zip(ys, g2_z)]
    term_eta = float(sum(np.sum(x * x) for x in eta))
    out = []
    for qp in qps:
        enc = encode_sequence(zs, wrapper, RdoMode.SSE, replace(config, qp=qp))
        dec = decode_sequence(enc.bitstream.data).frames
        e = [a - b for a, b in zip(restore_sequence(wrapper, dec), g2_z)]
        main = float(sum(np.sum(x * x) for x in e))
        cross = 2.0 * abs(float(sum(np.sum(a * b) for a, b in zip(e, eta))))
        out.append(HighRateRecord(
            qp=qp,
            bits_per_frame=enc.bitstream.total_bits / len(zs),
            term_main=main,
            term_cross=cross,
            term_eta=term_eta,
            ratio=math.inf if cross == 0 else main / cross,
        ))
    return out


# ---------------------------------------------------------------------------
# Constructed scenarios


def fit_toy_wrapper(
    ys: Sequence[np.ndarray], seed: int, fit: FitConfig = FitConfig(), ignore_channels: tuple[int, ...] = ()
) -> WrapperParams:
    return fit_wrappers(ys, replace(fit, seed=seed, ignore_channels=ignore_channels)).params


SCENARIO_SYNTH = SynthConfig(channel_std=(1.0, 1.0) + (0.03,) * 14, rho=0.9)


def ignored_channel_scenario(seed: int, synth: SynthConfig = SCENARIO_SYNTH, fit: FitConfig = FitConfig()):
    """Wrapper whose restoration network ignores the second half of the reduced channels.

    The ignored reduced channels are rescaled to carry as much energy as the
    used ones, so an SSE encoder spends real bits on content g2 discards.
    Returns (training features, test features, wrapper).
    """
    cr = fit.reduced_channels
    ignored = tuple(range(cr // 2, cr))
    train = gen_synthetic_sequence(replace(synth, seed=seed))
    test = gen_synthetic_sequence(replace(synth, seed=seed + 1))
    wrapper = fit_toy_wrapper(train, seed, fit, ignore_channels=ignored)
    return train, test, rescale_ignored(wrapper, train, ignored)


def rescale_ignored(wrapper: WrapperParams, ys: Sequence[np.ndarray], ignored: Sequence[int]) -> WrapperParams:
    """Scale the g1 rows of ignored channels to the std of the used ones.

    g2 never reads those channels, so the restored output is unchanged.
    """
    ignored = tuple(ignored)
    if not ignored:
        return wrapper
    used = [c for c in range(wrapper.reduced_channels) if c not in ignored]
    if not used:
        raise ConfigurationError("at least one reduced channel must stay in use")
    z = np.stack([reduce_forward(wrapper, y) for y in ys])
    used_std = float(np.std(z[:, used]))
    g1 = wrapper.g1_weight.astype(np.float64)
    for ch in ignored:
        g1[ch] *= used_std / max(float(np.std(z[:, ch])), 1e-12)
    return replace(wrapper, g1_weight=g1)


FREEZE_CORPUS = 64


def freeze_corpus(synth: SynthConfig, seed: int, count: int = FREEZE_CORPUS) -> list[np.ndarray]:
    """Independent seeded tensors for map freezing (one frame per seed, no temporal link)."""
    one = replace(synth, frames=1)
    return [gen_synthetic_sequence(replace(one, seed=seed * 1_000_003 + k))[0] for k in range(count)]


def frozen_map_for(
    wrapper: WrapperParams, training: Sequence[np.ndarray], sketch: SketchSpec
) -> ImportanceMap:
    zs, layout = pack_sequence(wrapper, training)
    return freeze_map(wrapper, zs, layout, sketch)
