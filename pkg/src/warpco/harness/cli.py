"""Command-line entry point: ``warpco <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..codec import EncoderConfig, RdoMode, decode_sequence, encode_sequence
from ..errors import ConfigurationError, WarpcoError
from ..importance import LambdaRule, SketchSpec, compute_map, exact_map, load_map, save_map
from ..wrapper import (
    FitConfig,
    fit_wrappers,
    load_features,
    load_params,
    save_features,
    save_params,
    unpack_tiles,
    restore_forward,
)
from .experiments import frozen_map_for, pack_sequence, rescale_ignored, sweep, validate_high_rate
from .metrics import bd_delta
from .report import curves_from_json, emit_report
from .synth import SynthConfig, gen_synthetic_sequence

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# Config file


def _coerce(cls, section: dict, name: str):
    if not isinstance(section, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigurationError(f"unknown {name} fields: {', '.join(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}
    if cls is EncoderConfig and "rule" in kw:
        kw["rule"] = LambdaRule(kw["rule"])
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigurationError(f"bad {name} config: {exc}") from None


_SECTIONS = {"synth": SynthConfig, "encoder": EncoderConfig, "sketch": SketchSpec, "fit": FitConfig}


def load_config(path: str | None) -> dict:
    """JSON file with optional sections synth, encoder, sketch and fit."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
    unknown = sorted(set(raw) - set(_SECTIONS))
    if unknown:
        raise ConfigurationError(f"unknown config sections: {', '.join(unknown)}")
    return {name: _coerce(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()}


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _modes(text: str) -> list[RdoMode]:
    try:
        return [RdoMode.parse(v.strip()) for v in text.split(",") if v.strip()]
    except ConfigurationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args, cfg) -> int:
    frames = gen_synthetic_sequence(replace(cfg["synth"], seed=args.seed))
    save_features(frames, args.out)
    print(f"wrote {len(frames)} frames of shape {frames[0].shape} to {args.out}")
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    ys = load_features(args.features)
    ignored = tuple(args.ignore_channels or ())
    result = fit_wrappers(ys, replace(cfg["fit"], seed=args.seed, ignore_channels=ignored))
    params = rescale_ignored(result.params, ys, ignored)
    save_params(params, args.out)
    print(f"final loss {result.loss_trace[-1]:.6g} after {len(result.loss_trace)} checkpoints")
    return EXIT_OK


def _sketch(args, cfg) -> SketchSpec:
    return replace(cfg["sketch"], seed=args.seed)


def cmd_map(args, cfg) -> int:
    params = load_params(args.wrapper)
    ys = load_features(args.features)
    if not 0 <= args.frame < len(ys):
        raise ConfigurationError(f"frame {args.frame} out of range for {len(ys)} frames")
    zs, layout = pack_sequence(params, ys)
    if args.exact:
        np.save(args.out, exact_map(params, zs[args.frame], layout))
    else:
        imap = replace(compute_map(params, zs[args.frame], layout, _sketch(args, cfg)), frame_index=args.frame)
        save_map(imap, args.out)
    print(f"wrote importance map for frame {args.frame} to {args.out}")
    return EXIT_OK


def cmd_freeze(args, cfg) -> int:
    params = load_params(args.wrapper)
    imap = frozen_map_for(params, load_features(args.features), _sketch(args, cfg))
    save_map(imap, args.out)
    print(f"wrote frozen map ({imap.n_p} samples) to {args.out}")
    return EXIT_OK


def _frozen(args):
    return load_map(args.map) if args.map else None


def cmd_encode(args, cfg) -> int:
    params = load_params(args.wrapper)
    zs, _ = pack_sequence(params, load_features(args.features))
    config = replace(cfg["encoder"], qp=args.qp) if args.qp is not None else cfg["encoder"]
    enc = encode_sequence(zs, params, args.mode, config, _sketch(args, cfg), _frozen(args))
    Path(args.out).write_bytes(enc.bitstream.data)
    print(f"wrote {len(enc.bitstream.data)} bytes ({enc.bitstream.total_bits / len(zs):.1f} bits/frame) to {args.out}")
    return EXIT_OK


def cmd_decode(args, cfg) -> int:
    dec = decode_sequence(Path(args.input).read_bytes())
    if args.wrapper:
        params = load_params(args.wrapper)
        out = [restore_forward(params, unpack_tiles(f)) for f in dec.frames]
    else:
        out = [f.samples[None] for f in dec.frames]
    save_features(out, args.out)
    print(f"decoded {len(dec.frames)} frames to {args.out}")
    return EXIT_OK


def cmd_sweep(args, cfg) -> int:
    params = load_params(args.wrapper)
    ys = load_features(args.features)
    frozen = _frozen(args)
    curves = [
        sweep(ys, params, mode, args.qps, cfg["encoder"], _sketch(args, cfg), frozen, timing=args.timing)
        for mode in args.mode
    ]
    emit_report(curves, path=args.out, format=args.format)
    for c in curves:
        print(c.label, " ".join(f"{p.qp}:{p.rate:.1f}b/{p.quality:.2f}dB" for p in c.points))
    return EXIT_OK


def _pick(curves, label, path):
    if label is None:
        return curves
    chosen = [c for c in curves if c.label == label]
    if not chosen:
        raise ConfigurationError(f"no curve labelled {label!r} in {path}")
    return chosen


def cmd_bd(args, cfg) -> int:
    anchors = _pick(curves_from_json(Path(args.anchor).read_text()), args.anchor_label, args.anchor)
    if not anchors:
        raise ConfigurationError(f"{args.anchor} holds no curves")
    anchor = anchors[0]
    tests = _pick(curves_from_json(Path(args.test).read_text()), args.test_label, args.test)
    table = []
    for test in tests:
        rate = bd_delta(anchor, test, "rate")
        quality = bd_delta(anchor, test, "quality")
        table.append({
            "anchor": anchor.label,
            "test": test.label,
            "bd_rate_percent": rate.value,
            "bd_quality_db": quality.value,
            "warning": rate.warning or quality.warning,
        })
        note = f" [{table[-1]['warning']}]" if table[-1]["warning"] else ""
        print(f"{anchor.label} -> {test.label}: BD-rate: {rate.value:.2f}% BD-quality: {quality.value:.3f} dB{note}")
    if args.out:
        emit_report([], bd_table=table, path=args.out, format="json")
    return EXIT_OK


def cmd_validate(args, cfg) -> int:
    params = load_params(args.wrapper)
    records = validate_high_rate(load_features(args.features), params, args.qps, cfg["encoder"])
    for r in records:
        print(f"qp {r.qp}: {r.bits_per_frame:.1f} bits/frame, main/cross ratio {r.ratio:.3f}")
    if args.out:
        emit_report([], validation=records, path=args.out, format="json")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="warpco", description="Wrapper-aware RDO feature codec experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help, seed=True):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", help="JSON file with synth/encoder/sketch/fit sections")
        if seed:
            sp.add_argument("--seed", type=_seed, required=True)
        return sp

    sp = add("gen", cmd_gen, "generate a synthetic feature sequence")
    sp.add_argument("--out", required=True)

    sp = add("fit", cmd_fit, "fit reduction/restoration wrappers")
    sp.add_argument("--features", required=True)
    sp.add_argument("--ignore-channels", type=_int_list, help="reduced channels g2 must not read")
    sp.add_argument("--out", required=True)

    sp = add("map", cmd_map, "importance map of one frame")
    sp.add_argument("--wrapper", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--frame", type=int, default=0)
    sp.add_argument("--exact", action="store_true", help="exact Jacobian diagonal, saved as .npy")
    sp.add_argument("--out", required=True)

    sp = add("freeze", cmd_freeze, "average importance maps over a corpus")
    sp.add_argument("--wrapper", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--out", required=True)

    sp = add("encode", cmd_encode, "encode a feature sequence")
    sp.add_argument("--wrapper", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--mode", type=RdoMode.parse, default=RdoMode.SSE, choices=list(RdoMode),
                    metavar="{sse,wa,iwa,fwa}")
    sp.add_argument("--qp", type=int)
    sp.add_argument("--map", help="frozen importance map (fwa)")
    sp.add_argument("--out", required=True)

    sp = add("decode", cmd_decode, "decode a bitstream", seed=False)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--wrapper", help="restore to the feature domain")
    sp.add_argument("--out", required=True)

    sp = add("sweep", cmd_sweep, "RD sweep over QPs and modes")
    sp.add_argument("--wrapper", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--mode", type=_modes, default=[RdoMode.SSE])
    sp.add_argument("--qps", type=_int_list, required=True)
    sp.add_argument("--map", help="frozen importance map (fwa)")
    sp.add_argument("--timing", action="store_true", help="record wall time (breaks byte reproducibility)")
    sp.add_argument("--format", choices=("csv", "json"), default="json")
    sp.add_argument("--out", required=True)

    sp = add("bd", cmd_bd, "Bjontegaard deltas between report curves", seed=False)
    sp.add_argument("--anchor", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--anchor-label")
    sp.add_argument("--test-label")
    sp.add_argument("--out")

    sp = add("validate", cmd_validate, "high-rate expansion check under SSE encoding", seed=False)
    sp.add_argument("--wrapper", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--qps", type=_int_list, required=True)
    sp.add_argument("--out")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return args.fn(args, load_config(args.config))
    except (WarpcoError, ValueError, OSError) as exc:
        print(f"warpco {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
