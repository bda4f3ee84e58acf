"""Experiments, metrics, reports and the CLI."""

from .experiments import (
    HighRateRecord,
    ignored_channel_scenario,
    rescale_ignored,
    sweep,
    validate_high_rate,
)
from .metrics import BdResult, RdCurve, RdPoint, bd_delta, quality_fsnr
from .report import CSV_COLUMNS, emit_report
from .synth import SynthConfig, gen_synthetic_sequence
