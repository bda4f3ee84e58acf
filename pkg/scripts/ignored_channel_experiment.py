"""RD sweeps of SSE/WA/IWA/FWA on the ignored-channel wrapper, plus an alpha/rule sweep for WA."""

import argparse
from pathlib import Path

from warpco.codec import EncoderConfig
from warpco.harness.experiments import (
    SCENARIO_SYNTH,
    freeze_corpus,
    frozen_map_for,
    ignored_channel_scenario,
    sweep,
)
from warpco.harness.metrics import bd_delta
from warpco.harness.report import emit_report
from warpco.importance import LambdaRule, SketchSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--qps", default="22,26,30,34,38,42")
    ap.add_argument("--out", default="results/ignored_channel")
    args = ap.parse_args()
    qps = [int(q) for q in args.qps.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    _, test, wrapper = ignored_channel_scenario(args.seed)
    frozen = frozen_map_for(wrapper, freeze_corpus(SCENARIO_SYNTH, args.seed), SketchSpec(seed=args.seed))
    sketch = SketchSpec(seed=args.seed)
    curves = [sweep(test, wrapper, m, qps, sketch=sketch, frozen_map=frozen) for m in ("sse", "wa", "iwa", "fwa")]
    for alpha in (0.0, 0.05, 0.5):
        for rule in LambdaRule:
            cfg = EncoderConfig(alpha=alpha, rule=rule)
            curves.append(sweep(test, wrapper, "wa", qps, cfg, sketch, label=f"wa_{rule.value}_a{alpha}"))

    anchor = curves[0]
    table = []
    for c in curves[1:]:
        rate, quality = bd_delta(anchor, c), bd_delta(anchor, c, "quality")
        table.append({"anchor": anchor.label, "test": c.label, "bd_rate_percent": rate.value,
                      "bd_quality_db": quality.value, "warning": rate.warning or quality.warning})
        print(f"{c.label:>24}: BD-rate {rate.value:+7.2f}%  BD-quality {quality.value:+.3f} dB")
    emit_report(curves, path=out / "curves.csv", format="csv")
    emit_report(curves, table, path=out / "report.json", format="json")


if __name__ == "__main__":
    main()
