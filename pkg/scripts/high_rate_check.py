"""Size the main, cross and wrapper-error terms of the feature-domain error over a QP sweep."""

import argparse

from scipy.stats import spearmanr

from warpco.harness.experiments import fit_toy_wrapper, validate_high_rate
from warpco.harness.synth import SynthConfig, gen_synthetic_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--qps", default="10,16,22,28,34,40")
    args = ap.parse_args()
    qps = [int(q) for q in args.qps.split(",")]
    train = gen_synthetic_sequence(SynthConfig(seed=args.seed))
    wrapper = fit_toy_wrapper(train, seed=args.seed)
    for name, data in (("train", train), ("held-out", gen_synthetic_sequence(SynthConfig(seed=args.seed + 1)))):
        recs = validate_high_rate(data, wrapper, qps)
        print(f"{name}: ||eta||^2 = {recs[0].term_eta:.4g}")
        for r in recs:
            print(f"  qp {r.qp:>2}  {r.bits_per_frame:7.1f} bits/frame  main {r.term_main:10.4g}  "
                  f"cross {r.term_cross:10.4g}  ratio {r.ratio:8.2f}")
        rho = spearmanr([r.bits_per_frame for r in recs], [r.ratio for r in recs])[0]
        print(f"  Spearman(rate, ratio) = {rho:+.2f}")


if __name__ == "__main__":
    main()
