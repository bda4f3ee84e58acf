"""Sketch dimension study: estimator error against the exact Jacobian and WA coding gain per n_s."""

import argparse

import numpy as np

from warpco.codec import EncoderConfig
from warpco.harness.experiments import ignored_channel_scenario, sweep
from warpco.harness.metrics import bd_delta
from warpco.importance import SketchSpec, compute_map, exact_jacobian, exact_map
from warpco.wrapper import TilingLayout, init_params, pack_tiles


def estimator_table(seeds: int):
    params = init_params(8, 4, 8, seed=4)
    layout = TilingLayout.square(4, 4, 4)
    z = pack_tiles(np.random.default_rng(4).normal(size=(4, 4, 4)), layout)
    jac = exact_jacobian(params, z, layout)
    exact = exact_map(params, z, layout)
    live = exact > 0
    print(f"{'n_s':>4} {'median |qf err|':>16} {'mean-map l2 err':>16} {'single-map l2 err':>18}")
    for n_s in (2, 4, 8, 16, 32):
        rel, maps = [], []
        for seed in range(seeds):
            spec = SketchSpec(n_s, seed)
            s = spec.matrix(jac.shape[0])
            jq = jac @ np.random.default_rng(10_000 + seed).normal(size=jac.shape[1])
            rel.append(abs(np.sum((s @ jq) ** 2) - np.sum(jq**2)) / np.sum(jq**2))
            maps.append(compute_map(params, z, layout, spec).weights.reshape(exact.shape))
        maps = np.asarray(maps, dtype=np.float64)
        err = lambda m: np.linalg.norm((m - exact)[live]) / np.linalg.norm(exact[live])  # noqa: E731
        single = np.median([err(m) for m in maps])
        print(f"{n_s:>4} {np.median(rel):>16.3f} {err(maps.mean(axis=0)):>16.3f} {single:>18.3f}")


def coding_gain(qps):
    _, test, wrapper = ignored_channel_scenario(0)
    sse = sweep(test, wrapper, "sse", qps)
    for n_s in (2, 4, 8, 16, 32):
        wa = sweep(test, wrapper, "wa", qps, EncoderConfig(), SketchSpec(n_s, 0))
        print(f"n_s {n_s:>2}: WA vs SSE BD-rate {bd_delta(sse, wa).value:+.2f}%")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--qps", default="22,26,30,34,38,42")
    args = ap.parse_args()
    estimator_table(args.seeds)
    coding_gain([int(q) for q in args.qps.split(",")])
