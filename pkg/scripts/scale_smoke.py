#!/usr/bin/env python3
"""Million-node smoke run: estimator plus dependency-aware variance.

Prints wall time and peak memory so deployment targets can be sized.
"""

import argparse
import resource
import time

import numpy as np

from spillover.estimators import unit_statistics
from spillover.graph import erdos_renyi
from spillover.inference import variance_estimate
from spillover.randomization import bernoulli_assign
from spillover.seeds import derive_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--mean-degree", type=float, default=20.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    t0 = time.time()
    g = erdos_renyi(args.n, args.mean_degree, args.seed)
    print(f"graph built: {g.edge_count:,} edges in {time.time() - t0:.1f}s")
    a = bernoulli_assign(g.n, 0.5, args.seed + 1)
    y = derive_rng(args.seed + 2).random(g.n)
    t1 = time.time()
    stats = unit_statistics(g, y, a)
    tau = float(np.mean(stats.t))
    ve = variance_estimate(g, stats, tau)
    print(f"tau={tau:.6f} var_hat={ve.value:.6e} in {time.time() - t1:.1f}s")
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1e6
    print(f"total {time.time() - t0:.1f}s, peak memory {peak:.2f} GB")


if __name__ == "__main__":
    main()
