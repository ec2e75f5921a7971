"""Command line front end.

Subcommands: gen-graph, simulate <experiment>, analyze, oracle. Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import sys

import numpy as np

from .errors import DataError, NumericalError, UsageError
from .experiments import (
    EXPERIMENTS,
    RUNNERS,
    analyze,
    config_from_manifest,
    config_from_sources,
    parse_config_file,
)
from .graph import erdos_renyi, save_edge_list
from .oracle import endogenous_bias_check, enumerate_estimator, joint_effects
from .outcomes import ground_truth_tte
from .seeds import derive_seed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="spillover", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-graph", help="write a seeded random graph as edge TSV")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--mean-degree", type=float, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("experiment", choices=EXPERIMENTS)
    sim.add_argument("--config", help="flat key = value config file")
    sim.add_argument("--from-manifest", help="rerun the config stored in a manifest")
    sim.add_argument("--n", type=int)
    sim.add_argument("--p", type=float)
    sim.add_argument("--gamma1", type=float)
    sim.add_argument("--gamma2", type=float)
    sim.add_argument("--link")
    sim.add_argument("--d-bars", help="comma separated mean degrees")
    sim.add_argument("--replications", type=int)
    sim.add_argument("--master-seed", type=int)
    sim.add_argument("--output-dir")
    sim.add_argument("--threads", type=int)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--fixed-instance", action="store_true", default=None)
    sim.add_argument("--clusters", help="cluster TSV for the cluster arm")
    sim.add_argument("--n-clusters", type=int)

    ana = sub.add_parser("analyze", help="per-metric estimator report from files")
    ana.add_argument("--edges", required=True)
    ana.add_argument("--metrics", required=True)
    ana.add_argument("--p", type=float, required=True)
    ana.add_argument("--alpha", type=float, default=0.05)
    ana.add_argument("--output-dir", default="analysis_out")

    orc = sub.add_parser("oracle", help="exact enumeration diagnostics, small n")
    orc.add_argument("--n", type=int, default=8)
    orc.add_argument("--p", type=float, default=0.5)
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--mean-degree", type=float, default=2.0)
    return parser


def _cmd_gen_graph(args):
    g = erdos_renyi(args.n, args.mean_degree, args.seed)
    save_edge_list(g, args.out)
    with open(args.out + ".manifest.json", "wt", encoding="utf-8") as fh:
        json.dump(
            {
                "command": "gen-graph",
                "n": args.n,
                "mean_degree": args.mean_degree,
                "seed": args.seed,
                "edges": g.edge_count,
                "numpy": np.__version__,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    print(f"wrote {g.edge_count} edges over {g.n} nodes to {args.out}")


def _cmd_simulate(args):
    if args.from_manifest:
        cfg = config_from_manifest(args.from_manifest, experiment=args.experiment)
    else:
        file_values = parse_config_file(args.config) if args.config else {}
        overrides = {
            "experiment": args.experiment,
            "n": args.n,
            "p": args.p,
            "gamma1": args.gamma1,
            "gamma2": args.gamma2,
            "link": args.link,
            "replications": args.replications,
            "master_seed": args.master_seed,
            "output_dir": args.output_dir,
            "threads": args.threads,
            "alpha": args.alpha,
            "fixed_instance": args.fixed_instance,
            "clusters_path": args.clusters,
            "n_clusters": args.n_clusters,
        }
        if args.d_bars:
            overrides["d_bar_list"] = tuple(
                float(x) for x in args.d_bars.split(",") if x.strip()
            )
        cfg = config_from_sources(file_values, overrides)
    RUNNERS[cfg.experiment](cfg)
    print(f"{cfg.experiment}: outputs in {cfg.output_dir}")


def _cmd_analyze(args):
    header, rows, _ = analyze(
        args.edges, args.metrics, args.p, alpha=args.alpha, output_dir=args.output_dir
    )
    print("\t".join(header))
    for row in rows:
        print("\t".join(str(x) for x in row))


def _cmd_oracle(args):
    """Exact diagnostics on a small random linear instance whose dependency
    network equals the generated graph."""
    from scipy.sparse import csr_matrix

    from .graph import closed_neighborhood
    from .outcomes import LinearModel, WeightMatrix

    g = erdos_renyi(args.n, args.mean_degree, args.seed)
    rng = np.random.default_rng(derive_seed(args.seed, 7))
    dense = np.zeros((g.n, g.n))
    for i in range(g.n):
        mi = closed_neighborhood(g, i)
        dense[i, mi] = rng.random(mi.size) + 0.05
    model = LinearModel(
        baseline=rng.random(g.n), weights=WeightMatrix(matrix=csr_matrix(dense))
    )
    res = enumerate_estimator(model, g, args.p)
    lhs, rhs = endogenous_bias_check(model, g, args.p)
    je = joint_effects(model)
    out = {
        "n": g.n,
        "p": args.p,
        "tte": ground_truth_tte(model),
        "enumerated_mean": res.mean,
        "enumerated_variance": res.variance,
        "order_sum_prediction": rhs,
        "identity_gap": abs(lhs - rhs),
        "order_sums": je.beta_sums.tolist(),
    }
    print(json.dumps(out, indent=2))


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gen-graph":
            _cmd_gen_graph(args)
        elif args.command == "simulate":
            _cmd_simulate(args)
        elif args.command == "analyze":
            _cmd_analyze(args)
        elif args.command == "oracle":
            _cmd_oracle(args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
