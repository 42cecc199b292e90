#!/usr/bin/env python3
"""Power experiments: rejection rate across a sweep of sample size or
cluster-mean separation, with binomial standard errors."""

import argparse
from dataclasses import replace

from psimf.cli import default_experiment_config
from psimf.harness import emit_report, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("sweep", choices=["n", "separation"],
                        help="'n' sweeps sample size at fixed separation; "
                             "'separation' sweeps the group mean at n=80.")
    parser.add_argument("--replicates", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    kind = "power_n" if args.sweep == "n" else "power_sep"
    config = default_experiment_config(kind)
    config = replace(
        config,
        replicates=args.replicates or config.replicates,
        plan=replace(config.plan, seed=args.seed),
        test=replace(config.test, seed=args.seed),
    )
    results = run_experiment(config)
    out = args.out or f"{kind}_report.json"
    emit_report(results, config, "json", out)
    print(f"{'sweep':>8} {'power':>7} {'se':>6} {'reps':>5} {'excl':>5}")
    for row in results["power_curve"]:
        print(f"{row['sweep_value']:>8.1f} {row['power']:>7.3f} "
              f"{row['binomial_se']:>6.3f} {row['n_replicates']:>5d} "
              f"{row['excluded_count']:>5d}")
    print(f"report written to {out}")


if __name__ == "__main__":
    main()
