#!/usr/bin/env python3
"""Compare APM variants and one-shot big-M baselines on a small seeded grid.

Writes runs.csv, aggregate.csv and aggregate_times.csv under --out and prints
the aggregate rows.  With --oracle every run is also checked against brute force.
"""
import argparse

from ccapm.bench import METHODS, BenchSpec, run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenarios", type=int, nargs="+", default=[10, 20])
    ap.add_argument("--tau", type=float, nargs="+", default=[0.1, 0.2])
    ap.add_argument("--domain", choices=("continuous", "binary"), default="continuous")
    ap.add_argument("--replicas", type=int, default=5)
    ap.add_argument("--methods", nargs="+", default=["P_random", "P_init", "P_infeas", "P_final",
                                                     "milp_box", "milp_objcut"], choices=METHODS)
    ap.add_argument("--time-limit", type=float, default=60.0)
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--oracle", action="store_true")
    ap.add_argument("--out", default="ablation_out")
    args = ap.parse_args()

    grid = BenchSpec(base_rows=5, base_vars=10, scenarios=args.scenarios, taus=args.tau, domain=args.domain,
                     replicas=args.replicas, methods=args.methods, time_limit=args.time_limit,
                     out_dir=args.out, workers=args.workers, check_oracle=args.oracle)
    rows, agg = run_benchmark(grid)
    print(f"{'tau':>5} {'|S|':>4} {'method':12s} {'solved':>6} {'gap':>9} {'it':>4} {'|P|':>4}")
    for a in agg:
        print(f"{a['tau']:>5} {a['num_scenarios']:>4} {a['method']:12s} {a['solved']:>3}/{a['runs']:<2} "
              f"{a['mean_gap_unsolved'] or '-':>9} {a['mean_iterations']:>4} {a['mean_partition_size']:>4}")
    if args.oracle:
        off = [r for r in rows if r.status == "optimal" and abs(r.objective - r.oracle_value) > 1e-6]
        print(f"oracle mismatches among optimal runs: {len(off)}")


if __name__ == "__main__":
    main()
