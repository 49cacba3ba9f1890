#!/usr/bin/env python3
"""Run APM variants on one generated instance and write a trace CSV per variant.

Example:
    python scripts/trace_experiment.py --scenarios 100 --seed 2 --max-iterations 8 --out traces/
"""
import argparse
from pathlib import Path

from ccapm.apm import VARIANTS, ApmConfig, run_apm, write_summary, write_trace
from ccapm.instance import generate_knapsack_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=10)
    ap.add_argument("--vars", type=int, default=10)
    ap.add_argument("--scenarios", type=int, default=100)
    ap.add_argument("--tau", type=float, default=0.2)
    ap.add_argument("--domain", choices=("continuous", "binary"), default="continuous")
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--variants", nargs="+", default=["P_final", "P_infeas", "P_init"], choices=sorted(VARIANTS))
    ap.add_argument("--beta", type=float, default=100.0)
    ap.add_argument("--max-iterations", type=int, default=None)
    ap.add_argument("--time-limit", type=float, default=600.0)
    ap.add_argument("--out", default="traces")
    args = ap.parse_args()

    inst = generate_knapsack_instance(args.rows, args.vars, args.scenarios, args.tau, args.domain, seed=args.seed)
    out = Path(args.out)
    for variant in args.variants:
        cfg = ApmConfig(variant=variant, beta=args.beta, time_limit=args.time_limit,
                        max_iterations=args.max_iterations, keep_history=False)
        res = run_apm(inst, cfg)
        write_trace(res, out / f"{variant}.csv")
        write_summary(res, out / f"{variant}.json")
        sizes = [r.partition_size for r in res.trace]
        print(f"{variant:9s} {res.status:15s} iters={res.iterations:3d} gap={res.gap:.2e} "
              f"time={res.elapsed:6.1f}s sizes={sizes}")


if __name__ == "__main__":
    main()
