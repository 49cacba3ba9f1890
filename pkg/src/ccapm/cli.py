"""Command-line entry point: ``ccapm {generate,solve,verify,bench}``.

Exit codes: 0 success, 1 bad parameters or input, 2 solver failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .apm import VARIANTS, ApmConfig, run_apm, write_summary, write_trace
from .bench import BASELINES, METHODS, BenchSpec, run_benchmark, solve_baseline, verify
from .errors import ParameterError, SolverError
from .instance import CcspInstance, fixture_t1, fixture_t2, generate_knapsack_instance, load_instance, save_instance
from .milp import SolverParams

FIXTURES = {"T1": fixture_t1, "T2": fixture_t2}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _solver_params(args) -> SolverParams:
    return SolverParams(gap_rel=1e-9, backend=args.solver)


def _load(ref: str, tau: float | None) -> CcspInstance:
    if ref in FIXTURES:
        inst = FIXTURES[ref]()
    else:
        try:
            inst = load_instance(ref)
        except (OSError, ValueError, KeyError) as exc:
            raise ParameterError(f"cannot read instance {ref!r}: {exc}") from exc
    return replace(inst, tau=tau) if tau is not None else inst


def _add_solver_flags(p):
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--time-limit", type=float, default=3600.0)
    p.add_argument("--bigm", choices=("box", "objcut", "partitioned"), default="objcut")
    p.add_argument("--solver", default="builtin", help="builtin or external:<command>")
    p.add_argument("--beta", type=float, default=0.0, help="extra split percentage for P_beta")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ccapm", description="Adaptive partitioning for finite-scenario chance constraints")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded knapsack instance as JSON")
    g.add_argument("--rows", type=int, default=5)
    g.add_argument("--vars", type=int, default=10)
    g.add_argument("--scenarios", type=int, default=10)
    g.add_argument("--tau", type=float, default=0.2)
    g.add_argument("--domain", choices=("continuous", "binary"), default="continuous")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--replica", type=int, default=None)
    g.add_argument("-o", "--output", required=True)

    s = sub.add_parser("solve", help="solve an instance file (or T1/T2)")
    s.add_argument("instance")
    s.add_argument("--variant", choices=tuple(VARIANTS) + BASELINES, default="P_final")
    s.add_argument("--tau", type=float, default=None, help="override the instance tau")
    s.add_argument("--max-iterations", type=int, default=None)
    s.add_argument("--trace-out", default=None)
    s.add_argument("--out-dir", default=None, help="write summary.json (and trace.csv) here")
    _add_solver_flags(s)

    v = sub.add_parser("verify", help="compare methods with the brute-force oracle")
    v.add_argument("instance")
    v.add_argument("--variant", nargs="+", choices=METHODS, default=["P_final"])
    v.add_argument("--tau", type=float, default=None)
    _add_solver_flags(v)

    b = sub.add_parser("bench", help="run a benchmark grid")
    b.add_argument("--rows", type=int, default=5)
    b.add_argument("--vars", type=int, default=10)
    b.add_argument("--scenarios", type=int, nargs="+", default=[10])
    b.add_argument("--tau", type=float, nargs="+", default=[0.2])
    b.add_argument("--domain", choices=("continuous", "binary"), default="continuous")
    b.add_argument("--replicas", type=int, default=5)
    b.add_argument("--variant", nargs="+", choices=METHODS, default=["P_final", "milp_box"])
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--oracle", action="store_true", help="also record brute-force optima")
    b.add_argument("--out-dir", default="bench_out")
    _add_solver_flags(b)
    return parser


def _cmd_generate(args) -> int:
    inst = generate_knapsack_instance(args.rows, args.vars, args.scenarios, args.tau, args.domain,
                                      seed=args.seed, replica=args.replica)
    save_instance(inst, args.output)
    print(json.dumps({"output": args.output, "fingerprint": inst.fingerprint(), "k": inst.k}))
    return 0


def _cmd_solve(args) -> int:
    inst = _load(args.instance, args.tau)
    params = _solver_params(args)
    if args.variant in BASELINES:
        out = solve_baseline(inst, args.variant.split("_", 1)[1], args.time_limit, params)
        summary = {"status": out["status"], "upper_bound": out["objective"], "lower_bound": out["lower"],
                   "rel_gap": out["gap"], "wall_time_s": out["elapsed"],
                   "x": None if out["x"] is None else [float(v) for v in out["x"]]}
        if args.out_dir:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            (Path(args.out_dir) / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
        print(json.dumps(summary, default=float))
        return 0
    cfg = ApmConfig(variant=args.variant, beta=args.beta, epsilon=args.epsilon, time_limit=args.time_limit,
                    max_iterations=args.max_iterations, seed=args.seed, bigm=args.bigm, solver=params,
                    keep_history=False)
    res = run_apm(inst, cfg)
    if args.trace_out:
        write_trace(res, args.trace_out)
    if args.out_dir:
        write_summary(res, Path(args.out_dir) / "summary.json")
        write_trace(res, Path(args.out_dir) / "trace.csv")
    print(json.dumps(res.summary(), default=float))
    return 0


def _cmd_verify(args) -> int:
    inst = _load(args.instance, args.tau)
    cfg = ApmConfig(beta=args.beta, epsilon=args.epsilon, time_limit=args.time_limit, seed=args.seed,
                    bigm=args.bigm, solver=_solver_params(args))
    report = verify(inst, args.variant, config=cfg)
    print(f"oracle optimum {report.oracle_value:.10g}")
    for c in report.checks:
        print(f"{c.method:12s} {c.status:15s} objective {c.objective:.10g} delta {c.delta:.3g} "
              f"sandwich {c.sandwich_violations} monotone {c.monotonicity_violations} "
              f"exclusion {c.exclusion_violations} sizes {c.size_violations} {'ok' if c.ok else 'FAIL'}")
    return 0 if report.ok else 2


def _cmd_bench(args) -> int:
    grid = BenchSpec(base_rows=args.rows, base_vars=args.vars, scenarios=args.scenarios, taus=args.tau,
                     domain=args.domain, replicas=args.replicas, seed=args.seed, methods=args.variant,
                     time_limit=args.time_limit, epsilon=args.epsilon, beta=args.beta, bigm=args.bigm,
                     out_dir=args.out_dir, workers=args.workers, check_oracle=args.oracle, solver=args.solver)
    rows, agg = run_benchmark(grid)
    for a in agg:
        print(",".join(str(v) for v in a.values()))
    failed = sum(r.status == "error" for r in rows)
    if failed:
        print(f"{failed} run(s) failed; see runs.csv", file=sys.stderr)
    return 0


COMMANDS = {"generate": _cmd_generate, "solve": _cmd_solve, "verify": _cmd_verify, "bench": _cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        detail = getattr(exc, "output", "")
        if detail:
            print(detail, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
