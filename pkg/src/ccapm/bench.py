"""Batch experiments, baseline one-shot solves and oracle verification."""
from __future__ import annotations

import csv
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .apm import VARIANTS, ApmConfig, IncumbentStore, project_to_feasible, relative_gap, run_apm, write_trace
from .bounds import LOWER, CostOracle, big_m_coefficients, solve_bound
from .errors import ParameterError
from .instance import CcspInstance, generate_knapsack_instance
from .milp import OPTIMAL, SolverParams
from .oracle import DEFAULT_CAP, brute_force_optimal
from .partition import Partition, descending_order, excluded_by

BASELINES = ("milp_box", "milp_objcut")
METHODS = tuple(VARIANTS) + BASELINES


@dataclass
class BenchSpec:
    base_rows: int = 5
    base_vars: int = 10
    scenarios: tuple[int, ...] = (10,)
    taus: tuple[float, ...] = (0.2,)
    domain: str = "continuous"
    replicas: int = 5
    seed: int = 0
    methods: tuple[str, ...] = ("P_final", "milp_box")
    time_limit: float = 60.0
    epsilon: float = 1e-6
    beta: float = 100.0
    bigm: str = "objcut"
    out_dir: str = "bench_out"
    workers: int = 1
    check_oracle: bool = False
    solver: str = "builtin"

    def __post_init__(self):
        self.scenarios = tuple(int(s) for s in self.scenarios)
        self.taus = tuple(float(t) for t in self.taus)
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ParameterError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ParameterError(f"unknown methods {unknown}; choose from {METHODS}")
        if self.replicas < 1:
            raise ParameterError("replicas must be >= 1")
        if not self.scenarios or not self.taus:
            raise ParameterError("scenario and tau lists must be nonempty")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")

    def family(self) -> str:
        return f"mk-{self.base_rows}-{self.base_vars}-{self.domain[:3]}"


@dataclass
class RunRow:
    instance_id: str
    method: str
    tau: float
    num_scenarios: int
    status: str
    wall_s: float
    gap: float
    iterations: int
    partition_size: int
    objective: float = math.nan
    lower_bound: float = math.nan
    oracle_value: float = math.nan
    error: str = ""


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------

def solve_baseline(instance: CcspInstance, scheme: str = "box", time_limit: float = 60.0,
                   params: SolverParams | None = None, lazy: bool = False) -> dict:
    """One-shot big-M model over all scenarios (one binary per scenario)."""
    t0 = time.perf_counter()
    params = replace(params or SolverParams(gap_rel=1e-9), time_limit=time_limit)
    store = IncumbentStore(instance)
    table = big_m_coefficients(instance, "box", params)
    if scheme == "objcut":
        oracle = CostOracle(instance, params, on_witness=store.offer)
        rho = oracle.scenario_costs()
        anchor = oracle.cost((int(descending_order(rho)[instance.k]),))
        if anchor.feasible:
            proj = project_to_feasible(instance, anchor.x, params=params)
            if proj is not None:
                store.offer(proj.x, proj.value, "projection")
        if np.isfinite(store.value):
            table = big_m_coefficients(instance, "objcut", params, cut_value=store.value)
    remaining = max(time_limit - (time.perf_counter() - t0), 1e-3)
    res = solve_bound(instance, Partition.singletons(instance.num_scenarios), table, LOWER,
                      replace(params, time_limit=remaining), lazy=lazy)
    if res.x is not None:
        store.offer(res.x, source="model")
    status = "optimal" if res.outcome.status == OPTIMAL else res.outcome.status
    lower = res.value if np.isfinite(res.value) else -math.inf
    return {"status": status, "objective": store.value, "lower": lower, "x": store.x,
            "gap": relative_gap(store.value, lower) if status != "optimal" else 0.0,
            "elapsed": time.perf_counter() - t0}


def _run_one(job) -> tuple[RunRow, Optional[list]]:
    grid, instance, inst_id, method, oracle_value = job
    t0 = time.perf_counter()
    params = SolverParams(gap_rel=1e-9, backend=grid.solver)
    try:
        if method in BASELINES:
            out = solve_baseline(instance, method.split("_", 1)[1], grid.time_limit, params)
            row = RunRow(inst_id, method, instance.tau, instance.num_scenarios, out["status"],
                         out["elapsed"], out["gap"], 0, instance.num_scenarios, out["objective"], out["lower"])
            return row, None
        cfg = ApmConfig(variant=method, beta=grid.beta, epsilon=grid.epsilon, time_limit=grid.time_limit,
                        seed=grid.seed, bigm=grid.bigm, solver=params, keep_history=False)
        res = run_apm(instance, cfg)
        row = RunRow(inst_id, method, instance.tau, instance.num_scenarios, res.status, res.elapsed,
                     res.gap, res.iterations, len(res.final_partition), res.upper, res.lower)
        return row, res
    except Exception as exc:  # one failed run must not stop the batch
        detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return RunRow(inst_id, method, instance.tau, instance.num_scenarios, "error",
                      time.perf_counter() - t0, math.nan, 0, 0, error=detail), None


def _job_worker(job):
    row, res = _run_one(job)
    grid, _, inst_id, method, oracle_value = job
    row.oracle_value = oracle_value
    if res is not None:
        path = Path(grid.out_dir) / "traces" / f"{inst_id}__{method}.csv"
        write_trace(res, path)
    return row


# ---------------------------------------------------------------------------
# Benchmark grid
# ---------------------------------------------------------------------------

def bench_instances(grid: BenchSpec):
    for S in grid.scenarios:
        for tau in grid.taus:
            for r in range(grid.replicas):
                inst = generate_knapsack_instance(grid.base_rows, grid.base_vars, S, tau, grid.domain,
                                                  seed=grid.seed, replica=r)
                yield f"{grid.family()}-S{S}-t{tau:g}-r{r}", inst


def run_benchmark(grid: BenchSpec) -> tuple[list[RunRow], list[dict]]:
    """Run every (instance, method) pair and write ``runs.csv``, ``aggregate.csv``
    and ``aggregate_times.csv`` under ``grid.out_dir``."""
    out = Path(grid.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for inst_id, inst in bench_instances(grid):
        ov = math.nan
        if grid.check_oracle and math.comb(inst.num_scenarios, inst.required_satisfied) <= DEFAULT_CAP:
            ov = brute_force_optimal(inst).value
        jobs.extend((grid, inst, inst_id, m, ov) for m in grid.methods)
    if grid.workers > 1:
        with ProcessPoolExecutor(max_workers=grid.workers) as pool:
            rows = list(pool.map(_job_worker, jobs))
    else:
        rows = [_job_worker(j) for j in jobs]
    rows.sort(key=lambda r: (r.num_scenarios, r.tau, r.instance_id, r.method))
    _write_rows(out / "runs.csv", rows)
    agg = aggregate(rows, grid)
    _write_dicts(out / "aggregate.csv", [{k: v for k, v in a.items() if k != "mean_time_s"} for a in agg])
    _write_dicts(out / "aggregate_times.csv",
                 [{k: a[k] for k in ("family", "tau", "num_scenarios", "method", "solved", "mean_time_s")}
                  for a in agg])
    return rows, agg


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6g}"


def aggregate(rows: list[RunRow], grid: BenchSpec) -> list[dict]:
    """Per (tau, |S|, method): solved count, mean time over solved runs,
    mean gap over unsolved runs, rounded mean iterations and partition size."""
    groups: dict[tuple, list[RunRow]] = {}
    for r in rows:
        groups.setdefault((r.tau, r.num_scenarios, r.method), []).append(r)
    out = []
    for (tau, S, method), rs in sorted(groups.items()):
        solved = [r for r in rs if r.status == "optimal"]
        unsolved = [r for r in rs if r.status != "optimal" and np.isfinite(r.gap)]
        out.append({
            "family": grid.family(), "tau": f"{tau:g}", "num_scenarios": S, "method": method,
            "runs": len(rs), "solved": len(solved),
            "mean_gap_unsolved": _fmt(float(np.mean([r.gap for r in unsolved]))) if unsolved else "",
            "mean_iterations": int(round(np.mean([r.iterations for r in rs]))),
            "mean_partition_size": int(round(np.mean([r.partition_size for r in rs]))),
            "mean_time_s": _fmt(float(np.mean([r.wall_s for r in solved]))) if solved else "",
        })
    return out


def _write_dicts(path: Path, dicts: list[dict]) -> None:
    tmp = path.with_suffix(".tmp")
    with tmp.open("w", newline="") as fh:
        if dicts:
            w = csv.DictWriter(fh, fieldnames=list(dicts[0]))
            w.writeheader()
            w.writerows(dicts)
    tmp.replace(path)


def _write_rows(path: Path, rows: list[RunRow]) -> None:
    _write_dicts(path, [{k: (_fmt(v) if isinstance(v, float) else v) for k, v in asdict(r).items()} for r in rows])


# ---------------------------------------------------------------------------
# Verification against the oracle
# ---------------------------------------------------------------------------

@dataclass
class MethodCheck:
    method: str
    status: str
    objective: float
    delta: float
    sandwich_violations: int = 0
    monotonicity_violations: int = 0
    exclusion_violations: int = 0
    size_violations: int = 0

    @property
    def ok(self) -> bool:
        return (self.delta <= 1e-6 and not self.sandwich_violations and not self.monotonicity_violations
                and not self.exclusion_violations and not self.size_violations)


@dataclass
class VerifyReport:
    oracle_value: float
    checks: list[MethodCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)


def verify(instance: CcspInstance, methods=("P_final",), cap: int = DEFAULT_CAP, config: ApmConfig | None = None,
           tol: float = 1e-6) -> VerifyReport:
    """Compare each method with the brute-force optimum and audit APM traces."""
    try:
        ref = brute_force_optimal(instance, cap)
    except ParameterError as exc:
        raise ParameterError(f"{exc}; verify needs a smaller instance") from exc
    report = VerifyReport(ref.value)
    base = config or ApmConfig()
    for method in methods:
        if method in BASELINES:
            out = solve_baseline(instance, method.split("_", 1)[1], base.time_limit, base.solver)
            report.checks.append(MethodCheck(method, out["status"], out["objective"], abs(out["objective"] - ref.value)))
            continue
        if method not in VARIANTS:
            raise ParameterError(f"unknown method {method!r}")
        res = run_apm(instance, replace(base, variant=method))
        check = MethodCheck(method, res.status, res.upper, abs(res.upper - ref.value))
        audit_trace(instance, res.trace, ref.value, check, tol, VARIANTS[method][2])
        report.checks.append(check)
    return report


def audit_trace(instance, trace, v_star, check: MethodCheck, tol: float = 1e-6, merging: bool = True) -> MethodCheck:
    slack = tol * max(1.0, abs(v_star))
    prev_raw = -math.inf
    for rec in trace:
        if rec.lower_raw > v_star + slack or rec.upper_bound < v_star - slack:
            check.sandwich_violations += 1
        if rec.lower_raw < prev_raw - slack:
            check.monotonicity_violations += 1
        prev_raw = max(prev_raw, rec.lower_raw)
        if rec.next_partition is not None and rec.witness is not None:
            if not excluded_by(rec.next_partition, instance, rec.witness):
                check.exclusion_violations += 1
            expected = rec.partition_size if rec.merged else rec.partition_size + rec.splits
            if len(rec.next_partition) != expected:
                check.size_violations += 1
    return check
