"""The adaptive partitioning loop, its variants and the projection heuristic."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .bounds import LOWER, UPPER, BigMTable, CostOracle, big_m_coefficients, quantile_bound, solve_bound, subset_cost
from .errors import ParameterError
from .instance import DEFAULT_TOL, CcspInstance, evaluate_point
from .milp import INFEASIBLE, OPTIMAL, SolverParams
from .partition import Partition, classify, descending_order, initial_partition_quantile, initial_partition_random
from .refine import RefineContext, compute_mu, merge_max, merge_trigger, refine_minimal

VARIANTS = {
    # name: (initial partition, split strategy, merging)
    "P_random": ("random", "random", False),
    "P_init": ("quantile", "random", False),
    "P_infeas": ("quantile", "violation_alternating", True),
    "P_final": ("quantile", "optimized", True),
    "P_beta": ("quantile", "optimized", True),
}
UPPER_STRATEGIES = ("model6", "projection", "both")
TRACE_COLUMNS = ("iteration", "elapsed_s", "lower_bound", "upper_bound", "rel_gap", "partition_size",
                 "mu", "splits", "merged", "incumbent_source")


@dataclass
class ApmConfig:
    variant: str = "P_final"
    beta: float = 0.0
    epsilon: float = 1e-6
    time_limit: float = 3600.0
    max_iterations: Optional[int] = None
    seed: int = 0
    bigm: str = "objcut"
    upper_strategy: str = "both"
    model6_every: int = 5
    solver: SolverParams = field(default_factory=lambda: SolverParams(gap_rel=1e-9))
    candidate_cap: int = 10
    dual_bound: Optional[float] = None
    feas_tol: float = DEFAULT_TOL
    lazy: bool = True
    cache_dir: Optional[str] = None
    keep_history: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {sorted(VARIANTS)}")
        if not 0.0 < self.epsilon < 1.0:
            raise ParameterError("epsilon must lie in (0, 1)")
        if not self.time_limit > 0:
            raise ParameterError("time limit must be positive")
        if self.beta < 0:
            raise ParameterError("beta must be nonnegative")
        if self.bigm not in ("box", "objcut", "partitioned"):
            raise ParameterError("bigm must be box, objcut or partitioned")
        if self.upper_strategy not in UPPER_STRATEGIES:
            raise ParameterError(f"upper_strategy must be one of {UPPER_STRATEGIES}")
        if self.model6_every < 1 or self.candidate_cap < 1:
            raise ParameterError("model6_every and candidate_cap must be >= 1")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ParameterError("max_iterations must be nonnegative")

    def split_count(self, mu: int) -> int:
        if self.variant == "P_beta":
            return math.ceil(mu * (1.0 + self.beta / 100.0) - 1e-12)
        return mu


@dataclass
class IterationRecord:
    iteration: int
    elapsed_s: float
    lower_bound: float
    upper_bound: float
    rel_gap: float
    partition_size: int
    mu: int = 0
    splits: int = 0
    merged: bool = False
    incumbent_source: str = ""
    # instrumentation (not part of the CSV trace)
    lower_raw: float = math.nan
    multi_infeasible: int = 0
    trigger_value: float = math.nan
    trigger: bool = False
    witness: Optional[np.ndarray] = field(default=None, repr=False)
    partition: Optional[Partition] = field(default=None, repr=False)
    refinement: Optional[Partition] = field(default=None, repr=False)
    next_partition: Optional[Partition] = field(default=None, repr=False)

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in TRACE_COLUMNS}


@dataclass
class ApmResult:
    status: str
    x: Optional[np.ndarray]
    upper: float
    lower: float
    gap: float
    iterations: int
    elapsed: float
    trace: list[IterationRecord]
    quantile_bound: float
    initial_partition: Partition
    final_partition: Partition
    incumbent_source: str = ""

    @property
    def objective(self) -> float:
        return self.upper

    def summary(self) -> dict:
        return {"status": self.status, "lower_bound": self.lower, "upper_bound": self.upper,
                "rel_gap": self.gap, "iterations": self.iterations, "wall_time_s": self.elapsed,
                "final_partition_size": len(self.final_partition), "quantile_bound": self.quantile_bound,
                "incumbent_source": self.incumbent_source,
                "x": None if self.x is None else [float(v) for v in self.x]}


def relative_gap(upper: float, lower: float) -> float:
    if not np.isfinite(upper):
        return math.inf
    return max(0.0, (upper - lower) / max(abs(upper), 1e-10))


class IncumbentStore:
    """Best chance-feasible point seen so far; only strictly better offers replace it."""

    def __init__(self, instance: CcspInstance, tol: float = DEFAULT_TOL):
        self.instance = instance
        self.tol = tol
        self.value = math.inf
        self.x: Optional[np.ndarray] = None
        self.source = ""
        self.updates = 0

    def offer(self, x, value=None, source: str = "") -> bool:
        if x is None:
            return False
        x = np.asarray(x, dtype=float)
        if self.instance.is_binary:
            x = np.round(x)
        if not self.instance.in_domain(x, self.tol):
            return False
        if not evaluate_point(self.instance, x, self.tol).chance_feasible:
            return False
        value = self.instance.objective_value(x)
        if value < self.value - 1e-12 * max(1.0, abs(value)):
            self.value, self.x, self.source = value, x.copy(), source
            self.updates += 1
            return True
        return False


@dataclass(frozen=True)
class Projection:
    x: np.ndarray
    value: float
    enforced: tuple[int, ...]


def project_to_feasible(instance: CcspInstance, x, tol: float = DEFAULT_TOL,
                        params: SolverParams | None = None) -> Optional[Projection]:
    """Enforce the satisfied scenarios plus the least violated ones, then re-optimise.

    Returns ``None`` when the restricted problem is infeasible.
    """
    viol = instance.scenario_violation(np.asarray(x, dtype=float))
    enforced = [int(s) for s in np.flatnonzero(viol <= tol)]
    missing = instance.required_satisfied - len(enforced)
    if missing > 0:
        extra = sorted((s for s in range(instance.num_scenarios) if viol[s] > tol), key=lambda s: (viol[s], s))
        enforced += extra[:missing]
    res = subset_cost(instance, enforced, relax=False, params=params)
    if not res.feasible:
        return None
    return Projection(res.x, res.value, tuple(sorted(enforced)))


class _BigMManager:
    """Keeps the big-M table in use consistent with the scheme and incumbent."""

    def __init__(self, instance, scheme, params, cache_dir):
        self.instance, self.scheme, self.params, self.cache_dir = instance, scheme, params, cache_dir
        self.box = big_m_coefficients(instance, "box", params, cache_dir=cache_dir)
        self.base = self.box
        self.scoped: Optional[BigMTable] = None

    def table(self, partition: Partition, incumbent: float) -> BigMTable:
        if self.scheme in ("objcut", "partitioned") and np.isfinite(incumbent):
            if self.base.cut_value is None or incumbent < self.base.cut_value - 1e-9 * max(1.0, abs(incumbent)):
                self.base = big_m_coefficients(self.instance, "objcut", self.params, cut_value=incumbent,
                                               cache_dir=self.cache_dir)
                self.scoped = None
        if self.scheme != "partitioned":
            return self.base
        if self.scoped is None or not self.scoped.covers(partition):
            self.scoped = big_m_coefficients(self.instance, "partitioned", self.params, partition=partition,
                                             base=self.base)
        return self.scoped


def run_apm(instance: CcspInstance, config: ApmConfig | None = None) -> ApmResult:
    """Adaptive partitioning: alternate reduced lower-model solves with refinement/merging."""
    config = config or ApmConfig()
    t0 = time.perf_counter()
    init_kind, strategy, merging = VARIANTS[config.variant]
    params = config.solver
    store = IncumbentStore(instance, config.feas_tol)
    oracle = CostOracle(instance, params, on_witness=store.offer)
    ctx = RefineContext(oracle, np.random.default_rng(config.seed), params, config.candidate_cap, config.dual_bound)

    rho = oracle.scenario_costs()
    v_q = quantile_bound(instance, rho)
    if config.upper_strategy in ("projection", "both"):
        anchor = oracle.cost((int(descending_order(rho)[instance.k]),))
        if anchor.feasible:
            proj = project_to_feasible(instance, anchor.x, config.feas_tol, params)
            if proj is not None:
                store.offer(proj.x, proj.value, "projection")
    if init_kind == "random":
        partition = initial_partition_random(instance, instance.min_partition_size, config.seed)
    else:
        partition = initial_partition_quantile(instance, rho)
    initial = partition
    bigm = _BigMManager(instance, config.bigm, params, config.cache_dir)

    trace: list[IterationRecord] = []
    best_lower = v_q if np.isfinite(v_q) else -math.inf
    status = None
    j = 0
    while True:
        remaining = config.time_limit - (time.perf_counter() - t0)
        if remaining <= 0:
            status = "time_limit"
            break
        sub = replace(params, time_limit=remaining)
        table = bigm.table(partition, store.value)
        low = solve_bound(instance, partition, table, LOWER, sub, lazy=config.lazy)
        if low.outcome.status == INFEASIBLE:
            status = "infeasible"
            break
        if np.isfinite(low.value):
            best_lower = max(best_lower, low.value)
        if low.outcome.status != OPTIMAL or low.x is None:
            status = "time_limit"
            trace.append(_record(j, t0, low.value, store, best_lower, partition))
            break
        report = evaluate_point(instance, low.x, config.feas_tol)
        if report.chance_feasible:
            store.offer(low.x, source="lower_witness")
        if config.upper_strategy in ("projection", "both"):
            proj = project_to_feasible(instance, low.x, config.feas_tol, sub)
            if proj is not None:
                store.offer(proj.x, proj.value, "projection")
        if config.upper_strategy in ("model6", "both") and j % config.model6_every == 0:
            up = solve_bound(instance, partition, bigm.table(partition, store.value), UPPER, sub, lazy=config.lazy)
            if up.x is not None:
                store.offer(up.x, up.value, "model6")
        rec = _record(j, t0, low.value, store, best_lower, partition)
        rec.witness = low.x.copy()
        trace.append(rec)
        if report.chance_feasible or rec.rel_gap < config.epsilon:
            status = "optimal"
            break
        if config.max_iterations is not None and j >= config.max_iterations:
            status = "iteration_limit"
            break
        if time.perf_counter() - t0 >= config.time_limit:
            status = "time_limit"
            break

        cls = classify(partition, instance, low.x, config.feas_tol)
        mu = compute_mu(instance, cls)
        bad = cls.scenario_violation > config.feas_tol
        rec.mu = mu
        rec.multi_infeasible = sum(1 for p in partition.subsets if bad[list(p)].sum() >= 2)
        refined, plans = refine_minimal(instance, partition, low.x, strategy, config.split_count(mu), ctx,
                                        v_lower=low.value, tol=config.feas_tol)
        rec.splits = len(plans)
        rec.refinement = refined
        nxt = refined
        if merging:
            rec.trigger, rec.trigger_value = merge_trigger(partition, refined, oracle, low.value)
            if rec.trigger:
                nxt, _ = merge_max(instance, partition, refined, low.x, oracle, low.value, len(plans),
                                   config.feas_tol)
                rec.merged = True
        rec.next_partition = nxt
        if not config.keep_history:
            rec.partition = rec.refinement = rec.next_partition = None
        partition = nxt
        j += 1

    elapsed = time.perf_counter() - t0
    gap = relative_gap(store.value, best_lower)
    return ApmResult(status, store.x, store.value, best_lower, gap, j, elapsed, trace, v_q, initial, partition,
                     store.source)


def _record(j, t0, raw, store, best_lower, partition) -> IterationRecord:
    return IterationRecord(
        iteration=j, elapsed_s=time.perf_counter() - t0, lower_bound=best_lower, upper_bound=store.value,
        rel_gap=relative_gap(store.value, best_lower), partition_size=len(partition),
        incumbent_source=store.source, lower_raw=raw, partition=partition)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def write_trace(result: ApmResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for rec in result.trace:
            row = rec.csv_row()
            row["merged"] = int(row["merged"])
            writer.writerow(row)
    tmp.replace(path)


def write_summary(result: ApmResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.summary(), indent=2, default=float))


__all__ = ["ApmConfig", "ApmResult", "IterationRecord", "IncumbentStore", "Projection", "VARIANTS",
           "project_to_feasible", "relative_gap", "run_apm", "write_trace", "write_summary"]
