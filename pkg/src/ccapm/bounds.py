"""Subset costs, the quantile bound, big-M tables and the reduced bound models."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import ContractError, ParameterError, SolverError
from .instance import CcspInstance
from .milp import (GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, LinearModel, ModelBuilder, SolveOutcome,
                   SolverParams, lp_solve, solve_model)
from .partition import Partition, descending_order

SCHEMES = ("box", "objcut", "partitioned")
LOWER, UPPER = "lower", "upper"

WitnessCallback = Callable[[np.ndarray, float, str], None]


# ---------------------------------------------------------------------------
# Subset costs
# ---------------------------------------------------------------------------

def _domain_builder(instance: CcspInstance, relax: bool) -> tuple[ModelBuilder, list[int]]:
    b = ModelBuilder()
    xs = [b.add_var(instance.lower[j], instance.upper[j], instance.objective[j],
                    integer=instance.is_binary and not relax, name=f"x{j}")
          for j in range(instance.num_vars)]
    for r in range(instance.det_lhs.shape[0]):
        b.add_row(dict(enumerate(instance.det_lhs[r])), LE, instance.det_rhs[r])
    return b, xs


@dataclass(frozen=True)
class CostResult:
    value: float
    x: Optional[np.ndarray]

    @property
    def feasible(self) -> bool:
        return self.x is not None


def subset_cost(instance: CcspInstance, subset: Iterable[int], relax: bool = False,
                params: SolverParams | None = None) -> CostResult:
    """``min c'x`` over the domain and every row of the member scenarios (``+inf`` if empty)."""
    subset = sorted(set(int(s) for s in subset))
    if not subset:
        raise ParameterError("subset must be nonempty")
    params = params or SolverParams()
    A = instance.lhs[subset].reshape(-1, instance.num_vars)
    b = instance.rhs[subset].reshape(-1)
    if not instance.is_binary or relax:
        A_all = np.vstack([instance.det_lhs, A])
        b_all = np.concatenate([instance.det_rhs, b])
        status, x, obj = lp_solve(instance.objective, A_all, np.full(len(b_all), LE, dtype=object), b_all,
                                  instance.lower, instance.upper, params.lp_engine)
        if status == INFEASIBLE:
            return CostResult(math.inf, None)
        if status == UNBOUNDED:
            raise SolverError("subset cost is unbounded; variable bounds must be finite")
        return CostResult(obj, x)
    builder, xs = _domain_builder(instance, relax=False)
    for row, rhs in zip(A, b):
        builder.add_row(dict(zip(xs, row)), LE, rhs)
    out = solve_model(builder.build(), params)
    if out.status == INFEASIBLE:
        return CostResult(math.inf, None)
    if not out.ok:
        raise SolverError(f"subset cost solve ended with status {out.status}")
    return CostResult(out.objective, out.x)


def scenario_cost(instance: CcspInstance, s: int, relax: bool = False,
                  params: SolverParams | None = None) -> CostResult:
    return subset_cost(instance, (s,), relax, params)


class CostOracle:
    """Memoised subset costs that reports every exact witness to a callback."""

    def __init__(self, instance: CcspInstance, params: SolverParams | None = None,
                 on_witness: WitnessCallback | None = None):
        self.instance = instance
        self.params = params or SolverParams()
        self.on_witness = on_witness
        self._cache: dict[tuple[frozenset, bool], CostResult] = {}
        self.evaluations = 0

    def cost(self, subset: Iterable[int], relax: bool = False) -> CostResult:
        relax = relax and self.instance.is_binary
        key = (frozenset(int(s) for s in subset), relax)
        hit = self._cache.get(key)
        if hit is None:
            hit = subset_cost(self.instance, key[0], relax, self.params)
            self._cache[key] = hit
            self.evaluations += 1
            if hit.feasible and not relax and self.on_witness is not None:
                self.on_witness(hit.x, hit.value, "rho_witness")
        return hit

    def value(self, subset: Iterable[int], relax: bool = False) -> float:
        return self.cost(subset, relax).value

    def scenario_costs(self, relax: bool = False) -> np.ndarray:
        return np.array([self.value((s,), relax) for s in range(self.instance.num_scenarios)])


def quantile_bound(instance: CcspInstance, scenario_costs) -> float:
    """The ``(k+1)``-th largest scenario cost, a lower bound on the optimum."""
    costs = np.asarray(scenario_costs, dtype=float)
    if costs.shape != (instance.num_scenarios,):
        raise ParameterError("one cost per scenario is required")
    return float(costs[descending_order(costs)[instance.k]])


# ---------------------------------------------------------------------------
# Big-M tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BigMTable:
    """Per-(scenario, row) bounds on row violation.

    ``scope`` is ``"global"`` (valid over the domain, intersected with
    ``c'x <= cut_value`` when a cut is recorded) or ``"partition"`` (valid for
    ``partition`` and any of its refinements).
    """

    values: np.ndarray
    scheme: str
    scope: str = "global"
    cut_value: Optional[float] = None
    partition: Optional[Partition] = field(default=None, compare=False)
    generation: Optional[int] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ParameterError("big-M entries must be finite and nonnegative")
        object.__setattr__(self, "values", vals)
        if self.scope not in ("global", "partition"):
            raise ParameterError("scope must be 'global' or 'partition'")
        if self.scope == "partition" and self.partition is None:
            raise ParameterError("a partition-scoped table must name its partition")

    def covers(self, partition: Partition) -> bool:
        if self.scope == "global":
            return True
        return partition.is_refinement_of(self.partition)

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "scope": self.scope, "cut_value": self.cut_value,
                "generation": self.generation, "values": self.values.tolist(),
                "partition": None if self.partition is None else self.partition.to_lists()}

    @classmethod
    def from_dict(cls, data: dict) -> "BigMTable":
        part = data.get("partition")
        return cls(np.asarray(data["values"]), data["scheme"], data["scope"], data.get("cut_value"),
                   None if part is None else Partition(tuple(tuple(p) for p in part)), data.get("generation"))


def _box_max(A: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Row-wise ``max a'x`` over a box."""
    return np.where(A > 0, A * upper, A * lower).sum(axis=-1)


def knapsack_lp_max(a: np.ndarray, c: np.ndarray, cut: float, lower: np.ndarray, upper: np.ndarray) -> float:
    """``max a'x`` s.t. ``c'x <= cut`` over a box, by the fractional greedy.

    Returns ``-inf`` when the cut leaves the box empty.
    """
    x = np.where(a > 0, upper, lower).astype(float)
    excess = float(c @ x) - cut
    value = float(a @ x)
    if excess <= 0:
        return value
    other = np.where(a > 0, lower, upper)
    step = other - x
    relief = -c * step          # drop in c'x when fully moved
    loss = -a * step            # drop in a'x when fully moved (>= 0)
    usable = relief > 1e-15
    order = np.flatnonzero(usable)[np.argsort(loss[usable] / relief[usable], kind="stable")]
    for j in order:
        if relief[j] >= excess:
            return value - loss[j] * excess / relief[j]
        excess -= relief[j]
        value -= loss[j]
    return -math.inf if excess > 1e-9 * max(1.0, abs(cut)) else value


def _lp_row_max(instance: CcspInstance, extra_A=None, extra_b=None, params=None) -> np.ndarray:
    params = params or SolverParams()
    S, m, n = instance.lhs.shape
    A = instance.det_lhs
    b = instance.det_rhs
    if extra_A is not None:
        A = np.vstack([A, extra_A])
        b = np.concatenate([b, extra_b])
    sense = np.full(len(b), LE, dtype=object)
    out = np.empty((S, m))
    for s in range(S):
        for i in range(m):
            status, _, obj = lp_solve(-instance.lhs[s, i], A, sense, b, instance.lower, instance.upper,
                                      params.lp_engine)
            if status == UNBOUNDED:
                raise SolverError("big-M LP is unbounded: the domain needs finite variable bounds")
            if status != OPTIMAL:
                out[s, i] = -math.inf
                continue
            out[s, i] = -obj - instance.rhs[s, i]
    return out


def _cache_path(cache_dir, instance: CcspInstance, tag: str) -> Optional[Path]:
    if cache_dir is None:
        return None
    return Path(cache_dir) / f"bigm-{instance.fingerprint()}-{tag}.json"


def big_m_coefficients(instance: CcspInstance, scheme: str = "box", params: SolverParams | None = None, *,
                       cut_value: float | None = None, partition: Partition | None = None,
                       base: BigMTable | None = None, relax_partitioned: bool = False,
                       cache_dir=None) -> BigMTable:
    """Compute a big-M table with the requested scheme (entries clipped at 0)."""
    if scheme not in SCHEMES:
        raise ParameterError(f"scheme must be one of {SCHEMES}")
    if not (np.all(np.isfinite(instance.lower)) and np.all(np.isfinite(instance.upper))):
        raise SolverError("big-M computation needs finite variable bounds")
    params = params or SolverParams()
    tag = scheme if scheme != "objcut" else f"objcut-{cut_value!r}"
    path = _cache_path(cache_dir, instance, tag) if scheme != "partitioned" else None
    if path is not None and path.exists():
        return BigMTable.from_dict(json.loads(path.read_text()))

    det = instance.det_lhs.shape[0] > 0
    if scheme == "box":
        raw = _lp_row_max(instance, params=params) if det else _box_max(instance.lhs, instance.lower, instance.upper) - instance.rhs
        table = BigMTable(np.maximum(raw, 0.0), "box")
    elif scheme == "objcut":
        if cut_value is None or not np.isfinite(cut_value):
            raise ParameterError("the objcut scheme needs a finite incumbent value")
        if det:
            raw = _lp_row_max(instance, instance.objective[None, :], np.array([cut_value]), params)
        else:
            S, m, _ = instance.lhs.shape
            raw = np.array([[knapsack_lp_max(instance.lhs[s, i], instance.objective, cut_value,
                                             instance.lower, instance.upper) for i in range(m)]
                            for s in range(S)]) - instance.rhs
        table = BigMTable(np.maximum(np.where(np.isfinite(raw), raw, 0.0), 0.0), "objcut", cut_value=cut_value)
    else:
        if partition is None or base is None:
            raise ParameterError("the partitioned scheme needs a partition and a base table")
        table = _partitioned_table(instance, partition, base, params, relax_partitioned)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(table.to_dict()))
        tmp.replace(path)
    return table


def _partitioned_table(instance: CcspInstance, partition: Partition, base: BigMTable,
                       params: SolverParams, relax: bool) -> BigMTable:
    """Maximise each row violation over the lower-model feasible region of ``partition``."""
    if not base.covers(partition):
        raise ContractError("base big-M table does not cover the partition")
    template = build_reduced_model(instance, partition, base, LOWER, lazy=False)
    n = instance.num_vars
    S, m, _ = instance.lhs.shape
    integer = template.integer.copy()
    if relax:
        integer[:] = False
    values = base.values.copy()
    for s in range(S):
        for i in range(m):
            if base.values[s, i] <= 0.0:
                continue
            c = np.zeros(template.num_vars)
            c[:n] = -instance.lhs[s, i]
            model = LinearModel(c, template.lb, template.ub, integer, template.A, template.sense,
                                template.rhs, template.lazy, template.names)
            out = solve_model(model, params)
            if out.status == INFEASIBLE:
                values[s, i] = 0.0
                continue
            if out.status not in (OPTIMAL,) and not np.isfinite(out.bound):
                continue
            # the dual bound is a valid over-estimate even if the solve stopped early
            values[s, i] = min(base.values[s, i], max(0.0, -out.bound - instance.rhs[s, i]))
    return BigMTable(values, "partitioned", "partition", base.cut_value, partition, partition.generation)


# ---------------------------------------------------------------------------
# Reduced models
# ---------------------------------------------------------------------------

def _cut_rhs(cut_value: float) -> float:
    return cut_value + 1e-7 * max(1.0, abs(cut_value))


def build_reduced_model(instance: CcspInstance, partition: Partition, bigm: BigMTable, kind: str = LOWER,
                        lazy: bool = True, relax: bool = False) -> LinearModel:
    """Partitioned model with one binary per subset.

    ``lower`` asks for at least ``|P| - k`` enforced subsets, ``upper`` for
    enforced subsets covering at least ``|S| - k`` scenarios.  A subset's
    rows read ``A^s_i x - b^s_i <= M^s_i (1 - z_P)``.
    """
    if kind not in (LOWER, UPPER):
        raise ParameterError("kind must be 'lower' or 'upper'")
    if not bigm.covers(partition):
        raise ContractError("big-M table is scoped to a partition this one does not refine")
    b, xs = _domain_builder(instance, relax)
    zs = [b.add_var(0, 1, 0, integer=not relax, name=f"z{pos}") for pos in range(len(partition))]
    if bigm.cut_value is not None:
        # every point the table is valid for satisfies this cut
        b.add_row(dict(zip(xs, instance.objective)), LE, _cut_rhs(bigm.cut_value))
    M = bigm.values
    for pos, subset in enumerate(partition.subsets):
        for s in subset:
            for i in range(instance.num_rows):
                # M = 0 leaves a hard row: dropping it would be circular for partition-scoped tables
                coefs = dict(zip(xs, instance.lhs[s, i]))
                coefs[zs[pos]] = M[s, i]
                b.add_row(coefs, LE, instance.rhs[s, i] + M[s, i], lazy=lazy)
    if kind == LOWER:
        b.add_row({z: 1.0 for z in zs}, GE, len(partition) - instance.k)
    else:
        b.add_row({z: float(len(p)) for z, p in zip(zs, partition.subsets)}, GE, instance.required_satisfied)
    return b.build()


@dataclass
class BoundResult:
    value: float
    x: Optional[np.ndarray]
    kind: str
    outcome: SolveOutcome
    z: Optional[np.ndarray] = None

    @property
    def feasible(self) -> bool:
        return self.x is not None


def solve_bound(instance: CcspInstance, partition: Partition, bigm: BigMTable, kind: str = LOWER,
                params: SolverParams | None = None, lazy: bool = True) -> BoundResult:
    """Solve the lower or upper partitioned model.

    The lower value is the solver's dual bound; the upper value is the
    objective of the returned witness.  Infeasible models yield ``+inf``.
    """
    params = params or SolverParams()
    model = build_reduced_model(instance, partition, bigm, kind, lazy=lazy)
    out = solve_model(model, params)
    n = instance.num_vars
    if out.status == INFEASIBLE:
        return BoundResult(math.inf, None, kind, out)
    if out.status == UNBOUNDED:
        raise SolverError("reduced model is unbounded; variable bounds must be finite")
    if not out.has_solution:
        value = out.bound if kind == LOWER else math.inf
        return BoundResult(value, None, kind, out)
    x = out.x[:n].copy()
    if instance.is_binary:
        x = np.round(x)
    value = out.bound if kind == LOWER else instance.objective_value(x)
    if kind == LOWER:
        value = min(value, out.objective)
    return BoundResult(float(value), x, kind, out, out.x[n:] > 0.5)
