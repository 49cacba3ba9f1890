"""Partition refinement (minimal number of splits) and merging.

Sign convention for the split optimizer: every scenario and deterministic row
is ``a'x <= b`` and box bounds enter as ``x <= u`` and ``-x <= -l``.  The dual
of ``min c'x s.t. Gx <= h`` is then ``max h'eta s.t. G'eta = c, eta <= 0``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import CostOracle
from .errors import ContractError, ParameterError, SolverError
from .instance import DEFAULT_TOL, CcspInstance
from .milp import EQ, GE, INFEASIBLE, LE, ModelBuilder, SolverParams, solve_model
from .partition import Classification, Partition, classify

STRATEGIES = ("random", "violation_alternating", "optimized")
BRUTE_FORCE_CAP = 12


@dataclass(frozen=True)
class SplitSolution:
    left: tuple[int, ...]
    right: tuple[int, ...]
    value: float                 # min(rho_left, rho_right)
    alpha: float                 # objective of the split model (equals value for brute force)
    rho_left: float
    rho_right: float
    dual_bound: float = math.nan
    optimal: bool = True


@dataclass(frozen=True)
class RefinementPlan:
    subset_id: int
    subset: tuple[int, ...]
    seeds: tuple[int, int]
    left: tuple[int, ...]
    right: tuple[int, ...]
    strategy: str
    rho_div: Optional[float] = None
    child_ids: tuple[int, int] = (-1, -1)


def compute_mu(instance: CcspInstance, classification: Classification) -> int:
    """Number of extra infeasible subsets needed to cut off the classified point."""
    satisfied = instance.num_scenarios - len(classification.infeasible_scenarios)
    if satisfied >= instance.required_satisfied:
        raise ContractError("the point is chance-feasible; no refinement is needed")
    mu = instance.k + 1 - classification.num_infeasible
    if mu <= 0:
        raise ContractError("the point already violates the partitioned model (mu <= 0)")
    return mu


def default_dual_bound(instance: CcspInstance) -> float:
    return 10.0 * max(float(np.abs(instance.objective).max(initial=0.0)), 1.0) * instance.num_vars


# ---------------------------------------------------------------------------
# Split evaluation
# ---------------------------------------------------------------------------

def _check_split_input(subset, infeasible_ids):
    subset = tuple(int(s) for s in subset)
    inf = [int(s) for s in infeasible_ids if int(s) in set(subset)]
    if len(inf) < 2:
        raise ParameterError("a split needs at least two infeasible scenarios in the subset")
    return subset, inf


def split_subset_bruteforce(instance: CcspInstance, subset: Sequence[int], infeasible_ids: Sequence[int],
                            relax: bool = True, oracle: CostOracle | None = None,
                            cap: int = BRUTE_FORCE_CAP) -> SplitSolution:
    """Max-min child cost over every admissible bipartition.

    The first listed infeasible scenario is pinned to the left child, which
    removes the left/right mirror images.  Ties keep the first assignment found.
    """
    subset, inf = _check_split_input(subset, infeasible_ids)
    if len(subset) > cap:
        raise ParameterError(f"subset of size {len(subset)} exceeds the brute-force cap {cap}")
    oracle = oracle or CostOracle(instance)
    pinned = inf[0]
    rest = [s for s in subset if s != pinned]
    inf_set = set(inf)
    best = None
    for bits in itertools.product((1, 0), repeat=len(rest)):
        left = [pinned] + [s for s, b in zip(rest, bits) if b]
        right = [s for s, b in zip(rest, bits) if not b]
        if not inf_set.intersection(right):
            continue
        rl, rr = oracle.value(left, relax), oracle.value(right, relax)
        val = min(rl, rr)
        if best is None or val > best.value:
            best = SplitSolution(tuple(sorted(left)), tuple(sorted(right)), val, val, rl, rr)
    return best


def _split_model(instance: CcspInstance, subset, inf, U: float):
    n, m = instance.num_vars, instance.num_rows
    d = instance.det_lhs.shape[0]
    lo, hi = instance.lower, instance.upper
    b = ModelBuilder()
    alpha = b.add_var(-np.inf, np.inf, -1.0, name="alpha")
    ys = {s: b.add_var(1.0 if s == inf[0] else 0.0, 1.0, 0.0, integer=True, name=f"y{s}") for s in subset}
    scen_duals = []
    for side in (0, 1):
        eta_det = [b.add_var(-np.inf, 0.0, name=f"ed{side}_{r}") for r in range(d)]
        eta_ub = [b.add_var(-np.inf, 0.0, name=f"eu{side}_{j}") for j in range(n)]
        eta_lb = [b.add_var(-np.inf, 0.0, name=f"el{side}_{j}") for j in range(n)]
        eta_s = {(s, i): b.add_var(-U, 0.0, name=f"es{side}_{s}_{i}") for s in subset for i in range(m)}
        scen_duals.extend(eta_s.values())
        # alpha <= dual objective of this child
        row = {alpha: 1.0}
        for r, v in enumerate(eta_det):
            row[v] = -instance.det_rhs[r]
        for j in range(n):
            row[eta_ub[j]] = -hi[j]
            row[eta_lb[j]] = lo[j]
        for (s, i), v in eta_s.items():
            row[v] = -instance.rhs[s, i]
        b.add_row(row, LE, 0.0)
        # dual feasibility: G' eta = c
        for j in range(n):
            row = {eta_ub[j]: 1.0, eta_lb[j]: -1.0}
            for r, v in enumerate(eta_det):
                row[v] = instance.det_lhs[r, j]
            for (s, i), v in eta_s.items():
                row[v] = instance.lhs[s, i, j]
            b.add_row(row, EQ, instance.objective[j])
        # a scenario's duals may be nonzero only in the child that receives it
        for (s, i), v in eta_s.items():
            if side == 0:
                b.add_row({v: 1.0, ys[s]: U}, GE, 0.0)
            else:
                b.add_row({v: 1.0, ys[s]: -U}, GE, -U)
    inf_rest = [ys[s] for s in inf[1:]]
    b.add_row({y: 1.0 for y in inf_rest}, LE, len(inf_rest) - 1)
    return b.build(), alpha, ys, scen_duals


def split_subset_optimal(instance: CcspInstance, subset: Sequence[int], infeasible_ids: Sequence[int],
                         dual_bound: float | None = None, params: SolverParams | None = None,
                         oracle: CostOracle | None = None, retries: int = 3) -> SplitSolution:
    """Single-level split model: choose the bipartition maximising the smaller child cost.

    Child costs are represented by their LP duals, so for binary instances the
    value is the relaxation bound.  Scenario duals are boxed by ``dual_bound``;
    if any of them ends on that box the bound is raised tenfold and the model re-solved.
    """
    subset, inf = _check_split_input(subset, infeasible_ids)
    if not (np.all(np.isfinite(instance.lower)) and np.all(np.isfinite(instance.upper))):
        raise SolverError("the split model needs finite variable bounds")
    U = float(dual_bound) if dual_bound is not None else default_dual_bound(instance)
    if U <= 0:
        raise ParameterError("dual bound must be positive")
    params = params or SolverParams()
    oracle = oracle or CostOracle(instance)
    for attempt in range(retries + 1):
        model, alpha, ys, duals = _split_model(instance, subset, inf, U)
        out = solve_model(model, params)
        if out.status == INFEASIBLE:
            raise SolverError("split model infeasible; try a larger dual bound")
        if not out.has_solution:
            raise SolverError(f"split model ended with status {out.status}")
        at_bound = np.any(out.x[duals] <= -U * (1 - 1e-7)) if duals else False
        if not at_bound or attempt == retries:
            break
        U *= 10.0
    left = tuple(sorted(s for s in subset if out.x[ys[s]] > 0.5))
    right = tuple(sorted(s for s in subset if out.x[ys[s]] <= 0.5))
    rl, rr = oracle.value(left, True), oracle.value(right, True)
    return SplitSolution(left, right, min(rl, rr), float(out.x[alpha]), rl, rr, U, out.ok)


def select_refinement_subset(candidates: Sequence[int], rho_div: Sequence[float], v_lower: float) -> int:
    """Smallest split value above ``v_lower`` if any, otherwise the largest; ties by id."""
    if not candidates:
        raise ParameterError("no candidate subsets")
    pairs = sorted(zip(candidates, rho_div))
    above = [(v, c) for c, v in pairs if v > v_lower]
    if above:
        return min(above)[1]
    return min(pairs, key=lambda cv: (-cv[1], cv[0]))[0]


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

@dataclass
class RefineContext:
    """Per-run state shared across refinements (split cache, RNG, solver settings)."""

    oracle: CostOracle
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    params: SolverParams = field(default_factory=SolverParams)
    candidate_cap: int = 10
    dual_bound: Optional[float] = None
    split_cache: dict = field(default_factory=dict)
    use_bruteforce: bool = False


def refine_minimal(instance: CcspInstance, partition: Partition, x, strategy: str = "optimized",
                   split_count: int | None = None, context: RefineContext | None = None,
                   v_lower: float = -math.inf, tol: float = DEFAULT_TOL) -> tuple[Partition, list[RefinementPlan]]:
    """Split subsets holding two or more infeasible scenarios until ``x`` is cut off.

    Performs ``max(mu, min(split_count, #subsets with >= 2 infeasible scenarios))``
    splits (``split_count`` defaults to ``mu``).  Children may be split again.
    """
    if strategy not in STRATEGIES:
        raise ParameterError(f"strategy must be one of {STRATEGIES}")
    context = context or RefineContext(CostOracle(instance))
    x = np.asarray(x, dtype=float)
    cls = classify(partition, instance, x, tol)
    mu = compute_mu(instance, cls)
    split_count = mu if split_count is None else int(split_count)
    if split_count < mu:
        raise ParameterError(f"split_count {split_count} is below the minimum {mu}")
    viol = cls.scenario_violation
    bad = viol > tol
    counts = [int(bad[list(partition.subsets[pos])].sum()) for pos in cls.infeasible]
    multi = sum(c >= 2 for c in counts)
    # a subset holding r infeasible scenarios can absorb r - 1 splits, so mu is always reachable
    n_splits = max(mu, min(split_count, multi))
    if n_splits > sum(c - 1 for c in counts):
        raise ContractError("not enough infeasible scenarios to split apart")
    current = partition
    plans = []
    for _ in range(n_splits):
        cands = [pos for pos, p in enumerate(current.subsets) if bad[list(p)].sum() >= 2]
        if not cands:
            raise ContractError("no subset left with two infeasible scenarios")
        pos, plan = _plan_split(instance, current, cands, viol, bad, strategy, context, v_lower)
        current = current.split(pos, plan.left, plan.right)
        plans.append(RefinementPlan(plan.subset_id, plan.subset, plan.seeds, plan.left, plan.right,
                                    plan.strategy, plan.rho_div, current.ids[-2:]))
    return current, plans


def _ranked_infeasible(subset, viol, bad):
    inf = [s for s in subset if bad[s]]
    return sorted(inf, key=lambda s: (-viol[s], s))


def _plan_split(instance, part: Partition, cands, viol, bad, strategy, ctx: RefineContext, v_lower):
    if strategy == "random":
        pos = cands[int(ctx.rng.integers(len(cands)))]
        subset = part.subsets[pos]
        inf = [s for s in subset if bad[s]]
        s1, s2 = (int(v) for v in ctx.rng.choice(inf, size=2, replace=False))
        left, right = [s1], [s2]
        for s in subset:
            if s not in (s1, s2):
                (left if ctx.rng.random() < 0.5 else right).append(s)
        return pos, RefinementPlan(part.ids[pos], subset, (s1, s2), tuple(sorted(left)), tuple(sorted(right)),
                                   strategy)

    if strategy == "violation_alternating":
        top = {pos: max(viol[s] for s in part.subsets[pos] if bad[s]) for pos in cands}
        pos = min(cands, key=lambda p: (-top[p], part.ids[p]))
        subset = part.subsets[pos]
        s1, s2 = _ranked_infeasible(subset, viol, bad)[:2]
        left, right = [s1], [s2]
        rest = sorted((s for s in subset if s not in (s1, s2)), key=lambda s: (-viol[s], s))
        for i, s in enumerate(rest):
            (left if i % 2 == 0 else right).append(s)
        return pos, RefinementPlan(part.ids[pos], subset, (s1, s2), tuple(sorted(left)), tuple(sorted(right)),
                                   strategy)

    # optimized: evaluate the split model on the most violated candidates
    weight = {pos: float(np.maximum(viol[list(part.subsets[pos])], 0).sum()) for pos in cands}
    ranked = sorted(cands, key=lambda p: (-weight[p], part.ids[p]))[:max(1, ctx.candidate_cap)]
    sols = {}
    for pos in ranked:
        subset = part.subsets[pos]
        inf = _ranked_infeasible(subset, viol, bad)
        key = (frozenset(subset), frozenset(inf))
        sol = ctx.split_cache.get(key)
        if sol is None:
            if ctx.use_bruteforce and len(subset) <= BRUTE_FORCE_CAP:
                sol = split_subset_bruteforce(instance, subset, inf, True, ctx.oracle)
            else:
                sol = split_subset_optimal(instance, subset, inf, ctx.dual_bound, ctx.params, ctx.oracle)
            ctx.split_cache[key] = sol
        sols[part.ids[pos]] = (pos, sol, inf)
    chosen = select_refinement_subset(list(sols), [sols[i][1].value for i in sols], v_lower)
    pos, sol, inf = sols[chosen]
    s1 = next(s for s in inf if s in sol.left)
    s2 = next(s for s in inf if s in sol.right)
    return pos, RefinementPlan(part.ids[pos], part.subsets[pos], (s1, s2), sol.left, sol.right, strategy,
                               sol.value)


# ---------------------------------------------------------------------------
# Merging
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MergeInfo:
    merged_ids: tuple[int, ...]
    case: int
    trigger_value: float


def new_subsets(previous: Partition, refinement: Partition) -> list[int]:
    """Positions of subsets of ``refinement`` that do not occur in ``previous``."""
    old = set(previous.subsets)
    return [pos for pos, p in enumerate(refinement.subsets) if p not in old]


def merge_trigger(previous: Partition, refinement: Partition, oracle: CostOracle, v_lower: float,
                  rtol: float = 1e-9) -> tuple[bool, float]:
    """Whether every newly created subset costs strictly more than ``v_lower``."""
    fresh = new_subsets(previous, refinement)
    if not fresh:
        return False, math.nan
    value = min(oracle.value(refinement.subsets[pos]) for pos in fresh)
    return bool(value > v_lower + rtol * max(1.0, abs(v_lower))), value


def merge_max(instance: CcspInstance, previous: Partition, refinement: Partition, x, oracle: CostOracle,
              v_lower: float, n_merge: int | None = None, tol: float = DEFAULT_TOL
              ) -> tuple[Partition, MergeInfo]:
    """Merge subsets of ``refinement`` back to ``|previous|`` while keeping ``x`` cut off.

    ``n_merge`` is the number of subsets to remove (default: the number of
    splits between ``previous`` and ``refinement``).
    """
    ok, trig = merge_trigger(previous, refinement, oracle, v_lower)
    if not ok:
        raise ContractError("merge trigger does not hold: a new subset costs no more than the lower bound")
    j = len(refinement) - len(previous) if n_merge is None else int(n_merge)
    if j < 1:
        raise ContractError("nothing to merge")
    cls = classify(refinement, instance, x, tol)
    rho = {pos: oracle.value(refinement.subsets[pos]) for pos in range(len(refinement))}
    by_cost = lambda pos: (-rho[pos], refinement.ids[pos])  # noqa: E731
    feas = sorted(cls.feasible, key=by_cost)
    if len(feas) >= j + 1:
        chosen = feas[:j + 1]
        case = 2
    else:
        take = min(j, len(feas))
        if take == 0:
            raise ContractError("no feasible subset available to merge")
        fresh = set(new_subsets(previous, refinement))
        infeas = set(cls.infeasible)
        pools = ([p for p in infeas & fresh if len(refinement.subsets[p]) == 1],
                 [p for p in infeas & fresh], list(infeas))
        pick = next(sorted(pool, key=by_cost)[0] for pool in pools if pool)
        chosen = feas[:take] + [pick]
        case = 1
    merged = refinement.merge(chosen)
    return merged, MergeInfo(tuple(refinement.ids[p] for p in chosen), case, trig)
