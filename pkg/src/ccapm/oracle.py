"""Exhaustive reference solvers used to certify the iterative method."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import LOWER, BigMTable, CostOracle, build_reduced_model
from .errors import ParameterError
from .instance import CcspInstance
from .milp import GE, LE, INFEASIBLE, LinearModel, SolverParams, lp_solve, solve_model
from .partition import Partition

DEFAULT_CAP = 500_000


@dataclass(frozen=True)
class OracleResult:
    value: float
    x: Optional[np.ndarray]
    unique: bool
    optimal_choices: int
    choices: int


def brute_force_optimal(instance: CcspInstance, cap: int = DEFAULT_CAP, params: SolverParams | None = None,
                        tol: float = 1e-9) -> OracleResult:
    """Enumerate every set of ``|S| - k`` enforced scenarios and keep the cheapest.

    ``unique`` is true when a single enforced set attains the optimum.
    """
    S, keep = instance.num_scenarios, instance.required_satisfied
    total = math.comb(S, keep)
    if total > cap:
        raise ParameterError(f"{total} scenario choices exceed the oracle cap {cap}; use a smaller instance")
    oracle = CostOracle(instance, params)
    best, best_x, hits = math.inf, None, 0
    for choice in itertools.combinations(range(S), keep):
        res = oracle.cost(choice)
        if not res.feasible:
            continue
        if res.value < best - tol * max(1.0, abs(best) if np.isfinite(best) else 1.0):
            best, best_x, hits = res.value, res.x, 1
        elif abs(res.value - best) <= tol * max(1.0, abs(best)):
            hits += 1
    return OracleResult(best, best_x, hits == 1, hits, total)


def lower_model_unique(instance: CcspInstance, partition: Partition, bigm: BigMTable | None = None,
                       params: SolverParams | None = None, tol: float = 1e-7) -> tuple[bool, float]:
    """Decide whether the lower model on ``partition`` has a single optimal ``x``.

    Continuous instances: enumerate the enforced-subset choices, and for every
    choice attaining the optimum bound each coordinate over its optimal face.
    Binary instances: re-solve with a no-good cut against the first optimum
    (``bigm`` is then required).  Returns ``(unique, optimal value)``.
    """
    params = params or SolverParams(gap_rel=1e-9)
    if instance.is_binary:
        if bigm is None:
            raise ParameterError("binary uniqueness check needs a big-M table")
        return _unique_binary(instance, partition, bigm, params, tol)
    need = len(partition) - instance.k
    oracle = CostOracle(instance, params)
    vals = {}
    for choice in itertools.combinations(range(len(partition)), need):
        members = [s for pos in choice for s in partition.subsets[pos]]
        vals[choice] = oracle.value(members)
    best = min(vals.values())
    if not np.isfinite(best):
        return True, best
    slack = tol * max(1.0, abs(best))
    n = instance.num_vars
    point = None
    for choice, v in vals.items():
        if v > best + slack:
            continue
        members = [s for pos in choice for s in partition.subsets[pos]]
        A = np.vstack([instance.det_lhs, instance.lhs[members].reshape(-1, n), instance.objective[None, :]])
        b = np.concatenate([instance.det_rhs, instance.rhs[members].reshape(-1), [best + slack]])
        sense = np.full(len(b), LE, dtype=object)
        face = np.empty((n, 2))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            face[j, 0] = lp_solve(e, A, sense, b, instance.lower, instance.upper, params.lp_engine)[2]
            face[j, 1] = -lp_solve(-e, A, sense, b, instance.lower, instance.upper, params.lp_engine)[2]
        if np.any(face[:, 1] - face[:, 0] > 1e-5):
            return False, best
        if point is None:
            point = face[:, 0]
        elif np.any(np.abs(point - face[:, 0]) > 1e-5):
            return False, best
    return True, best


def _unique_binary(instance, partition, bigm, params, tol):
    model = build_reduced_model(instance, partition, bigm, LOWER, lazy=True)
    first = solve_model(model, params)
    if first.status == INFEASIBLE or not first.has_solution:
        return True, math.inf
    n = instance.num_vars
    xb = np.round(first.x[:n])
    coefs = np.zeros(model.num_vars)
    coefs[:n] = np.where(xb > 0.5, -1.0, 1.0)
    rhs = 1.0 - xb.sum()
    cut = LinearModel(model.c, model.lb, model.ub, model.integer, np.vstack([model.A, coefs]),
                      model.sense + (GE,), np.append(model.rhs, rhs), np.append(model.lazy, False), model.names)
    second = solve_model(cut, params)
    best = first.objective
    if second.status == INFEASIBLE or not second.has_solution:
        return True, best
    return bool(second.objective > best + tol * max(1.0, abs(best))), best
