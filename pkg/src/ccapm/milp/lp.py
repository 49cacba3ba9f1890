"""LP relaxations through HiGHS (scipy) or the in-house simplex."""
from __future__ import annotations

import time

import numpy as np
from scipy.optimize import linprog

from ..errors import SolverError
from .model import EQ, GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, LinearModel, SolveOutcome, SolverParams
from .simplex import simplex_solve


def lp_solve(c, A, sense, rhs, lb, ub, engine="highs"):
    """Solve one LP. Returns ``(status, x, objective)``."""
    c = np.asarray(c, dtype=float)
    n = len(c)
    sense = np.asarray(sense, dtype=object)
    if n == 0:
        act = np.zeros(len(rhs))
        ok = np.all(np.where(sense == LE, act <= rhs + 1e-9,
                             np.where(sense == GE, act >= rhs - 1e-9, np.abs(act - rhs) <= 1e-9)))
        return (OPTIMAL, np.zeros(0), 0.0) if ok else (INFEASIBLE, None, np.nan)
    if engine == "simplex":
        return _simplex(c, A, sense, rhs, lb, ub)
    return _highs(c, A, sense, rhs, lb, ub)


def _highs(c, A, sense, rhs, lb, ub):
    le = sense == LE
    ge = sense == GE
    eq = sense == EQ
    A_ub = np.vstack([A[le], -A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([rhs[le], -rhs[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = rhs[eq] if eq.any() else None
    bounds = np.column_stack([np.where(np.isfinite(lb), lb, -np.inf), np.where(np.isfinite(ub), ub, np.inf)])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 0:
        return OPTIMAL, np.asarray(res.x), float(res.fun)
    if res.status == 2:
        return INFEASIBLE, None, np.nan
    if res.status == 3:
        return UNBOUNDED, None, np.nan
    raise SolverError(f"HiGHS LP failed (status {res.status}): {res.message}")


def _simplex(c, A, sense, rhs, lb, ub):
    m, n = A.shape
    slack_rows = np.flatnonzero(sense != EQ)
    S = np.zeros((m, len(slack_rows)))
    for k, r in enumerate(slack_rows):
        S[r, k] = 1.0 if sense[r] == LE else -1.0
    A_eq = np.hstack([A, S])
    c_eq = np.concatenate([c, np.zeros(len(slack_rows))])
    lb_eq = np.concatenate([lb, np.zeros(len(slack_rows))])
    ub_eq = np.concatenate([ub, np.full(len(slack_rows), np.inf)])
    status, x, _ = simplex_solve(c_eq, A_eq, rhs, lb_eq, ub_eq)
    if status != OPTIMAL:
        return status, None, np.nan
    return status, x[:n], float(c @ x[:n])


def solve_lp_relaxation(model: LinearModel, params: SolverParams | None = None) -> SolveOutcome:
    """Drop integrality (lazy rows are kept as ordinary rows) and solve the LP."""
    params = params or SolverParams()
    t0 = time.perf_counter()
    status, x, obj = lp_solve(model.c, model.A, model.sense, model.rhs, model.lb, model.ub, params.lp_engine)
    out = SolveOutcome(status=status, elapsed=time.perf_counter() - t0, nodes=1)
    if status == OPTIMAL:
        out.x = x
        out.objective = out.bound = obj + model.offset
    return out
