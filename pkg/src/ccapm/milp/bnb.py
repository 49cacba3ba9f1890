"""LP-based branch-and-bound with lazy-row enforcement.

Node selection is depth-first until the first incumbent, then best-bound.
Branching picks the most fractional integer variable (lowest index on ties).
Lazy rows start inactive and are activated whenever an integer-feasible
candidate violates them; the candidate is then discarded and the node re-solved.
"""
from __future__ import annotations

import heapq
import itertools
import time

import numpy as np

from ..errors import SolverError
from .lp import lp_solve
from .model import (INFEASIBLE, NODE_LIMIT, OPTIMAL, TIME_LIMIT, UNBOUNDED, LinearModel,
                    SolveOutcome, SolverParams)


def solve_model(model: LinearModel, params: SolverParams | None = None) -> SolveOutcome:
    """Solve ``model`` to optimality within ``params.gap_rel``."""
    params = params or SolverParams()
    if params.backend != "builtin":
        from .external import ExternalAdapter, external_solve
        return external_solve(model, ExternalAdapter.from_backend(params.backend), params)
    return _BranchAndBound(model, params).run()


class _BranchAndBound:
    def __init__(self, model: LinearModel, params: SolverParams):
        self.m = model
        self.p = params
        self.active = ~model.lazy.copy()
        self.int_idx = np.flatnonzero(model.integer)
        self.cont = ~model.integer
        self.sense = np.asarray(model.sense, dtype=object)
        self.lazy_added = 0
        self.nodes = 0
        self.best_x = None
        self.best_obj = np.inf

    # -- helpers --------------------------------------------------------------
    def _lp(self, lb, ub):
        act = self.active
        return lp_solve(self.m.c, self.m.A[act], self.sense[act], self.m.rhs[act], lb, ub, self.p.lp_engine)

    def _tol(self, obj):
        return self.p.gap_rel * max(1.0, abs(obj))

    def _violated(self, x, rows):
        if len(rows) == 0:
            return rows
        return rows[self.m.row_violation(x, rows) > self.p.feas_tol]

    def _polish(self, x, lb, ub):
        """Round integers and re-solve the continuous part with them fixed."""
        xr = x.copy()
        xr[self.int_idx] = np.round(xr[self.int_idx])
        act_rows = np.flatnonzero(self.active)
        if not len(self._violated(xr, act_rows)):
            return xr
        if not self.cont.any():
            return None
        flb, fub = lb.copy(), ub.copy()
        flb[self.int_idx] = fub[self.int_idx] = xr[self.int_idx]
        status, xp, _ = self._lp(flb, fub)
        if status != OPTIMAL:
            return None
        xp[self.int_idx] = xr[self.int_idx]
        return xp

    # -- main loop ------------------------------------------------------------
    def run(self) -> SolveOutcome:
        t0 = time.perf_counter()
        m, p = self.m, self.p
        lb0 = m.lb.copy()
        ub0 = m.ub.copy()
        lb0[self.int_idx] = np.ceil(lb0[self.int_idx] - p.int_tol)
        ub0[self.int_idx] = np.floor(ub0[self.int_idx] + p.int_tol)
        if np.any(lb0 > ub0):
            return SolveOutcome(INFEASIBLE, elapsed=time.perf_counter() - t0)

        counter = itertools.count()
        stack = [(-np.inf, lb0, ub0)]
        heap: list = []
        status = OPTIMAL

        while stack or heap:
            if time.perf_counter() - t0 > p.time_limit:
                status = TIME_LIMIT
                break
            if self.nodes >= p.node_limit:
                status = NODE_LIMIT
                break
            if self.best_x is None and stack:
                bound, lb, ub = stack.pop()
            else:
                heap.extend((b, next(counter), l, u) for b, l, u in stack)
                stack = []
                heapq.heapify(heap)
                bound, _, lb, ub = heapq.heappop(heap)
                if bound >= self.best_obj - self._tol(self.best_obj):
                    heap = []
                    break
            if bound >= self.best_obj - self._tol(self.best_obj):
                continue
            self.nodes += 1
            outcome = self._process(lb, ub)
            if outcome == UNBOUNDED:
                return SolveOutcome(UNBOUNDED, nodes=self.nodes, elapsed=time.perf_counter() - t0,
                                    lazy_added=self.lazy_added)
            if outcome is None:
                continue
            child_bound, j, xj = outcome
            down_ub = ub.copy()
            down_ub[j] = np.floor(xj)
            up_lb = lb.copy()
            up_lb[j] = np.ceil(xj)
            down = (child_bound, lb, down_ub)
            up = (child_bound, up_lb, ub)
            if self.best_x is None:
                # dive toward the rounding direction first (pushed last = popped first)
                stack.extend([down, up] if xj - np.floor(xj) >= 0.5 else [up, down])
            else:
                heapq.heappush(heap, (child_bound, next(counter), *down[1:]))
                heapq.heappush(heap, (child_bound, next(counter), *up[1:]))

        open_bounds = [b for b, *_ in heap] + [b for b, *_ in stack]
        elapsed = time.perf_counter() - t0
        if self.best_x is None:
            if status == OPTIMAL:
                return SolveOutcome(INFEASIBLE, nodes=self.nodes, elapsed=elapsed, lazy_added=self.lazy_added)
            bound = min(open_bounds) if open_bounds else np.nan
            return SolveOutcome(status, bound=bound + m.offset, nodes=self.nodes, elapsed=elapsed,
                                lazy_added=self.lazy_added)
        bound = min([self.best_obj] + open_bounds)
        if status == OPTIMAL:
            bound = min(bound, self.best_obj)
        return SolveOutcome(status, x=self.best_x, objective=self.best_obj + m.offset,
                            bound=bound + m.offset, nodes=self.nodes, elapsed=elapsed,
                            lazy_added=self.lazy_added)

    def _process(self, lb, ub):
        """Solve one node. Returns None (pruned/fathomed), UNBOUNDED, or a branching tuple."""
        lazy_rows = np.flatnonzero(self.m.lazy)
        while True:
            status, x, obj = self._lp(lb, ub)
            if status == INFEASIBLE:
                return None
            if status == UNBOUNDED:
                return UNBOUNDED
            if status != OPTIMAL:
                raise SolverError(f"unexpected LP status {status}")
            if obj >= self.best_obj - self._tol(self.best_obj):
                return None
            xi = x[self.int_idx]
            frac = np.abs(xi - np.round(xi))
            if len(frac) and frac.max() > self.p.int_tol:
                dist = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
                k = int(np.argmax(dist))  # argmax returns the lowest index on ties
                return obj, int(self.int_idx[k]), float(xi[k])
            cand = self._polish(x, lb, ub)
            if cand is None:
                if len(frac) and frac.max() > 1e-12:
                    k = int(np.argmax(frac))
                    return obj, int(self.int_idx[k]), float(xi[k])
                return None
            inactive_lazy = lazy_rows[~self.active[lazy_rows]]
            bad = self._violated(cand, inactive_lazy)
            if len(bad):
                self.active[bad] = True
                self.lazy_added += len(bad)
                continue
            value = float(self.m.c @ cand)
            if value < self.best_obj:
                self.best_obj = value
                self.best_x = cand
            if obj < self.best_obj - self._tol(self.best_obj) and len(frac) and frac.max() > 1e-12:
                # rounding within int_tol lost objective value: keep the node open
                k = int(np.argmax(frac))
                return obj, int(self.int_idx[k]), float(xi[k])
            return None
