"""Dense bounded-variable primal simplex (two-phase, Dantzig pricing with a
Bland fallback against cycling).

Meant for desk-scale LPs; it is the independent LP engine used to cross-check
the HiGHS path.
"""
from __future__ import annotations

import numpy as np

from ..errors import SolverError

_PIV = 1e-9
_OPT = 1e-9
_DEGEN_SWITCH = 50


class _Tableau:
    def __init__(self, T, Tb, lb, ub, basis, x, cost):
        self.T = T            # B^{-1} A, (m, N)
        self.Tb = Tb          # B^{-1} b
        self.lb = lb
        self.ub = ub
        self.basis = basis    # basic variable per row
        self.x = x            # current value of every variable
        self.cost = cost
        self.is_basic = np.zeros(T.shape[1], dtype=bool)
        self.is_basic[basis] = True

    def refresh_basic_values(self):
        nb = ~self.is_basic
        self.x[self.basis] = self.Tb - self.T[:, nb] @ self.x[nb]

    def reduced_costs(self):
        return self.cost - self.cost[self.basis] @ self.T

    def pivot(self, r, j):
        piv = self.T[r, j]
        self.T[r] /= piv
        self.Tb[r] /= piv
        col = self.T[:, j].copy()
        col[r] = 0.0
        self.T -= np.outer(col, self.T[r])
        self.Tb -= col * self.Tb[r]
        self.is_basic[self.basis[r]] = False
        self.basis[r] = j
        self.is_basic[j] = True

    def run(self, blocked, max_iter):
        """Primal simplex on the current cost; returns 'optimal' or 'unbounded'."""
        degenerate = 0
        T, x, lb, ub = self.T, self.x, self.lb, self.ub
        for _ in range(max_iter):
            self.refresh_basic_values()
            d = self.reduced_costs()
            can_up = (~self.is_basic) & (x < ub - 1e-12) & ~blocked
            can_dn = (~self.is_basic) & (x > lb + 1e-12) & ~blocked
            score = np.where(can_up & (d < -_OPT), -d, 0.0)
            score = np.maximum(score, np.where(can_dn & (d > _OPT), d, 0.0))
            if not np.any(score > 0):
                return "optimal"
            if degenerate >= _DEGEN_SWITCH:
                j = int(np.flatnonzero(score > 0)[0])
            else:
                j = int(np.argmax(score))
            direction = 1.0 if (can_up[j] and d[j] < -_OPT) else -1.0
            alpha = direction * T[:, j]
            xb = x[self.basis]
            lbb, ubb = lb[self.basis], ub[self.basis]
            theta = np.full(len(alpha), np.inf)
            dec = alpha > _PIV
            inc = alpha < -_PIV
            with np.errstate(invalid="ignore", divide="ignore"):
                theta[dec] = (xb[dec] - lbb[dec]) / alpha[dec]
                theta[inc] = (ubb[inc] - xb[inc]) / (-alpha[inc])
            theta = np.maximum(theta, 0.0)
            flip = ub[j] - lb[j]
            t_min = theta.min() if len(theta) else np.inf
            if not np.isfinite(t_min) and not np.isfinite(flip):
                return "unbounded"
            if flip <= t_min:
                x[j] = ub[j] if direction > 0 else lb[j]
                degenerate = 0
                continue
            ties = np.flatnonzero(theta <= t_min + 1e-12)
            if degenerate >= _DEGEN_SWITCH:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = self.basis[r]
            x[j] = x[j] + direction * t_min
            x[leaving] = lbb[r] if alpha[r] > 0 else ubb[r]
            self.pivot(r, j)
            degenerate = degenerate + 1 if t_min < 1e-12 else 0
        raise SolverError("simplex iteration limit reached")


def simplex_solve(c, A_eq, b_eq, lb, ub):
    """Solve ``min c'x`` s.t. ``A_eq x = b_eq``, ``lb <= x <= ub``.

    Returns ``(status, x, objective)`` with status in
    {'optimal', 'infeasible', 'unbounded'}.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A_eq, dtype=float).reshape(-1, len(c))
    b = np.asarray(b_eq, dtype=float)
    lb = np.asarray(lb, dtype=float).copy()
    ub = np.asarray(ub, dtype=float).copy()
    m, n = A.shape
    if np.any(lb > ub + 1e-12):
        return "infeasible", None, np.nan
    # nonbasic start: a finite bound, else 0 for free variables
    x0 = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    resid = b - A @ x0
    sign = np.where(resid >= 0, 1.0, -1.0)
    T = np.hstack([A * sign[:, None], np.eye(m)])
    Tb = b * sign
    lb_all = np.concatenate([lb, np.zeros(m)])
    ub_all = np.concatenate([ub, np.full(m, np.inf)])
    x = np.concatenate([x0, np.abs(resid)])
    basis = np.arange(n, n + m)
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    tab = _Tableau(T, Tb, lb_all, ub_all, basis, x, cost1)
    max_iter = 50 * (m + n) + 1000
    blocked = np.zeros(n + m, dtype=bool)
    if m:
        tab.run(blocked, max_iter)
        tab.refresh_basic_values()
        scale = 1.0 + np.abs(b).max()
        if tab.x[n:].sum() > 1e-7 * scale:
            return "infeasible", None, np.nan
        # drive artificials out of the basis where possible
        for r in range(m):
            if tab.basis[r] >= n:
                cand = np.flatnonzero((np.abs(tab.T[r, :n]) > 1e-7) & ~tab.is_basic[:n])
                if len(cand):
                    j = int(cand[np.argmax(np.abs(tab.T[r, cand]))])
                    tab.pivot(r, j)
        tab.ub[n:] = 0.0
        tab.x[n:] = np.where(tab.is_basic[n:], tab.x[n:], 0.0)
        blocked[n:] = True
    tab.cost = np.concatenate([c, np.zeros(m)])
    status = tab.run(blocked, max_iter)
    if status == "unbounded":
        return "unbounded", None, np.nan
    tab.refresh_basic_values()
    xs = np.clip(tab.x[:n], lb, ub)
    return "optimal", xs, float(c @ xs)
