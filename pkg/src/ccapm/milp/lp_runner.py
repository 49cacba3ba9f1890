"""Reference external solver: ``python -m ccapm.milp.lp_runner in.lp out.sol``.

Reads the LP dialect, enforces lazy rows as ordinary rows, solves with
``scipy.optimize.milp`` and writes the solution format.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .lpformat import read_lp, write_solution
from .model import GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, SolveOutcome


def solve_file(src: str, dst: str) -> str:
    model = read_lp(Path(src).read_text())
    cons = []
    if model.num_rows:
        sense = np.asarray(model.sense, dtype=object)
        lo = np.where(sense == LE, -np.inf, model.rhs)
        hi = np.where(sense == GE, np.inf, model.rhs)
        cons.append(LinearConstraint(model.A, lo, hi))
    res = milp(model.c, constraints=cons, integrality=model.integer.astype(int),
               bounds=Bounds(model.lb, model.ub), options={"mip_rel_gap": 1e-9})
    if res.status == 0:
        out = SolveOutcome(OPTIMAL, x=res.x, objective=float(res.fun) + model.offset,
                           bound=float(getattr(res, "mip_dual_bound", res.fun) or res.fun) + model.offset)
    elif res.status == 2:
        out = SolveOutcome(INFEASIBLE)
    elif res.status == 3:
        out = SolveOutcome(UNBOUNDED)
    else:
        raise RuntimeError(f"milp failed: {res.message}")
    Path(dst).write_text(write_solution(out, model.var_names()))
    return out.status


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: python -m ccapm.milp.lp_runner MODEL.lp SOLUTION.sol", file=sys.stderr)
        return 1
    status = solve_file(argv[0], argv[1])
    print(f"status {status}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
