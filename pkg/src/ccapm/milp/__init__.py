"""Backend-neutral MILP models and solvers."""
from .bnb import solve_model
from .external import ExternalAdapter, external_solve
from .lp import lp_solve, solve_lp_relaxation
from .lpformat import read_lp, read_solution, write_lp, write_solution
from .model import (EQ, GAP_LIMIT, GE, INFEASIBLE, LE, NODE_LIMIT, OPTIMAL, TIME_LIMIT, UNBOUNDED,
                    LinearModel, ModelBuilder, SolveOutcome, SolverParams)

__all__ = [
    "solve_model", "solve_lp_relaxation", "lp_solve", "external_solve", "ExternalAdapter",
    "read_lp", "write_lp", "read_solution", "write_solution", "LinearModel", "ModelBuilder",
    "SolveOutcome", "SolverParams", "LE", "GE", "EQ", "OPTIMAL", "INFEASIBLE", "UNBOUNDED",
    "TIME_LIMIT", "NODE_LIMIT", "GAP_LIMIT",
]
