"""Backend-neutral MILP description and solve records."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ParameterError

LE, GE, EQ = "<=", ">=", "=="
SENSES = (LE, GE, EQ)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIME_LIMIT = "time_limit"
NODE_LIMIT = "node_limit"
GAP_LIMIT = "gap_limit"


@dataclass(frozen=True)
class LinearModel:
    """``min c'x + offset`` subject to ``A x (sense) rhs`` and ``lb <= x <= ub``.

    Rows flagged ``lazy`` are only enforced when an integer-feasible candidate
    violates them.
    """

    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    A: np.ndarray
    sense: tuple[str, ...]
    rhs: np.ndarray
    lazy: np.ndarray
    names: Optional[tuple[str, ...]] = None
    offset: float = 0.0

    def __post_init__(self):
        nv = len(self.c)
        A = np.asarray(self.A, dtype=float).reshape(-1, nv) if nv else np.zeros((len(self.rhs), 0))
        for name in ("c", "lb", "ub", "rhs"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "integer", np.asarray(self.integer, dtype=bool).reshape(-1))
        object.__setattr__(self, "lazy", np.asarray(self.lazy, dtype=bool).reshape(-1))
        object.__setattr__(self, "sense", tuple(self.sense))
        if not (len(self.lb) == len(self.ub) == len(self.integer) == nv):
            raise ParameterError("variable arrays have inconsistent lengths")
        if not (A.shape[0] == len(self.rhs) == len(self.sense) == len(self.lazy)):
            raise ParameterError("row arrays have inconsistent lengths")
        if any(s not in SENSES for s in self.sense):
            raise ParameterError(f"row sense must be one of {SENSES}")
        if not np.all(np.isfinite(A)) or not np.all(np.isfinite(self.c)) or not np.all(np.isfinite(self.rhs)):
            raise ParameterError("model coefficients must be finite")
        if self.names is not None and len(self.names) != nv:
            raise ParameterError("names must match the number of variables")

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    def var_names(self) -> tuple[str, ...]:
        return self.names if self.names is not None else tuple(f"v{j}" for j in range(self.num_vars))

    def row_violation(self, x, rows=None) -> np.ndarray:
        """Signed violation of each row at ``x`` (positive means violated)."""
        idx = np.arange(self.num_rows) if rows is None else np.asarray(rows)
        act = self.A[idx] @ x - self.rhs[idx]
        sense = np.array(self.sense, dtype=object)[idx] if len(idx) else np.array([], dtype=object)
        out = np.where(sense == LE, act, np.where(sense == GE, -act, np.abs(act)))
        return out.astype(float)

    def relaxed(self) -> "LinearModel":
        return LinearModel(self.c, self.lb, self.ub, np.zeros_like(self.integer), self.A, self.sense,
                           self.rhs, self.lazy, self.names, self.offset)

    def without_lazy(self) -> "LinearModel":
        return LinearModel(self.c, self.lb, self.ub, self.integer, self.A, self.sense, self.rhs,
                           np.zeros_like(self.lazy), self.names, self.offset)


class ModelBuilder:
    """Incremental construction of a :class:`LinearModel`."""

    def __init__(self):
        self._c: list[float] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._int: list[bool] = []
        self._names: list[str] = []
        self._rows: list[tuple[dict[int, float], str, float, bool]] = []
        self.offset = 0.0

    @property
    def num_vars(self) -> int:
        return len(self._c)

    def add_var(self, lb=0.0, ub=np.inf, obj=0.0, integer=False, name=None) -> int:
        self._c.append(float(obj))
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._int.append(bool(integer))
        self._names.append(name or f"v{len(self._c) - 1}")
        return len(self._c) - 1

    def add_vars(self, count, lb=0.0, ub=np.inf, obj=0.0, integer=False, prefix="v") -> list[int]:
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (count,))
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (count,))
        obj = np.broadcast_to(np.asarray(obj, dtype=float), (count,))
        return [self.add_var(lb[i], ub[i], obj[i], integer, f"{prefix}{i}") for i in range(count)]

    def add_row(self, coefs: dict[int, float], sense: str, rhs: float, lazy=False) -> int:
        if sense not in SENSES:
            raise ParameterError(f"row sense must be one of {SENSES}")
        self._rows.append(({int(k): float(v) for k, v in coefs.items() if v != 0.0}, sense, float(rhs), lazy))
        return len(self._rows) - 1

    def build(self) -> LinearModel:
        nv, nr = len(self._c), len(self._rows)
        A = np.zeros((nr, nv))
        for r, (coefs, _, _, _) in enumerate(self._rows):
            for j, v in coefs.items():
                A[r, j] += v
        return LinearModel(
            c=np.array(self._c), lb=np.array(self._lb), ub=np.array(self._ub),
            integer=np.array(self._int, dtype=bool), A=A,
            sense=tuple(r[1] for r in self._rows), rhs=np.array([r[2] for r in self._rows]),
            lazy=np.array([r[3] for r in self._rows], dtype=bool),
            names=tuple(self._names), offset=self.offset,
        )


@dataclass
class SolverParams:
    gap_rel: float = 1e-6
    feas_tol: float = 1e-6
    int_tol: float = 1e-6
    time_limit: float = np.inf
    node_limit: int = 10**7
    seed: int = 0
    lp_engine: str = "highs"  # or "simplex"
    backend: str = "builtin"  # or "external:<command>"

    def __post_init__(self):
        if self.gap_rel <= 0 or self.feas_tol <= 0 or self.int_tol <= 0:
            raise ParameterError("solver tolerances must be positive")
        if self.lp_engine not in ("highs", "simplex"):
            raise ParameterError("lp_engine must be 'highs' or 'simplex'")
        if not (self.backend == "builtin" or self.backend.startswith("external:")):
            raise ParameterError("backend must be 'builtin' or 'external:<command>'")


@dataclass
class SolveOutcome:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = np.nan
    bound: float = np.nan
    elapsed: float = 0.0
    nodes: int = 0
    lazy_added: int = 0
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def has_solution(self) -> bool:
        return self.x is not None
