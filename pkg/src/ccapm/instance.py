"""Chance-constrained instances with finite, equiprobable scenario support.

An instance is ``min c'x`` over a box (plus optional deterministic ``<=`` rows)
subject to the chance constraint that at most ``floor(tau * |S|)`` scenario
blocks ``A^s x <= b^s`` are violated.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ParameterError

FORMAT_VERSION = 1
DEFAULT_TOL = 1e-6
DOMAINS = ("continuous", "binary")


def max_violations(tau: float, num_scenarios: int) -> int:
    """Number of scenarios allowed to be violated, ``floor(tau * |S|)``.

    A tiny slack absorbs products such as ``0.29 * 100 = 28.999999999999996``.
    """
    return int(math.floor(tau * num_scenarios + 1e-9))


@dataclass(frozen=True)
class Scenario:
    lhs: np.ndarray  # (m, n)
    rhs: np.ndarray  # (m,)

    def __post_init__(self):
        lhs = np.atleast_2d(np.asarray(self.lhs, dtype=float))
        rhs = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        if lhs.shape[0] != rhs.shape[0] or lhs.shape[0] < 1:
            raise ParameterError(f"scenario lhs {lhs.shape} and rhs {rhs.shape} disagree")
        if not (np.all(np.isfinite(lhs)) and np.all(np.isfinite(rhs))):
            raise ParameterError("scenario entries must be finite")
        object.__setattr__(self, "lhs", lhs)
        object.__setattr__(self, "rhs", rhs)


@dataclass(frozen=True)
class CcspInstance:
    num_vars: int
    var_domain: str
    lower: np.ndarray
    upper: np.ndarray
    objective: np.ndarray
    det_lhs: np.ndarray  # (k, n), k may be 0
    det_rhs: np.ndarray
    scenarios: tuple[Scenario, ...]
    tau: float
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = int(self.num_vars)
        if n < 1:
            raise ParameterError("num_vars must be >= 1")
        if self.var_domain not in DOMAINS:
            raise ParameterError(f"var_domain must be one of {DOMAINS}")
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if self.var_domain == "binary":
            lower = np.maximum(lower, 0.0)
            upper = np.minimum(upper, 1.0)
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        det_lhs = np.asarray(self.det_lhs, dtype=float).reshape(-1, n)
        det_rhs = np.asarray(self.det_rhs, dtype=float).reshape(-1)
        if lower.size != n or upper.size != n or c.size != n:
            raise ParameterError("bounds/objective length must equal num_vars")
        if np.any(lower > upper):
            raise ParameterError("lower bound exceeds upper bound")
        if det_lhs.shape[0] != det_rhs.size:
            raise ParameterError("deterministic rows and rhs disagree")
        scenarios = tuple(s if isinstance(s, Scenario) else Scenario(*s) for s in self.scenarios)
        if not scenarios:
            raise ParameterError("at least one scenario is required")
        m = scenarios[0].lhs.shape[0]
        for s in scenarios:
            if s.lhs.shape != (m, n):
                raise ParameterError("every scenario must have the same shape (m, n)")
        if not 0.0 <= self.tau <= 1.0:
            raise ParameterError("tau must lie in [0, 1]")
        if max_violations(self.tau, len(scenarios)) >= len(scenarios):
            raise ParameterError("floor(tau*|S|) >= |S| makes the chance constraint vacuous")
        for name, val in [("num_vars", n), ("lower", lower), ("upper", upper), ("objective", c),
                          ("det_lhs", det_lhs), ("det_rhs", det_rhs), ("scenarios", scenarios),
                          ("tau", float(self.tau))]:
            object.__setattr__(self, name, val)

    # ---- derived quantities -------------------------------------------------
    @property
    def num_scenarios(self) -> int:
        return len(self.scenarios)

    @property
    def num_rows(self) -> int:
        return self.scenarios[0].lhs.shape[0]

    @property
    def is_binary(self) -> bool:
        return self.var_domain == "binary"

    @property
    def k(self) -> int:
        """Allowed number of violated scenarios."""
        return max_violations(self.tau, self.num_scenarios)

    @property
    def min_partition_size(self) -> int:
        return self.k + 1

    @property
    def required_satisfied(self) -> int:
        return self.num_scenarios - self.k

    @cached_property
    def lhs(self) -> np.ndarray:
        """Stacked scenario matrices, shape (|S|, m, n)."""
        return np.stack([s.lhs for s in self.scenarios])

    @cached_property
    def rhs(self) -> np.ndarray:
        return np.stack([s.rhs for s in self.scenarios])

    def violations(self, x) -> np.ndarray:
        """Row violations ``A^s x - b^s``, shape (|S|, m)."""
        x = np.asarray(x, dtype=float)
        return self.lhs @ x - self.rhs

    def scenario_violation(self, x) -> np.ndarray:
        """max_i (A^s_i x - b^s_i) per scenario (may be negative)."""
        return self.violations(x).max(axis=1)

    def objective_value(self, x) -> float:
        return float(self.objective @ np.asarray(x, dtype=float))

    def in_domain(self, x, tol: float = DEFAULT_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        if self.det_lhs.shape[0] and np.any(self.det_lhs @ x - self.det_rhs > tol):
            return False
        if self.is_binary and np.any(np.abs(x - np.round(x)) > tol):
            return False
        return True

    # ---- serialization ------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "version": FORMAT_VERSION,
            "num_vars": self.num_vars,
            "var_domain": self.var_domain,
            "var_bounds": [self.lower.tolist(), self.upper.tolist()],
            "objective": self.objective.tolist(),
            "deterministic_rows": {"lhs": self.det_lhs.tolist(), "rhs": self.det_rhs.tolist()},
            "scenarios": [{"lhs": s.lhs.tolist(), "rhs": s.rhs.tolist()} for s in self.scenarios],
            "tau": self.tau,
            "generator": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CcspInstance":
        if data.get("version") != FORMAT_VERSION:
            raise ParameterError(f"unsupported instance version {data.get('version')!r}")
        n = int(data["num_vars"])
        det = data.get("deterministic_rows") or {"lhs": [], "rhs": []}
        return cls(
            num_vars=n,
            var_domain=data["var_domain"],
            lower=data["var_bounds"][0],
            upper=data["var_bounds"][1],
            objective=data["objective"],
            det_lhs=np.asarray(det["lhs"], dtype=float).reshape(-1, n),
            det_rhs=det["rhs"],
            scenarios=tuple(Scenario(s["lhs"], s["rhs"]) for s in data["scenarios"]),
            tau=float(data["tau"]),
            metadata=dict(data.get("generator") or {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def fingerprint(self) -> str:
        """Stable content hash (used to key on-disk caches)."""
        payload = self.to_dict()
        payload.pop("generator")
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def save_instance(instance: CcspInstance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict(), indent=1, sort_keys=True))


def load_instance(path) -> CcspInstance:
    return CcspInstance.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeasibilityReport:
    satisfied_count: int
    per_scenario_max_violation: np.ndarray
    chance_feasible: bool

    tol: float = DEFAULT_TOL

    @property
    def satisfied(self) -> np.ndarray:
        """Boolean mask of satisfied scenarios."""
        return self.per_scenario_max_violation <= self.tol


def evaluate_point(instance: CcspInstance, x, tol: float = DEFAULT_TOL) -> FeasibilityReport:
    """Count satisfied scenarios at ``x`` and decide chance feasibility."""
    if tol <= 0:
        raise ParameterError("tol must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != instance.num_vars:
        raise ParameterError(f"point has {x.size} entries, instance has {instance.num_vars} variables")
    viol = np.maximum(instance.scenario_violation(x), 0.0)
    count = int(np.count_nonzero(viol <= tol))
    return FeasibilityReport(count, viol, count >= instance.required_satisfied, tol)


# ---------------------------------------------------------------------------
# Generators and fixtures
# ---------------------------------------------------------------------------

def generate_knapsack_instance(base_rows: int, base_vars: int, num_scenarios: int, tau: float,
                               domain: str = "continuous", seed: int = 0, delta: float = 0.1,
                               zeta: float = 0.5, replica: int | None = None) -> CcspInstance:
    """Chance-constrained multidimensional knapsack with perturbed weights.

    Base weights and profits are integers drawn from U[1, 100]; capacities are
    ``zeta`` times the row sums.  Scenario ``s`` multiplies every weight by an
    independent U[1 - delta, 1 + delta] factor.  Profit maximisation is stored
    as minimisation of ``-profit' x`` over ``x in [0, 1]^n``.

    With ``replica`` set, the base data still come from ``seed`` while the
    perturbations come from a separate stream, so replicas share one base.
    """
    if min(base_rows, base_vars, num_scenarios) < 1:
        raise ParameterError("base_rows, base_vars and num_scenarios must be >= 1")
    if not 0.0 <= tau < 1.0:
        raise ParameterError("tau must lie in [0, 1)")
    if domain not in DOMAINS:
        raise ParameterError(f"domain must be one of {DOMAINS}")
    if not 0.0 <= delta < 1.0:
        raise ParameterError("delta must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    base = np.round(rng.uniform(1, 100, size=(base_rows, base_vars)))
    profit = np.round(rng.uniform(1, 100, size=base_vars))
    cap = zeta * base.sum(axis=1)
    noise_rng = rng if replica is None else np.random.default_rng([seed, int(replica)])
    noise = noise_rng.uniform(1 - delta, 1 + delta, size=(num_scenarios, base_rows, base_vars))
    scenarios = tuple(Scenario(base * noise[s], cap.copy()) for s in range(num_scenarios))
    return CcspInstance(
        num_vars=base_vars,
        var_domain=domain,
        lower=np.zeros(base_vars),
        upper=np.ones(base_vars),
        objective=-profit,
        det_lhs=np.zeros((0, base_vars)),
        det_rhs=np.zeros(0),
        scenarios=scenarios,
        tau=tau,
        metadata={"kind": "knapsack", "seed": seed, "delta": delta, "zeta": zeta,
                  "base_rows": base_rows, "base_vars": base_vars, "replica": replica},
    )


def _box2(rows: Sequence[tuple[Sequence[float], float]], tau: float, name: str) -> CcspInstance:
    return CcspInstance(
        num_vars=2, var_domain="continuous", lower=np.zeros(2), upper=np.full(2, 10.0),
        objective=np.array([-1.0, -1.0]), det_lhs=np.zeros((0, 2)), det_rhs=np.zeros(0),
        scenarios=tuple(Scenario([a], [b]) for a, b in rows), tau=tau, metadata={"kind": name},
    )


def fixture_t1() -> CcspInstance:
    """Four nested rows x1 + x2 <= 4, 5, 6, 7 with tau = 0.25."""
    return _box2([((1, 1), 4), ((1, 1), 5), ((1, 1), 6), ((1, 1), 7)], 0.25, "T1")


def fixture_t2() -> CcspInstance:
    """Rows x1 <= 2, x2 <= 2, x1 + x2 <= 6, x1 + x2 <= 8 with tau = 0.25."""
    return _box2([((1, 0), 2), ((0, 1), 2), ((1, 1), 6), ((1, 1), 8)], 0.25, "T2")
