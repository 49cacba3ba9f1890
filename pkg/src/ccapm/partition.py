"""Scenario partitions, subset classification and initial partitions."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError
from .instance import DEFAULT_TOL, CcspInstance


def _canon(subset: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(int(s) for s in subset))


@dataclass(frozen=True, eq=False)
class Partition:
    """Ordered collection of scenario subsets, each stored as a sorted tuple.

    ``ids`` are stable labels: a subset keeps its id until it is split or
    merged, and new subsets receive fresh ids from ``next_id``.  Equality is
    multiset equality of the subsets (ids and order are ignored).
    """

    subsets: tuple[tuple[int, ...], ...]
    ids: tuple[int, ...] = ()
    generation: int = 0
    next_id: int = 0

    def __post_init__(self):
        subsets = tuple(_canon(p) for p in self.subsets)
        object.__setattr__(self, "subsets", subsets)
        if not self.ids:
            object.__setattr__(self, "ids", tuple(range(len(subsets))))
        if len(self.ids) != len(subsets):
            raise ParameterError("one id per subset is required")
        object.__setattr__(self, "next_id", max(self.next_id, max(self.ids, default=-1) + 1))

    # ---- container protocol -------------------------------------------------
    def __len__(self) -> int:
        return len(self.subsets)

    def __iter__(self):
        return iter(self.subsets)

    def __getitem__(self, pos: int) -> tuple[int, ...]:
        return self.subsets[pos]

    def key(self) -> tuple[tuple[int, ...], ...]:
        """Canonical form: sorted tuple of sorted subsets."""
        return tuple(sorted(self.subsets))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return Counter(self.subsets) == Counter(other.subsets)

    def __hash__(self) -> int:
        return hash(self.key())

    @property
    def size(self) -> int:
        return len(self.subsets)

    def sizes(self) -> np.ndarray:
        return np.array([len(p) for p in self.subsets])

    def owner(self, num_scenarios: int) -> np.ndarray:
        """Position of the subset holding each scenario."""
        out = np.full(num_scenarios, -1)
        for pos, p in enumerate(self.subsets):
            out[list(p)] = pos
        return out

    def position(self, subset_id: int) -> int:
        return self.ids.index(subset_id)

    def to_lists(self) -> list[list[int]]:
        return [list(p) for p in self.subsets]

    # ---- structural relations -----------------------------------------------
    def is_refinement_of(self, other: "Partition") -> bool:
        """Every subset of ``self`` lies inside a subset of ``other``."""
        parent = {}
        for pos, p in enumerate(other.subsets):
            for s in p:
                parent[s] = pos
        for p in self.subsets:
            owners = {parent.get(s) for s in p}
            if len(owners) != 1 or None in owners:
                return False
        return True

    # ---- copy-on-modify edits ------------------------------------------------
    def split(self, pos: int, left: Sequence[int], right: Sequence[int]) -> "Partition":
        """Replace subset ``pos`` by ``left`` and ``right`` (appended at the end)."""
        left, right = _canon(left), _canon(right)
        if not left or not right or set(left) & set(right) or set(left) | set(right) != set(self.subsets[pos]):
            raise ParameterError("split children must be a nonempty bipartition of the subset")
        subsets = self.subsets[:pos] + self.subsets[pos + 1:] + (left, right)
        ids = self.ids[:pos] + self.ids[pos + 1:] + (self.next_id, self.next_id + 1)
        return Partition(subsets, ids, self.generation + 1, self.next_id + 2)

    def merge(self, positions: Sequence[int]) -> "Partition":
        """Union the subsets at ``positions`` into one new subset (appended)."""
        positions = sorted(set(int(p) for p in positions))
        if len(positions) < 2:
            raise ParameterError("a merge needs at least two subsets")
        union = _canon(s for pos in positions for s in self.subsets[pos])
        keep = [i for i in range(len(self.subsets)) if i not in positions]
        subsets = tuple(self.subsets[i] for i in keep) + (union,)
        ids = tuple(self.ids[i] for i in keep) + (self.next_id,)
        return Partition(subsets, ids, self.generation + 1, self.next_id + 1)

    @classmethod
    def singletons(cls, num_scenarios: int) -> "Partition":
        return cls(tuple((s,) for s in range(num_scenarios)))


def validate_partition(partition: Partition, instance: CcspInstance) -> str | None:
    """Return ``None`` if ``partition`` is admissible, else a description of the first problem."""
    seen: dict[int, int] = {}
    S = instance.num_scenarios
    for pos, p in enumerate(partition.subsets):
        if not p:
            return f"subset {pos} is empty"
        for s in p:
            if not 0 <= s < S:
                return f"scenario {s} in subset {pos} is out of range"
            if s in seen:
                return f"scenario {s} appears in subsets {seen[s]} and {pos} (overlap)"
            seen[s] = pos
    if len(seen) != S:
        missing = sorted(set(range(S)) - set(seen))
        return f"scenarios {missing[:10]} are not covered"
    if len(partition) <= instance.k:
        return f"partition has {len(partition)} subsets, needs more than {instance.k}"
    if len(set(partition.ids)) != len(partition.ids):
        return "subset ids are not unique"
    return None


@dataclass(frozen=True)
class Classification:
    """Subsets split by feasibility at a point (positions refer to ``partition.subsets``)."""

    feasible: tuple[int, ...]
    infeasible: tuple[int, ...]
    infeasible_scenarios: tuple[int, ...]
    z: np.ndarray
    scenario_violation: np.ndarray = field(repr=False)

    @property
    def num_feasible(self) -> int:
        return len(self.feasible)

    @property
    def num_infeasible(self) -> int:
        return len(self.infeasible)


def classify(partition: Partition, instance: CcspInstance, x, tol: float = DEFAULT_TOL) -> Classification:
    viol = instance.scenario_violation(np.asarray(x, dtype=float))
    bad = viol > tol
    z = np.array([not bad[list(p)].any() for p in partition.subsets], dtype=bool)
    return Classification(
        feasible=tuple(int(i) for i in np.flatnonzero(z)),
        infeasible=tuple(int(i) for i in np.flatnonzero(~z)),
        infeasible_scenarios=tuple(int(s) for s in np.flatnonzero(bad)),
        z=z,
        scenario_violation=viol,
    )


def excluded_by(partition: Partition, instance: CcspInstance, x, tol: float = DEFAULT_TOL) -> bool:
    """True if ``x`` cannot be part of a feasible lower-model solution on ``partition``."""
    cls = classify(partition, instance, x, tol)
    return cls.num_feasible < len(partition) - instance.k


def descending_order(costs) -> np.ndarray:
    """Scenario permutation sorting costs descending, ties by index ascending."""
    costs = np.asarray(costs, dtype=float)
    return np.lexsort((np.arange(len(costs)), -costs))


def initial_partition_quantile(instance: CcspInstance, scenario_costs) -> Partition:
    """Deal the cost-sorted scenarios round-robin into ``k + 1`` subsets."""
    if scenario_costs is None:
        raise ParameterError("scenario costs are required")
    costs = np.asarray(scenario_costs, dtype=float)
    if costs.shape != (instance.num_scenarios,) or np.isnan(costs).any():
        raise ParameterError("one cost per scenario is required")
    size = instance.min_partition_size
    order = descending_order(costs)
    buckets: list[list[int]] = [[] for _ in range(size)]
    for i, s in enumerate(order):
        buckets[i % size].append(int(s))
    return Partition(tuple(tuple(b) for b in buckets))


def initial_partition_random(instance: CcspInstance, size: int, seed: int = 0) -> Partition:
    """Seeded shuffle followed by a round-robin deal into ``size`` balanced subsets."""
    S = instance.num_scenarios
    if not instance.k < size <= S:
        raise ParameterError(f"size must lie in ({instance.k}, {S}]")
    perm = np.random.default_rng(seed).permutation(S)
    buckets: list[list[int]] = [[] for _ in range(size)]
    for i, s in enumerate(perm):
        buckets[i % size].append(int(s))
    return Partition(tuple(tuple(b) for b in buckets))
