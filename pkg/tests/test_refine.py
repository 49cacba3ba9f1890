import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cases import EXACT, refinement_cases, split_cases
from ccapm.bounds import LOWER, CostOracle, big_m_coefficients, solve_bound
from ccapm.errors import ContractError, ParameterError
from ccapm.instance import CcspInstance, Scenario
from ccapm.partition import Partition, classify, excluded_by
from ccapm.refine import (RefineContext, compute_mu, merge_max, merge_trigger, new_subsets, refine_minimal,
                          select_refinement_subset, split_subset_bruteforce, split_subset_optimal)

X62 = np.array([6.0, 2.0])


def P(*subsets):
    return Partition(tuple(tuple(s) for s in subsets))


def test_mu_on_t2(t2):
    assert compute_mu(t2, classify(P((2, 0), (3, 1)), t2, X62)) == 1


def ladder():
    """x <= 1, ..., x <= 10 on [0, 10] with k = 2."""
    return CcspInstance(1, "continuous", [0], [10], [-1], np.zeros((0, 1)), [],
                        tuple(Scenario([[1.0]], [float(b)]) for b in range(1, 11)), 0.2)


def test_mu_arithmetic_and_edge():
    inst, x = ladder(), np.array([3.5])  # violates scenarios 0, 1, 2
    one = Partition(((0, 1, 2),) + tuple((s,) for s in range(3, 10)))
    assert compute_mu(inst, classify(one, inst, x)) == 2
    three = Partition(((0,), (1,), (2,), tuple(range(3, 10))))
    with pytest.raises(ContractError):
        compute_mu(inst, classify(three, inst, x))


def test_three_infeasible_in_one_subset_gives_two_splits():
    inst, x = ladder(), np.array([3.5])
    part = Partition(((0, 1, 2),) + tuple((s,) for s in range(3, 10)))
    for strategy in ("random", "violation_alternating", "optimized"):
        ref, plans = refine_minimal(inst, part, x, strategy)
        assert len(ref) == len(part) + 2 and len(plans) == 2
        assert ref == Partition.singletons(10)


@pytest.mark.parametrize("strategy", ["random", "violation_alternating", "optimized"])
def test_t2_refinement_is_forced(t2, strategy):
    part = P((2, 0), (3, 1))
    ref, plans = refine_minimal(t2, part, X62, strategy, 1, RefineContext(CostOracle(t2)))
    assert ref == P((0,), (2,), (1, 3))
    assert len(plans) == 1 and set(plans[0].seeds) == {0, 2}


def test_split_count_capped_by_multi_infeasible_subsets(t2):
    ref, plans = refine_minimal(t2, P((2, 0), (3, 1)), X62, "optimized", split_count=2)
    assert len(plans) == 1 and len(ref) == 3


def test_split_count_below_mu_rejected(t2):
    with pytest.raises(ParameterError):
        refine_minimal(t2, P((2, 0), (3, 1)), X62, "optimized", split_count=0)


def test_forced_split_value(t2):
    sol = split_subset_optimal(t2, (0, 2), (0, 2))
    assert {sol.left, sol.right} == {(0,), (2,)}
    assert sol.value == pytest.approx(-12) and sol.alpha == pytest.approx(-12)
    bf = split_subset_bruteforce(t2, (0, 2), (0, 2))
    assert bf.value == pytest.approx(sol.value) and {bf.left, bf.right} == {sol.left, sol.right}


def test_two_infeasible_one_feasible_matches_bruteforce(t2):
    sol = split_subset_optimal(t2, (0, 2, 3), (0, 2))
    bf = split_subset_bruteforce(t2, (0, 2, 3), (0, 2))
    assert sol.alpha == pytest.approx(bf.value, abs=1e-6)


def test_duplicate_rows_split_deterministically():
    rows = [((1, 0), 2), ((1, 0), 2), ((1, 1), 6)]
    inst = CcspInstance(2, "continuous", [0, 0], [10, 10], [-1, -1], np.zeros((0, 2)), [],
                        tuple(Scenario([a], [b]) for a, b in rows), 0.34)
    a = split_subset_optimal(inst, (0, 1, 2), (0, 1))
    b = split_subset_optimal(inst, (0, 1, 2), (0, 1))
    assert (a.left, a.right) == (b.left, b.right)


def test_bruteforce_enumeration_counts(t2):
    calls = []

    class Counting(CostOracle):
        def value(self, subset, relax=False):
            calls.append(tuple(sorted(subset)))
            return super().value(subset, relax)

    split_subset_bruteforce(t2, (0, 2), (0, 2), oracle=Counting(t2))
    assert len(calls) == 2  # one assignment, two children
    calls.clear()
    split_subset_bruteforce(t2, (0, 2, 3), (0, 2), oracle=Counting(t2))
    assert len(calls) == 4  # two assignments


def test_bruteforce_needs_two_infeasible(t2):
    with pytest.raises(ParameterError):
        split_subset_bruteforce(t2, (0, 1), (0,))


def test_selection_rule():
    assert select_refinement_subset([1, 2], [-5.9, -5.5], -6) == 1
    assert select_refinement_subset([1, 2], [-7, -6.5], -6) == 2
    assert select_refinement_subset([9], [-100], 0) == 9
    assert select_refinement_subset([4, 3], [-5, -5], -6) == 3


def test_t2_merge_trigger_fails(t2):
    prev = P((2, 0), (3, 1))
    ref = P((0,), (2,), (1, 3))
    ok, val = merge_trigger(prev, ref, CostOracle(t2), -8.0)
    assert not ok and val == pytest.approx(-12)
    with pytest.raises(ContractError):
        merge_max(t2, prev, ref, X62, CostOracle(t2), -8.0)


def test_new_subsets(t2):
    assert new_subsets(P((2, 0), (3, 1)), P((0,), (2,), (1, 3))) == [0, 1]


@pytest.mark.parametrize("seed, inst, part, x", list(refinement_cases(30, start_seed=5000)))
def test_refinement_minimality_and_exclusion(seed, inst, part, x):
    oracle = CostOracle(inst)
    cls = classify(part, inst, x)
    mu = compute_mu(inst, cls)
    strategy = ("random", "violation_alternating", "optimized")[seed % 3]
    ctx = RefineContext(oracle, np.random.default_rng(seed))
    ref, plans = refine_minimal(inst, part, x, strategy, mu, ctx)
    assert len(ref) - len(part) == mu
    assert ref.is_refinement_of(part)
    assert excluded_by(ref, inst, x)
    low = solve_bound(inst, part, big_m_coefficients(inst, "box"), LOWER, EXACT).value
    ok, _ = merge_trigger(part, ref, oracle, low)
    if ok:
        merged, info = merge_max(inst, part, ref, x, oracle, low, len(plans))
        assert len(merged) == len(part)
        assert excluded_by(merged, inst, x)


@pytest.mark.parametrize("seed, inst, subset, inf", list(split_cases(20, start_seed=700)))
def test_split_model_matches_bruteforce(seed, inst, subset, inf):
    sol = split_subset_optimal(inst, subset, inf, params=EXACT)
    bf = split_subset_bruteforce(inst, subset, inf)
    assert sol.alpha == pytest.approx(bf.value, abs=1e-6)
    assert sol.value == pytest.approx(bf.value, abs=1e-6)


@settings(max_examples=10)
@given(st.integers(0, 10**5))
def test_binary_split_alpha_below_exact(seed):
    (_, inst, subset, inf), = split_cases(1, "binary", max_size=6, start_seed=seed)
    sol = split_subset_optimal(inst, subset, inf, params=EXACT)
    exact = split_subset_bruteforce(inst, subset, inf, relax=False)
    assert sol.alpha <= exact.value + 1e-6


def test_small_dual_bound_is_raised(t2):
    sol = split_subset_optimal(t2, (0, 2, 3), (0, 2), dual_bound=1e-3)
    bf = split_subset_bruteforce(t2, (0, 2, 3), (0, 2))
    assert sol.dual_bound > 1e-3
    assert sol.alpha == pytest.approx(bf.value, abs=1e-6) or math.isclose(sol.value, bf.value, abs_tol=1e-6)
