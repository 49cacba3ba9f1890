import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from ccapm.bounds import (LOWER, UPPER, BigMTable, CostOracle, big_m_coefficients, build_reduced_model,
                          knapsack_lp_max, quantile_bound, scenario_cost, solve_bound, subset_cost)
from ccapm.errors import ContractError, ParameterError
from ccapm.instance import CcspInstance, Scenario, evaluate_point, generate_knapsack_instance
from ccapm.milp import SolverParams
from ccapm.oracle import brute_force_optimal
from ccapm.partition import Partition, initial_partition_quantile, initial_partition_random

EXACT = SolverParams(gap_rel=1e-9)


def P(*subsets):
    return Partition(tuple(tuple(s) for s in subsets))


def test_scenario_costs_t2(t2):
    r1 = scenario_cost(t2, 0)
    assert r1.value == pytest.approx(-12) and np.allclose(r1.x, [2, 10])
    assert scenario_cost(t2, 2).value == pytest.approx(-6)


def test_vacuous_row_cost():
    inst = CcspInstance(2, "continuous", [0, 0], [3, 4], [-1, -1], np.zeros((0, 2)), [],
                        (Scenario([[0, 0]], [1]),), 0.0)
    assert scenario_cost(inst, 0).value == pytest.approx(-7)


def test_subset_costs_t2(t2):
    assert subset_cost(t2, (0, 2)).value == pytest.approx(-6)
    res = subset_cost(t2, (1, 3))
    # (6,2) and (8,0) are both optimal; only the value is pinned
    assert res.value == pytest.approx(-8) and t2.scenario_violation(res.x)[[1, 3]].max() <= 1e-9
    assert subset_cost(t2, (3,)).value == scenario_cost(t2, 3).value


def test_quantile_bounds(t1, t2):
    assert quantile_bound(t1, CostOracle(t1).scenario_costs()) == pytest.approx(-5)
    assert quantile_bound(t2, CostOracle(t2).scenario_costs()) == pytest.approx(-8)
    inst = generate_knapsack_instance(2, 3, 5, 0.0, seed=1)
    rho = CostOracle(inst).scenario_costs()
    assert quantile_bound(inst, rho) == pytest.approx(rho.max())


def test_cardinality_rows(t2):
    part = P((2, 0), (3, 1))
    box = big_m_coefficients(t2, "box")
    low = build_reduced_model(t2, part, box, LOWER)
    assert low.sense[-1] == ">=" and low.rhs[-1] == 1 and np.allclose(low.A[-1, 2:], [1, 1])
    up = build_reduced_model(t2, part, box, UPPER)
    # 2 z_a + 2 z_b >= 3 forces both subsets on
    assert up.rhs[-1] == 3 and np.allclose(up.A[-1, 2:], [2, 2])
    assert solve_bound(t2, part, box, UPPER).value == pytest.approx(-4)


def test_singleton_lower_model_is_exact(t2):
    res = solve_bound(t2, Partition.singletons(4), big_m_coefficients(t2, "box"), LOWER, EXACT)
    assert res.value == pytest.approx(-6)


def test_bound_examples(t1, t2):
    q1 = initial_partition_quantile(t1, CostOracle(t1).scenario_costs())
    r1 = solve_bound(t1, q1, big_m_coefficients(t1, "box"), LOWER, EXACT)
    assert r1.value == pytest.approx(-5) and evaluate_point(t1, r1.x).chance_feasible
    q2 = initial_partition_quantile(t2, CostOracle(t2).scenario_costs())
    r2 = solve_bound(t2, q2, big_m_coefficients(t2, "box"), LOWER, EXACT)
    assert r2.value == pytest.approx(-8) and not evaluate_point(t2, r2.x).chance_feasible
    r3 = solve_bound(t2, P((0,), (2,), (1, 3)), big_m_coefficients(t2, "box"), LOWER, EXACT)
    assert r3.value == pytest.approx(-6)


def test_box_bigm_t2(t2):
    box = big_m_coefficients(t2, "box")
    assert box.values[0, 0] == pytest.approx(8)
    assert box.scope == "global"


def test_binary_box_bigm_interval_bound():
    inst = generate_knapsack_instance(3, 5, 6, 0.2, "binary", seed=4)
    box = big_m_coefficients(inst, "box")
    cap = np.maximum(inst.lhs, 0).sum(axis=2) - inst.rhs
    assert np.all(box.values <= np.maximum(cap, 0) + 1e-9)


def test_partitioned_table_never_exceeds_box(t2):
    box = big_m_coefficients(t2, "box")
    part = P((2, 0), (3, 1))
    tab = big_m_coefficients(t2, "partitioned", EXACT, partition=part, base=box)
    assert np.all(tab.values <= box.values + 1e-9)
    assert tab.covers(part.split(0, (0,), (2,))) and not tab.covers(P((0, 1), (2, 3)))
    with pytest.raises(ContractError):
        build_reduced_model(t2, P((0, 1), (2, 3)), tab)


def test_objcut_needs_incumbent(t2):
    with pytest.raises(ParameterError):
        big_m_coefficients(t2, "objcut")


def test_table_serialisation(t2, tmp_path):
    tab = big_m_coefficients(t2, "objcut", cut_value=-6.0, cache_dir=tmp_path)
    assert list(tmp_path.iterdir())
    again = big_m_coefficients(t2, "objcut", cut_value=-6.0, cache_dir=tmp_path)
    assert np.array_equal(again.values, tab.values) and again.cut_value == -6.0
    assert np.array_equal(BigMTable.from_dict(tab.to_dict()).values, tab.values)


@given(st.integers(0, 10**6))
def test_knapsack_greedy_matches_linprog(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    a = rng.normal(size=n)
    c = rng.normal(size=n)
    lo, hi = -rng.random(n), rng.random(n) + 0.1
    cut = float(rng.normal())
    got = knapsack_lp_max(a, c, cut, lo, hi)
    ref = linprog(-a, A_ub=c[None, :], b_ub=[cut], bounds=list(zip(lo, hi)), method="highs")
    if ref.status == 2:
        assert got == -np.inf
    else:
        assert got == pytest.approx(-ref.fun, abs=1e-7)


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_bigm_entries_bound_sampled_violations(seed):
    inst = generate_knapsack_instance(3, 4, 5, 0.2, seed=seed % 500)
    rng = np.random.default_rng(seed)
    box = big_m_coefficients(inst, "box")
    xs = rng.random((50, 4))
    viol = np.einsum("smn,kn->ksm", inst.lhs, xs) - inst.rhs
    assert np.all(viol <= box.values + 1e-9)
    cut = float(np.median(xs @ inst.objective))
    obj = big_m_coefficients(inst, "objcut", cut_value=cut)
    keep = xs @ inst.objective <= cut
    assert np.all(viol[keep] <= obj.values + 1e-9)
    assert np.all(obj.values <= box.values + 1e-9)


@settings(max_examples=15)
@given(st.integers(0, 300), st.sampled_from(["box", "objcut", "partitioned"]))
def test_lower_and_upper_sandwich_the_optimum(seed, scheme):
    inst = generate_knapsack_instance(2, 4, 6, 0.34, seed=seed)
    vstar = brute_force_optimal(inst).value
    base = big_m_coefficients(inst, "box")
    if scheme != "box":
        base = big_m_coefficients(inst, "objcut", cut_value=vstar + 1.0)
    part = initial_partition_random(inst, 3, seed)
    table = base if scheme != "partitioned" else big_m_coefficients(inst, "partitioned", EXACT, partition=part,
                                                                    base=base)
    low = solve_bound(inst, part, table, LOWER, EXACT)
    up = solve_bound(inst, part, table, UPPER, EXACT)
    tol = 1e-6 * max(1, abs(vstar))
    assert low.value <= vstar + tol
    assert up.value >= vstar - tol
    # refining never lowers the bound
    pos = int(np.argmax(part.sizes()))
    sub = part.subsets[pos]
    finer = part.split(pos, sub[:1], sub[1:])
    assert solve_bound(inst, finer, table, LOWER, EXACT).value >= low.value - tol


@pytest.mark.parametrize("seed", range(6))
def test_tightened_tables_hold_at_the_optimum(seed):
    inst = generate_knapsack_instance(3, 5, 8, 0.25, seed=40 + seed)
    opt = brute_force_optimal(inst)
    viol = inst.violations(opt.x)
    cut = big_m_coefficients(inst, "objcut", cut_value=opt.value)
    assert np.all(viol <= cut.values + 1e-6)
    part = initial_partition_quantile(inst, CostOracle(inst).scenario_costs())
    scoped = big_m_coefficients(inst, "partitioned", EXACT, partition=part, base=cut)
    assert np.all(viol <= scoped.values + 1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_upper_model_witness_is_chance_feasible(seed):
    inst = generate_knapsack_instance(3, 5, 8, 0.25, "binary" if seed % 2 else "continuous", seed=seed)
    part = initial_partition_random(inst, 4, seed)
    up = solve_bound(inst, part, big_m_coefficients(inst, "box"), UPPER, EXACT)
    assert up.x is not None and evaluate_point(inst, up.x).chance_feasible
