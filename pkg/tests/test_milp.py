import itertools
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccapm.bounds import LOWER, big_m_coefficients, build_reduced_model
from ccapm.errors import AdapterError
from ccapm.milp import (GE, INFEASIBLE, LE, OPTIMAL, ExternalAdapter, LinearModel, ModelBuilder, SolverParams,
                        external_solve, lp_solve, read_lp, read_solution, solve_lp_relaxation, solve_model,
                        write_lp, write_solution)
from ccapm.partition import Partition

RUNNER = ("external:" + sys.executable + " -m ccapm.milp.lp_runner")


def random_mixed_model(seed, n_int=3, n_cont=2, rows=3, lazy_frac=0.0):
    rng = np.random.default_rng(seed)
    b = ModelBuilder()
    xs = [b.add_var(0, 2, rng.integers(-9, 4), integer=True) for _ in range(n_int)]
    ys = [b.add_var(0, 5, rng.integers(-9, 4)) for _ in range(n_cont)]
    for _ in range(rows):
        coefs = {v: float(rng.integers(-3, 8)) for v in xs + ys}
        b.add_row(coefs, LE, float(rng.integers(3, 20)), lazy=bool(rng.random() < lazy_frac))
    return b.build()


def enumerate_optimum(model):
    ints = np.flatnonzero(model.integer)
    cont = np.flatnonzero(~model.integer)
    best = np.inf
    ranges = [range(int(model.lb[j]), int(model.ub[j]) + 1) for j in ints]
    for combo in itertools.product(*ranges):
        fixed = np.zeros(model.num_vars)
        fixed[ints] = combo
        rhs = model.rhs - model.A[:, ints] @ np.array(combo, dtype=float)
        status, _, obj = lp_solve(model.c[cont], model.A[:, cont], model.sense, rhs, model.lb[cont], model.ub[cont])
        if status == OPTIMAL:
            best = min(best, obj + model.c[ints] @ np.array(combo, dtype=float))
    return best


def test_single_binding_row_lp():
    b = ModelBuilder()
    x = b.add_vars(2, 0, 10, -1.0)
    b.add_row({x[0]: 1, x[1]: 1}, LE, 5)
    out = solve_model(b.build())
    assert out.status == OPTIMAL and out.objective == pytest.approx(-5)


def test_forced_indicator():
    b = ModelBuilder()
    z = b.add_var(0, 1, 0, integer=True)
    x = b.add_var(0, 10, -1.0)
    b.add_row({z: 1}, "==", 1)
    b.add_row({x: 1, z: 10}, LE, 10)
    out = solve_model(b.build())
    assert out.objective == pytest.approx(0.0)


def test_t2_single_model_with_box_bigm(t2):
    model = build_reduced_model(t2, Partition.singletons(4), big_m_coefficients(t2, "box"), LOWER, lazy=False)
    out = solve_model(model, SolverParams(gap_rel=1e-9))
    assert out.objective == pytest.approx(-6)


def test_infeasible_rows():
    b = ModelBuilder()
    x = b.add_var(-5, 5)
    b.add_row({x: 1}, GE, 1)
    b.add_row({x: 1}, LE, 0)
    m = b.build()
    assert solve_lp_relaxation(m).status == INFEASIBLE
    assert solve_model(m).status == INFEASIBLE


def test_pure_lp_relaxation_matches_solve():
    m = random_mixed_model(3, n_int=0, n_cont=4)
    assert solve_lp_relaxation(m).objective == pytest.approx(solve_model(m).objective)


@pytest.mark.parametrize("seed", range(100))
def test_simplex_engine_matches_enumeration(seed):
    m = random_mixed_model(seed)
    out = solve_model(m, SolverParams(gap_rel=1e-9, lp_engine="simplex"))
    assert out.objective == pytest.approx(enumerate_optimum(m), abs=1e-7)


@pytest.mark.parametrize("seed", range(30))
def test_lazy_rows_do_not_change_the_optimum(seed):
    m = random_mixed_model(1000 + seed, lazy_frac=0.6)
    a = solve_model(m, SolverParams(gap_rel=1e-9))
    b = solve_model(m.without_lazy(), SolverParams(gap_rel=1e-9))
    assert a.objective == pytest.approx(b.objective, abs=1e-7)
    assert np.all(m.row_violation(a.x) <= 1e-6)


@pytest.mark.parametrize("seed", range(50))
def test_relaxation_never_exceeds_milp(seed):
    m = random_mixed_model(2000 + seed, n_int=4, n_cont=1)
    assert solve_lp_relaxation(m).objective <= solve_model(m).objective + 1e-9


def test_solves_are_deterministic():
    m = random_mixed_model(77, n_int=5, n_cont=2, rows=4)
    a, b = solve_model(m), solve_model(m)
    assert a.objective == b.objective and np.array_equal(a.x, b.x) and a.nodes == b.nodes


def test_lp_text_roundtrip():
    m = random_mixed_model(5, lazy_frac=0.5)
    back = read_lp(write_lp(m))

    def rows(model):  # lazy rows live in their own section, so compare row multisets
        return sorted((tuple(model.A[r]), model.sense[r], model.rhs[r], bool(model.lazy[r]))
                      for r in range(model.num_rows))

    assert rows(back) == rows(m)
    assert np.allclose(back.c, m.c) and np.array_equal(back.integer, m.integer)


def test_lp_text_keeps_large_exponents():
    b = ModelBuilder()
    x = b.add_var(0, 1e20, 1.0)
    b.add_row({x: 2.5e-12}, LE, 1e+20)
    back = read_lp(write_lp(b.build()))
    assert back.rhs[0] == pytest.approx(1e20) and back.A[0, 0] == pytest.approx(2.5e-12)


def test_solution_text_roundtrip():
    m = random_mixed_model(6)
    out = solve_model(m)
    back = read_solution(write_solution(out, m.var_names()), m.var_names())
    assert back.status == OPTIMAL and np.allclose(back.x, out.x) and back.objective == pytest.approx(out.objective)


def test_external_adapter_agrees_on_t2(t2):
    model = build_reduced_model(t2, Partition.singletons(4), big_m_coefficients(t2, "box"), LOWER, lazy=False)
    ext = external_solve(model, ExternalAdapter.from_backend(RUNNER))
    assert ext.objective == pytest.approx(solve_model(model).objective, abs=1e-6)


def test_external_empty_model():
    empty = LinearModel(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0, bool), np.zeros((0, 0)), (),
                        np.zeros(0), np.zeros(0, bool))
    out = external_solve(empty, ExternalAdapter(("does-not-matter",)))
    assert out.status == OPTIMAL and out.objective == 0.0


def test_external_missing_binary():
    with pytest.raises(AdapterError):
        external_solve(random_mixed_model(1), ExternalAdapter(("/nonexistent/solver",)))


def test_external_nonzero_exit_carries_output():
    with pytest.raises(AdapterError) as err:
        external_solve(random_mixed_model(1), ExternalAdapter((sys.executable, "-c", "import sys; print('boom'); sys.exit(3)")))
    assert "boom" in err.value.output


@settings(max_examples=25)
@given(st.integers(0, 10**6))
def test_engines_agree(seed):
    m = random_mixed_model(seed, n_int=2, n_cont=2)
    a = solve_model(m, SolverParams(gap_rel=1e-9))
    b = solve_model(m, SolverParams(gap_rel=1e-9, lp_engine="simplex"))
    assert a.objective == pytest.approx(b.objective, abs=1e-7)
