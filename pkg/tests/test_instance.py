import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccapm.errors import ParameterError
from ccapm.instance import (CcspInstance, Scenario, evaluate_point, generate_knapsack_instance, load_instance,
                            max_violations, save_instance)


def test_max_violations_floor_guard():
    assert max_violations(0.2, 10) == 2
    assert max_violations(0.1, 30) == 3  # 0.1*30 is 3.0000000000000004 in floating point
    assert max_violations(0.0, 5) == 0


def test_t2_point_62_is_not_chance_feasible(t2):
    rep = evaluate_point(t2, [6, 2])
    assert rep.satisfied_count == 2
    assert list(np.flatnonzero(rep.satisfied)) == [1, 3]
    assert not rep.chance_feasible
    assert rep.per_scenario_max_violation[0] == pytest.approx(4.0)
    assert rep.per_scenario_max_violation[2] == pytest.approx(2.0)


def test_t2_point_42_is_chance_feasible(t2):
    rep = evaluate_point(t2, [4, 2])
    assert list(np.flatnonzero(rep.satisfied)) == [1, 2, 3]
    assert rep.chance_feasible


def test_zero_point_feasible_on_packing_instance():
    inst = generate_knapsack_instance(3, 4, 6, 0.3, seed=1)
    rep = evaluate_point(inst, np.zeros(4))
    assert rep.satisfied_count == 6 and rep.chance_feasible
    assert np.all(rep.per_scenario_max_violation == 0)


def test_generator_shape_mk_10_10():
    inst = generate_knapsack_instance(10, 10, 1000, 0.1, "binary", seed=1)
    assert inst.lhs.shape == (1000, 10, 10)
    assert inst.k == 100 and inst.is_binary
    assert np.all(inst.objective <= 0)


def test_single_scenario_instance_forces_the_scenario():
    inst = generate_knapsack_instance(1, 1, 1, 0.0, seed=0)
    assert inst.k == 0 and inst.required_satisfied == 1


def test_same_seed_gives_identical_bytes():
    a = generate_knapsack_instance(4, 5, 8, 0.25, seed=7).dumps()
    b = generate_knapsack_instance(4, 5, 8, 0.25, seed=7).dumps()
    assert a == b


def test_replicas_share_base_but_differ_in_noise():
    r0 = generate_knapsack_instance(3, 4, 5, 0.2, seed=3, replica=0)
    r1 = generate_knapsack_instance(3, 4, 5, 0.2, seed=3, replica=1)
    assert np.array_equal(r0.objective, r1.objective)
    assert not np.array_equal(r0.lhs, r1.lhs)


def test_vacuous_chance_constraint_rejected():
    with pytest.raises(ParameterError):
        CcspInstance(1, "continuous", [0], [1], [-1], np.zeros((0, 1)), [], (Scenario([[1]], [1]),), 1.0)


def test_mismatched_scenario_shapes_rejected():
    with pytest.raises(ParameterError):
        CcspInstance(2, "continuous", [0, 0], [1, 1], [-1, -1], np.zeros((0, 2)), [],
                     (Scenario([[1, 1]], [1]), Scenario([[1, 1], [1, 0]], [1, 1])), 0.0)


def test_save_load_roundtrip(tmp_path, t2):
    path = tmp_path / "t2.json"
    save_instance(t2, path)
    back = load_instance(path)
    assert back.dumps() == t2.dumps()
    assert back.fingerprint() == t2.fingerprint()


def test_unknown_format_version_rejected(t2):
    data = t2.to_dict()
    data["version"] = 99
    with pytest.raises(ParameterError):
        CcspInstance.from_dict(json.loads(json.dumps(data)))


@given(seed=st.integers(0, 10**6), S=st.integers(1, 12), tau=st.floats(0, 0.9), domain=st.sampled_from(["continuous", "binary"]))
def test_roundtrip_property(seed, S, tau, domain):
    if max_violations(tau, S) >= S:
        return
    inst = generate_knapsack_instance(2, 3, S, tau, domain, seed=seed)
    assert CcspInstance.from_dict(json.loads(inst.dumps())).dumps() == inst.dumps()


@given(seed=st.integers(0, 1000), scale=st.floats(0.0, 1.0))
def test_satisfied_count_monotone_along_ray(seed, scale):
    # packing rows with b >= 0: shrinking x toward 0 never loses a satisfied scenario
    inst = generate_knapsack_instance(3, 4, 8, 0.25, seed=seed)
    x = np.random.default_rng(seed).random(4)
    full = evaluate_point(inst, x)
    shrunk = evaluate_point(inst, scale * x)
    assert np.all(shrunk.satisfied >= full.satisfied)
    assert full.chance_feasible == (full.satisfied_count >= inst.required_satisfied)


def test_loaded_instance_agrees_on_random_points(tmp_path):
    inst = generate_knapsack_instance(4, 6, 12, 0.25, seed=5)
    save_instance(inst, tmp_path / "i.json")
    back = load_instance(tmp_path / "i.json")
    for x in np.random.default_rng(0).random((100, 6)):
        a, b = evaluate_point(inst, x), evaluate_point(back, x)
        assert a.satisfied_count == b.satisfied_count
        assert np.allclose(a.per_scenario_max_violation, b.per_scenario_max_violation, atol=1e-6)


@given(st.integers(0, 500), st.floats(1e-9, 1e-3), st.floats(1.0, 100.0))
def test_looser_tolerance_never_loses_scenarios(seed, tol, factor):
    inst = generate_knapsack_instance(3, 4, 8, 0.25, seed=seed)
    x = np.random.default_rng(seed).random(4)
    assert evaluate_point(inst, x, tol * factor).satisfied_count >= evaluate_point(inst, x, tol).satisfied_count


def test_distinct_seeds_give_distinct_perturbations():
    mats = [generate_knapsack_instance(3, 4, 5, 0.2, seed=s).lhs for s in range(10)]
    assert all(not np.array_equal(mats[i], mats[j]) for i in range(10) for j in range(i))
