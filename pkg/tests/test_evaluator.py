import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decpomdp.evaluator import (
    CapExceeded,
    brute_force_solve,
    evaluate,
    evaluate_flat,
    expected_stage_rewards,
    simulate,
    stage_values,
)
from decpomdp.policy import (
    PureJointPolicy,
    constant_policy,
    num_joint_policies,
    random_policy,
)
from decpomdp.problems import make_dectiger, make_skewed_dectiger

from conftest import tiny_random
from oracles import naive_optimum, naive_value


def test_always_listen_dectiger():
    m = make_dectiger(3)
    li = m.actions[0].index("aLi")
    pol = constant_policy(m, [li, li])
    assert evaluate(m, pol) == pytest.approx(-6.0)
    np.testing.assert_allclose(expected_stage_rewards(m, pol), [-2, -2, -2])
    np.testing.assert_allclose(stage_values(m, pol), [-6, -4, -2])


def test_dectiger_h1_value():
    m = make_dectiger(1)
    res = brute_force_solve(m)
    # both listening is the best blind joint action
    assert res.value == -2.0
    assert res.count == 9


@given(st.integers(0, 10**6), st.integers(1, 3))
def test_evaluators_agree_with_naive_recursion(seed, h):
    m = tiny_random(seed, horizon=h, n_states=3, n_actions=(2, 3), n_observations=(2, 2),
                    sparsity=0.3)
    pol = random_policy(m, np.random.default_rng(seed))
    want = naive_value(m, pol)
    assert evaluate(m, pol) == pytest.approx(want, abs=1e-9)
    assert evaluate_flat(m, pol) == pytest.approx(want, abs=1e-9)
    assert stage_values(m, pol)[0] == pytest.approx(want, abs=1e-9)


@given(st.integers(0, 10**6))
def test_brute_force_matches_naive_optimum(seed):
    m = tiny_random(seed, horizon=2, n_states=2, n_actions=(2, 2), n_observations=(2, 2))
    best, _ = naive_optimum(m)
    res = brute_force_solve(m)
    assert res.value == pytest.approx(best, abs=1e-9)
    assert naive_value(m, res.policy) == pytest.approx(best, abs=1e-9)
    assert res.count == num_joint_policies(m) == 64


def test_brute_force_three_agents():
    from decpomdp.problems import random_problem

    m = random_problem(np.random.default_rng(4), 2, (2, 2, 2), (2, 1, 2), 2, 0.0)
    best, _ = naive_optimum(m)
    res = brute_force_solve(m)
    assert res.value == pytest.approx(best, abs=1e-9)
    assert evaluate(m, res.policy) == pytest.approx(best, abs=1e-9)


def test_optimum_dominates_random_pure_policies():
    m = make_skewed_dectiger(2)
    res = brute_force_solve(m)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        assert evaluate(m, random_policy(m, rng)) <= res.value + 1e-9


def test_brute_force_dectiger_h2():
    res = brute_force_solve(make_dectiger(2))
    assert res.value == pytest.approx(-4.0)


def test_brute_force_cap():
    with pytest.raises(CapExceeded):
        brute_force_solve(make_dectiger(3), cap=10)


def test_evaluate_rejects_incomplete_policy():
    m = make_dectiger(3)
    pol = random_policy(m, np.random.default_rng(0), stages=2)
    with pytest.raises(ValueError):
        evaluate(m, PureJointPolicy(pol.rules))


def test_simulate_is_seeded_and_unbiased():
    m = make_dectiger(3)
    pol = brute_force_solve(m).policy
    a = simulate(m, pol, 20000, seed=3)
    b = simulate(m, pol, 20000, seed=3)
    assert a == b
    mean, err = a
    assert err > 0
    assert abs(mean - evaluate(m, pol)) < 4 * err


def test_simulate_deterministic_problem_has_zero_error():
    m = make_dectiger(2)
    li = m.actions[0].index("aLi")
    mean, err = simulate(m, constant_policy(m, [li, li]), 1000, seed=0)
    assert mean == pytest.approx(-4.0) and err == pytest.approx(0.0, abs=1e-12)
