import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decpomdp.histories import (
    HistorySpace,
    UndefinedBelief,
    consistent_agent_histories,
    decode_sequence,
    encode_sequence,
    is_consistent,
    joint_belief,
    joint_consistent_indices,
    propagate,
)
from decpomdp.policy import PartialJointPolicy, random_policy
from decpomdp.problems import make_dectiger

from conftest import tiny_random
from oracles import ja_index, jo_index


@given(st.integers(2, 6), st.integers(0, 4), st.data())
def test_sequence_round_trip(base, length, data):
    syms = [data.draw(st.integers(0, base - 1)) for _ in range(length)]
    assert decode_sequence(encode_sequence(syms, base), base, length) == syms


def test_successor_and_decompose_are_inverse():
    m = make_dectiger(3)
    sp = HistorySpace(m)
    assert sp.base == 36
    theta = sp.successor(0, 0, 8, 3)
    assert theta == 8 * 4 + 3
    theta2 = sp.successor(theta, 1, 2, 1)
    assert sp.decompose(theta2, 2) == (theta, 2, 1)
    assert sp.joint_symbols(theta2, 2) == [(8, 3), (2, 1)]
    assert sp.joint_index([(8, 3), (2, 1)]) == theta2
    with pytest.raises(ValueError):
        sp.successor(theta2, 2, 0, 0)


def test_alpha_matches_explicit_recursion():
    m = tiny_random(3, horizon=3, n_states=3)
    sp = HistorySpace(m)
    for t in range(3):
        alpha = sp.alpha(t)
        assert alpha.shape == (sp.num_joint(t), 3)
        for theta in range(sp.num_joint(t)):
            b = m.initial_belief.copy()
            for ja, jo in sp.joint_symbols(theta, t):
                b = (b @ m.transition[:, ja, :]) * m.observation[ja, :, jo]
            np.testing.assert_allclose(alpha[theta], b, atol=1e-14)
        # the probabilities of all histories sum to |JA|^t (one distribution per action sequence)
        assert sp.prob(t).sum() == pytest.approx(m.num_joint_actions**t)


def test_expected_reward_table():
    m = tiny_random(7, horizon=2)
    sp = HistorySpace(m)
    for t in range(2):
        np.testing.assert_allclose(sp.expected_reward[t], sp.alpha(t) @ m.reward)


def test_dectiger_listen_history_probability():
    m = make_dectiger(2)
    sp = HistorySpace(m)
    li = m.actions[0].index("aLi")
    ja = m.joint_action([li, li])
    hl = m.observations[0].index("oHL")
    jo = m.joint_observation([hl, hl])
    theta = sp.successor(0, 0, ja, jo)
    # 0.5 * (0.85^2 + 0.15^2)
    assert sp.prob(1)[theta] == pytest.approx(0.5 * (0.85**2 + 0.15**2))
    np.testing.assert_allclose(
        joint_belief(m, theta, 1), [0.85**2 / (0.85**2 + 0.15**2), 0.15**2 / (0.85**2 + 0.15**2)]
    )


def test_joint_belief_rejects_zero_probability():
    m = tiny_random(1, horizon=2)
    O = m.observation.copy()
    O[0] = 0.0
    O[0, :, 0] = 1.0
    m = m.replace(observation=O)
    sp = HistorySpace(m)
    theta = sp.successor(0, 0, 0, 1)
    with pytest.raises(UndefinedBelief):
        joint_belief(m, theta, 1)


@given(st.integers(0, 10**6))
def test_consistent_histories_match_filter(seed):
    m = tiny_random(seed, horizon=3, n_actions=(2, 3), n_observations=(2, 2))
    rng = np.random.default_rng(seed)
    phi = random_policy(m, rng, stages=2)
    sp = HistorySpace(m)
    parts = [consistent_agent_histories(m, i, phi.rules[i]) for i in range(2)]
    grid = joint_consistent_indices([p.contribution for p in parts])
    # oracle: filter every joint history by checking each agent's actions
    expected = set()
    for theta in range(sp.num_joint(2)):
        ok = True
        for i in range(2):
            if not is_consistent(m, i, sp.agent_ao_history(theta, 2, i), 2, phi.rules[i]):
                ok = False
        if ok:
            expected.add(theta)
    assert set(grid.reshape(-1).tolist()) == expected
    assert grid.size == len(expected) == 16
    # AO-index table agrees with the per-history decomposition
    for k0, k1 in itertools.product(range(4), range(4)):
        theta = int(grid[k0, k1])
        assert sp.agent_ao_history(theta, 2, 0) == parts[0].ao_index[k0]
        assert sp.agent_ao_history(theta, 2, 1) == parts[1].ao_index[k1]
        assert sp.agent_obs_history(theta, 2, 0) == k0
        assert sp.agent_obs_history(theta, 2, 1) == k1


@given(st.integers(0, 10**6))
def test_propagate_matches_explicit_sampling_tree(seed):
    m = tiny_random(seed, horizon=3, n_states=3)
    phi = random_policy(m, np.random.default_rng(seed + 1), stages=2)
    dist = propagate(m, phi)
    got = dist.as_dict()
    # oracle: expand the tree explicitly
    want = {}

    def rec(t, s, p, hists, theta):
        if t == 2:
            key = (s, theta)
            want[key] = want.get(key, 0.0) + p
            return
        acts = [int(phi.rules[i][t][hists[i]]) for i in range(2)]
        ja = ja_index(m, acts)
        for s2 in range(3):
            for o0, o1 in itertools.product(range(2), range(2)):
                jo = jo_index(m, (o0, o1))
                q = p * m.transition[s, ja, s2] * m.observation[ja, s2, jo]
                if q > 0:
                    rec(t + 1, s2, q, (hists[0] * 2 + o0, hists[1] * 2 + o1),
                        theta * 16 + ja * 4 + jo)

    for s in range(3):
        if m.initial_belief[s] > 0:
            rec(0, s, m.initial_belief[s], (0, 0), 0)
    assert set(got) == {k for k, v in want.items() if v > 0}
    for k, v in want.items():
        if v > 0:
            assert got[k] == pytest.approx(v, abs=1e-14)
    assert dist.probs.sum() == pytest.approx(1.0)


def test_propagate_empty_policy_is_initial_belief():
    m = make_dectiger(2)
    dist = propagate(m, PartialJointPolicy.empty(2))
    np.testing.assert_array_equal(dist.histories, [0])
    np.testing.assert_array_equal(dist.probs, [m.initial_belief])
