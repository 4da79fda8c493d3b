import numpy as np
import pytest

from decpomdp.policy import (
    PartialJointPolicy,
    PureJointPolicy,
    constant_policy,
    digits_rank,
    dump_policy,
    individual_rules_from_rank,
    num_decision_rules,
    num_individual_policies,
    num_joint_policies,
    policy_from_ranks,
    rank_digits,
)
from decpomdp.problems import make_dectiger


def test_counts():
    assert num_decision_rules(3, 2, 2) == 3**4
    assert num_individual_policies(3, 2, 3) == 3**7
    assert num_joint_policies(make_dectiger(3)) == 3**14
    assert num_joint_policies(make_dectiger(3), stages=1) == 9


def test_rank_digits_round_trip():
    digits = rank_digits(np.arange(27), 3, 3)
    assert digits[5].tolist() == [0, 1, 2]
    for r, d in enumerate(digits):
        assert digits_rank(d, 3) == r


def test_individual_rank_is_stage_major():
    rules = individual_rules_from_rank(1, 3, 2, 3)
    # lowest digit belongs to the last observation history of the last stage
    assert [r.tolist() for r in rules] == [[0], [0, 0], [0, 0, 0, 1]]
    rules = individual_rules_from_rank(3**6, 3, 2, 3)
    assert rules[0].tolist() == [1]


def test_joint_rank_round_trip():
    m = make_dectiger(2)
    pol = policy_from_ranks(m, [17, 20])
    assert isinstance(pol, PureJointPolicy)
    assert pol.agent_rank(m, 0) == 17 and pol.agent_rank(m, 1) == 20
    assert pol.rank(m) == 17 * 3**3 + 20
    with pytest.raises(ValueError):
        policy_from_ranks(m, [0, 27])
    partial = policy_from_ranks(m, [1, 2], stages=1)
    assert not isinstance(partial, PureJointPolicy)
    assert partial.stage == 1


def test_extend_prefix_and_equality():
    phi = PartialJointPolicy.empty(2)
    assert phi.stage == 0
    phi1 = phi.extend([np.array([2]), np.array([1])])
    phi2 = phi1.extend([np.array([0, 1]), np.array([2, 2])])
    assert phi2.stage == 2
    assert phi2.prefix(1) == phi1
    assert phi2.action(0, 1, 1) == 1
    m = make_dectiger(2)
    assert phi2.joint_action(m, 1, (1, 0)) == m.joint_action([1, 2])
    with pytest.raises(ValueError):
        phi2.rules[0][0][0] = 5


def test_validation():
    m = make_dectiger(2)
    with pytest.raises(ValueError):
        PureJointPolicy(((np.array([0]),), (np.array([0]),))).validate(m)
    with pytest.raises(ValueError):
        PartialJointPolicy(((np.array([3]),), (np.array([0]),))).validate(m)
    with pytest.raises(ValueError):
        PartialJointPolicy(((np.array([0]),), ()))


def test_dump_format():
    m = make_dectiger(2)
    text = dump_policy(m, constant_policy(m, [2, 2]))
    lines = text.splitlines()
    assert lines[0] == "agent 0 stage 0 [-] -> aLi"
    assert lines[1] == "agent 0 stage 1 [oHL] -> aLi"
    assert len(lines) == 2 * (1 + 2)
