"""Exact evaluation of pure joint policies, brute-force search and simulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .histories import HistorySpace, propagate
from .model import DecPomdp
from .policy import (
    PartialJointPolicy,
    PureJointPolicy,
    individual_rules_from_rank,
    num_individual_policies,
    rank_digits,
)

TIE_TOL = 1e-12
DEFAULT_POLICY_CAP = 10**8


class CapExceeded(RuntimeError):
    """Raised when an enumeration would exceed its configured size cap."""


# ---------------------------------------------------------------------------
# exact evaluation


def _joint_obs_tables(model: DecPomdp, t: int) -> list[np.ndarray]:
    """Per agent, its observation-history rank for each joint observation
    history of length ``t`` (joint index base |JO|, earliest most significant)."""
    jo_comp = model.joint_observation_table
    tables = [np.zeros(1, np.int64) for _ in range(model.num_agents)]
    for _ in range(t):
        tables = [
            (tab[:, None] * model.num_observations[i] + jo_comp[None, :, i]).reshape(-1)
            for i, tab in enumerate(tables)
        ]
    return tables


def _joint_actions(model: DecPomdp, policy: PartialJointPolicy, t: int) -> np.ndarray:
    tables = _joint_obs_tables(model, t)
    ja = np.zeros(tables[0].size, np.int64)
    for i, tab in enumerate(tables):
        ja += policy.rules[i][t][tab] * model.action_strides[i]
    return ja


def evaluate(model: DecPomdp, policy: PureJointPolicy) -> float:
    """Expected cumulative reward of a pure joint policy.

    Backward recursion over (stage, state, joint observation history); each
    key is computed exactly once.
    """
    policy.validate(model)
    dyn = model.dynamics
    n_jo = model.num_joint_observations
    value_next = None
    for t in range(model.horizon - 1, -1, -1):
        ja = _joint_actions(model, policy, t)  # (n_joh,)
        immediate = model.reward[:, ja].T  # (n_joh, S)
        if value_next is None:
            value = immediate
        else:
            # future[k, s] = sum_{s', o} D[s, ja_k, s', o] V_{t+1}[k * |JO| + o, s']
            nxt = value_next.reshape(ja.size, n_jo, model.num_states)
            future = np.einsum("ksyo,koy->ks", dyn[:, ja].transpose(1, 0, 2, 3), nxt)
            value = immediate + future
        value_next = value
    return float(model.initial_belief @ value_next[0])


def expected_stage_rewards(model: DecPomdp, policy: PartialJointPolicy) -> np.ndarray:
    """E[R(s^t, a^t)] for every specified stage, via forward propagation."""
    out = []
    for t in range(policy.stage):
        dist = propagate(model, policy.prefix(t))
        sizes = [model.num_observations[i] ** t for i in range(model.num_agents)]
        grid = np.indices(sizes).reshape(model.num_agents, -1)
        ja = np.zeros(grid.shape[1], np.int64)
        for i in range(model.num_agents):
            ja += policy.rules[i][t][grid[i]] * model.action_strides[i]
        out.append(float(np.sum(dist.probs * model.reward[:, ja].T)))
    return np.array(out)


def evaluate_flat(model: DecPomdp, policy: PureJointPolicy) -> float:
    """Sum over stages of Pr(theta) R(theta, pi(theta)) (independent of :func:`evaluate`)."""
    policy.validate(model)
    return float(expected_stage_rewards(model, policy).sum())


def stage_values(model: DecPomdp, policy: PureJointPolicy) -> np.ndarray:
    """``V^t(pi)``: expected reward collected from stage ``t`` onward."""
    r = expected_stage_rewards(model, policy)
    return np.cumsum(r[::-1])[::-1]


# ---------------------------------------------------------------------------
# brute force


@dataclass(frozen=True)
class BruteForceResult:
    policy: PureJointPolicy
    value: float
    count: int


def _sequence_form_weights(model: DecPomdp, space: HistorySpace, t: int):
    """Reward weights indexed by (others' AO-histories and actions) x
    (last agent's AO-history and action)."""
    n = model.num_agents
    last = n - 1
    ao = space.agent_ao_table(t)
    ja_tab = model.joint_action_table
    weights = space.expected_reward[t]  # (B^t, JA)
    n_ao = [
        (model.num_actions[i] * model.num_observations[i]) ** t for i in range(n)
    ]
    other_ao_flat = np.zeros(ao[0].size, np.int64)
    other_act_flat = np.zeros(model.num_joint_actions, np.int64)
    n_other_acts = 1
    for i in range(last):
        other_ao_flat = other_ao_flat * n_ao[i] + ao[i]
        other_act_flat = other_act_flat * model.num_actions[i] + ja_tab[:, i]
        n_other_acts *= model.num_actions[i]
    x = other_ao_flat[:, None] * n_other_acts + other_act_flat[None, :]
    y = ao[last][:, None] * model.num_actions[last] + ja_tab[None, :, last]
    n_x = int(np.prod(n_ao[:last])) * n_other_acts
    n_y = n_ao[last] * model.num_actions[last]
    W = np.zeros((n_x, n_y))
    W[x, y] = weights
    return W, n_other_acts


def _others_indices(model: DecPomdp, ranks: np.ndarray, horizon: int):
    """For a chunk of joint policies of agents ``0..n-2`` (given as per-agent
    rank arrays), yield per stage the sequence-form row index of every
    consistent (others' observation-history tuple)."""
    n = model.num_agents
    per_stage = [[] for _ in range(horizon)]
    for i in range(n - 1):
        n_a, n_o = model.num_actions[i], model.num_observations[i]
        n_hist = sum(n_o**t for t in range(horizon))
        digits = rank_digits(ranks[i], n_a, n_hist)
        ao = np.zeros((digits.shape[0], 1), np.int64)
        pos = 0
        for t in range(horizon):
            act = digits[:, pos : pos + n_o**t]
            pos += n_o**t
            per_stage[t].append((ao, act))
            ao = ((ao * (n_a * n_o) + act * n_o)[:, :, None] + np.arange(n_o)).reshape(
                ao.shape[0], -1
            )
    out = []
    for t in range(horizon):
        chunk = ranks[0].size if n > 1 else 1
        ao_flat = np.zeros((chunk, 1), np.int64)
        act_flat = np.zeros((chunk, 1), np.int64)
        for i, (ao, act) in enumerate(per_stage[t]):
            n_ao = (model.num_actions[i] * model.num_observations[i]) ** t
            ao_flat = (ao_flat[:, :, None] * n_ao + ao[:, None, :]).reshape(chunk, -1)
            act_flat = (
                act_flat[:, :, None] * model.num_actions[i] + act[:, None, :]
            ).reshape(chunk, -1)
        n_acts = int(np.prod(model.num_actions[: n - 1], dtype=np.int64))
        out.append(ao_flat * n_acts + act_flat)
    return out


def _best_response_tree(model: DecPomdp, ys: list[np.ndarray]):
    """Exact best response of the last agent, vectorised over a policy chunk.

    ``ys[t]`` has shape (chunk, N_t, A) with N_t the last agent's AO-history
    count.  Returns the values and the per-stage action choices.
    """
    last = model.num_agents - 1
    n_a = model.num_actions[last]
    n_o = model.num_observations[last]
    h = model.horizon
    best_next = None
    choices = [None] * h
    for t in range(h - 1, -1, -1):
        q = ys[t]
        if best_next is not None:
            q = q + best_next.reshape(q.shape[0], q.shape[1], n_a, n_o).sum(axis=3)
        top = q.max(axis=2)
        choices[t] = np.argmax(q >= top[:, :, None] - TIE_TOL, axis=2)
        best_next = np.take_along_axis(q, choices[t][:, :, None], axis=2)[:, :, 0]
    return best_next[:, 0], choices


def brute_force_solve(
    model: DecPomdp, cap: int = DEFAULT_POLICY_CAP, chunk: int = 4096
) -> BruteForceResult:
    """Optimal pure joint policy by exhaustive search.

    Joint policies of agents ``0..n-2`` are enumerated explicitly in canonical
    rank order; for each of them the last agent's optimal reply is computed
    exactly by dynamic programming over its AO-history tree, which covers all
    of its pure policies at once.  ``cap`` bounds the number of explicitly
    enumerated policies; the returned count is the total number of joint
    policies covered.
    """
    n, h = model.num_agents, model.horizon
    n_pol = [
        num_individual_policies(model.num_actions[i], model.num_observations[i], h)
        for i in range(n)
    ]
    n_enum = int(np.prod([float(x) for x in n_pol[: n - 1]])) if n > 1 else 1
    if n_enum > cap:
        raise CapExceeded(
            f"brute force needs {n_enum} explicit policy enumerations (cap {cap})"
        )
    total = 1
    for x in n_pol:
        total *= x
    space = HistorySpace(model)
    weights = [_sequence_form_weights(model, space, t)[0] for t in range(h)]
    last = n - 1
    n_a_last = model.num_actions[last]
    best_val, best_rank = -np.inf, -1
    for start in range(0, n_enum, chunk):
        flat = np.arange(start, min(start + chunk, n_enum), dtype=np.int64)
        ranks = (
            np.unravel_index(flat, n_pol[: n - 1]) if n > 1 else ()
        )
        rows = _others_indices(model, list(ranks), h)
        ys = [
            weights[t][rows[t]].sum(axis=1).reshape(flat.size, -1, n_a_last)
            for t in range(h)
        ]
        values, _ = _best_response_tree(model, ys)
        top = values.max()
        if top > best_val + TIE_TOL:
            best_val = float(top)
            best_rank = int(flat[np.argmax(values >= top - TIE_TOL)])
    # reconstruct
    ranks = (
        [np.array([r]) for r in np.unravel_index(best_rank, n_pol[: n - 1])]
        if n > 1
        else []
    )
    rows = _others_indices(model, ranks, h)
    ys = [
        weights[t][rows[t]].sum(axis=1).reshape(1, -1, n_a_last) for t in range(h)
    ]
    value, choices = _best_response_tree(model, ys)
    rules = []
    for i in range(n - 1):
        rules.append(
            individual_rules_from_rank(
                int(ranks[i][0]), model.num_actions[i], model.num_observations[i], h
            )
        )
    n_o = model.num_observations[last]
    last_rules = []
    ao = np.zeros(1, np.int64)
    for t in range(h):
        act = choices[t][0][ao]
        last_rules.append(act)
        ao = ((ao * (n_a_last * n_o) + act * n_o)[:, None] + np.arange(n_o)).reshape(-1)
    rules.append(tuple(last_rules))
    policy = PureJointPolicy(tuple(rules))
    return BruteForceResult(policy, float(value[0]), total)


# ---------------------------------------------------------------------------
# Monte-Carlo simulation


def simulate(
    model: DecPomdp,
    policy: PureJointPolicy,
    episodes: int,
    seed: int,
    batch: int = 1 << 17,
) -> tuple[float, float]:
    """Sample mean and standard error of the undiscounted return."""
    policy.validate(model)
    rng = np.random.default_rng(seed)
    n_s, n_jo = model.num_states, model.num_joint_observations
    cdf = np.cumsum(model.dynamics.reshape(n_s, model.num_joint_actions, -1), axis=2)
    cdf[..., -1] = 1.0
    b0_cdf = np.cumsum(model.initial_belief)
    b0_cdf[-1] = 1.0
    count, mean, m2 = 0, 0.0, 0.0
    while count < episodes:
        m = min(batch, episodes - count)
        state = np.searchsorted(b0_cdf, rng.random(m), side="right")
        obs_hist = [np.zeros(m, np.int64) for _ in range(model.num_agents)]
        ret = np.zeros(m)
        for t in range(model.horizon):
            ja = np.zeros(m, np.int64)
            for i in range(model.num_agents):
                ja += policy.rules[i][t][obs_hist[i]] * model.action_strides[i]
            ret += model.reward[state, ja]
            if t == model.horizon - 1:
                break
            u = rng.random(m)
            outcome = (cdf[state, ja] <= u[:, None]).sum(axis=1)
            state, jo = np.divmod(outcome, n_jo)
            for i in range(model.num_agents):
                comp = (jo // model.observation_strides[i]) % model.num_observations[i]
                obs_hist[i] = obs_hist[i] * model.num_observations[i] + comp
        # merge batch moments (Chan et al. parallel update)
        b_mean = ret.mean()
        b_m2 = float(np.square(ret - b_mean).sum())
        delta = b_mean - mean
        new_count = count + m
        mean += delta * m / new_count
        m2 += b_m2 + delta * delta * count * m / new_count
        count = new_count
    if episodes < 2:
        return float(mean), 0.0
    var = m2 / (episodes - 1)
    return float(mean), float(np.sqrt(var / episodes))
