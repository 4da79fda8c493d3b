"""Slow, independent reference implementations used as test oracles.

Everything here works on plain Python tuples and dictionaries, walking the
problem explicitly rather than through the package's index arithmetic.
"""

import itertools

import numpy as np


def joint_comps(sizes):
    return list(itertools.product(*[range(n) for n in sizes]))


def ja_index(model, comps):
    idx = 0
    for c, n in zip(comps, model.num_actions):
        idx = idx * n + c
    return idx


def jo_index(model, comps):
    idx = 0
    for c, n in zip(comps, model.num_observations):
        idx = idx * n + c
    return idx


def obs_rank(obs, n_o):
    r = 0
    for o in obs:
        r = r * n_o + o
    return r


def naive_value(model, policy):
    """Recursive expected return over (state, per-agent observation tuples)."""
    n = model.num_agents
    jos = joint_comps(model.num_observations)

    def rec(t, s, hists):
        acts = tuple(
            int(policy.rules[i][t][obs_rank(hists[i], model.num_observations[i])])
            for i in range(n)
        )
        ja = ja_index(model, acts)
        v = model.reward[s, ja]
        if t == model.horizon - 1:
            return v
        for s2 in range(model.num_states):
            pt = model.transition[s, ja, s2]
            if pt == 0:
                continue
            for jo in jos:
                po = model.observation[ja, s2, jo_index(model, jo)]
                if po == 0:
                    continue
                nh = tuple(hists[i] + (jo[i],) for i in range(n))
                v += pt * po * rec(t + 1, s2, nh)
        return v

    empty = tuple(() for _ in range(n))
    return sum(
        model.initial_belief[s] * rec(0, s, empty)
        for s in range(model.num_states)
        if model.initial_belief[s] > 0
    )


def all_policies(model):
    """Every pure joint policy, in canonical joint-rank order."""
    from decpomdp.policy import num_individual_policies, policy_from_ranks

    counts = [
        num_individual_policies(model.num_actions[i], model.num_observations[i], model.horizon)
        for i in range(model.num_agents)
    ]
    for ranks in itertools.product(*[range(c) for c in counts]):
        yield ranks, policy_from_ranks(model, ranks)


def naive_optimum(model):
    best, best_ranks = -np.inf, None
    for ranks, pol in all_policies(model):
        v = naive_value(model, pol)
        if v > best + 1e-12:
            best, best_ranks = v, ranks
    return best, best_ranks


# --- Q functions over explicit joint histories ------------------------------


def _update(model, b, ja, jo):
    unnorm = (b @ model.transition[:, ja, :]) * model.observation[ja, :, jo]
    p = unnorm.sum()
    return p, (unnorm / p if p > 0 else None)


def naive_qmdp(model):
    """Q_MDP[t][s, ja] of the underlying MDP."""
    h = model.horizon
    q = [None] * h
    v_next = np.zeros(model.num_states)
    for t in range(h - 1, -1, -1):
        q[t] = model.reward + np.einsum("sat,t->sa", model.transition, v_next)
        v_next = q[t].max(axis=1)
    return q


def naive_qpomdp_belief(model, b, t):
    """Q_POMDP(b, ja) at stage t for every joint action."""
    out = np.zeros(model.num_joint_actions)
    for ja in range(model.num_joint_actions):
        v = b @ model.reward[:, ja]
        if t < model.horizon - 1:
            for jo in range(model.num_joint_observations):
                p, b2 = _update(model, b, ja, jo)
                if p > 0:
                    v += p * naive_qpomdp_belief(model, b2, t + 1).max()
        out[ja] = v
    return out


def naive_qbg_belief(model, b, t, hist=None):
    """Q_BG(theta, ja): one-step delayed communication backup by explicit BG enumeration.

    ``hist`` is irrelevant for the value (the belief is sufficient) but kept
    for readability of failures.
    """
    n = model.num_agents
    out = np.zeros(model.num_joint_actions)
    for ja in range(model.num_joint_actions):
        v = b @ model.reward[:, ja]
        if t < model.horizon - 1:
            # types: per-agent observation; payoff: next-stage Q_BG
            jos = joint_comps(model.num_observations)
            probs, payoffs = {}, {}
            for jo in jos:
                p, b2 = _update(model, b, ja, jo_index(model, jo))
                probs[jo] = p
                payoffs[jo] = naive_qbg_belief(model, b2, t + 1) if p > 0 else None
            best = -np.inf
            rules_per_agent = [
                list(itertools.product(range(model.num_actions[i]), repeat=model.num_observations[i]))
                for i in range(n)
            ]
            for rules in itertools.product(*rules_per_agent):
                val = 0.0
                for jo in jos:
                    if probs[jo] > 0:
                        acts = tuple(rules[i][jo[i]] for i in range(n))
                        val += probs[jo] * payoffs[jo][ja_index(model, acts)]
                best = max(best, val)
            v += best
        out[ja] = v
    return out
