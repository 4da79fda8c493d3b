"""The optimal Q-value function.

Two forms are provided:

* the *sequentially rational* ``Q*(theta^t, phi^{t+1})``, defined on joint
  AO-histories together with the past joint policy that generated them, and
  computable without knowing an optimal policy by a backward dynamic program
  over all pure past joint policies;
* the *normative* ``Q*(theta^t, a)`` of a given optimal policy ``pi*``.

The backward program stores, for every past joint policy ``phi^t``, the best
achievable value of stages ``t..h-1`` (probability weighted, summed over the
phi-consistent histories) and the maximising stage-``t`` joint decision rule.
``Q*`` entries for individual histories are reconstructed on demand by
following those maximising rules forward.

Past joint policies are keyed by their canonical per-agent ranks (see
:mod:`decpomdp.policy`); a stage-``t`` value table has one axis per agent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bgames import TIE_TOL, agent_major, batched_policy_values, one_hot_policies
from .evaluator import CapExceeded
from .heuristics import QTable
from .histories import HistorySpace, UndefinedBelief, consistent_agent_histories
from .model import DecPomdp
from .policy import (
    PartialJointPolicy,
    PureJointPolicy,
    num_individual_policies,
    rank_digits,
)

DEFAULT_WORK_CAP = 2 * 10**9
BLOCK = 1 << 22


def _num_rules(model: DecPomdp, t: int) -> tuple[int, ...]:
    return tuple(
        a ** (o**t) for a, o in zip(model.num_actions, model.num_observations)
    )


def _num_pasts(model: DecPomdp, t: int) -> tuple[int, ...]:
    return tuple(
        num_individual_policies(a, o, t)
        for a, o in zip(model.num_actions, model.num_observations)
    )


def predicted_work(model: DecPomdp) -> int:
    """Number of (past policy, candidate rule) scores the backward DP needs.

    At the last stage the final agent is resolved by a per-type best response
    and contributes ``K * A`` instead of its rule count.
    """
    h = model.horizon
    total = 0
    for t in range(h):
        pasts = int(np.prod(_num_pasts(model, t), dtype=object))
        rules = _num_rules(model, t)
        if t == h - 1:
            k_last = model.num_observations[-1] ** t
            per = int(np.prod(rules[:-1], dtype=object)) * k_last * model.num_actions[-1]
        else:
            per = int(np.prod(rules, dtype=object))
        total += pasts * per
    return total


def _agent_contribution_table(model: DecPomdp, agent: int, t: int) -> np.ndarray:
    """``C[r, k]``: joint-index contribution of agent ``agent``'s consistent
    AO-history with observation history ``k`` under its past policy of rank
    ``r`` (stages ``0..t-1``)."""
    n_jo = model.num_joint_observations
    base = model.num_joint_actions * n_jo
    n_a, n_o = model.num_actions[agent], model.num_observations[agent]
    sa, so = model.action_strides[agent], model.observation_strides[agent]
    table = np.zeros((1, 1), np.int64)
    obs = np.arange(n_o, dtype=np.int64) * so
    for tau in range(t):
        k = n_o**tau
        digits = rank_digits(np.arange(n_a**k), n_a, k)  # (rules, K)
        step = table[:, None, :] * base + digits[None, :, :] * (sa * n_jo)
        table = (step[..., None] + obs).reshape(table.shape[0] * digits.shape[0], -1)
    return table


def _gather(tables, ranks, payoff: np.ndarray) -> np.ndarray:
    """Payoff rows at the phi-consistent joint histories of a batch of past
    joint policies: ``(M, K_0, ..., K_{n-1}, JA)``."""
    n = len(tables)
    m = ranks[0].size
    grid = np.zeros((m,) + (1,) * n, np.int64)
    for i, (tab, r) in enumerate(zip(tables, ranks)):
        shape = [m] + [1] * n
        shape[1 + i] = tab.shape[1]
        grid = grid + tab[r].reshape(shape)
    return payoff[grid]


def _lowest_argmax(vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise maximum and lowest index within ``TIE_TOL`` of it."""
    top = vals.max(axis=1)
    idx = np.argmax(vals >= top[:, None] - TIE_TOL, axis=1)
    return idx, top


def _best_response_batch(W: np.ndarray, types, actions) -> tuple[np.ndarray, np.ndarray]:
    """Exact argmax of a batch of agent-major BGs ``(M, K_0A_0, ...)``.

    Agents ``0..n-2`` are enumerated; the last agent responds per type.
    """
    n = len(types)
    out = W
    for i in range(n - 1):
        out = np.tensordot(out, one_hot_policies(types[i], actions[i]), axes=([1], [1]))
    out = np.moveaxis(out, 1, -1)  # (M, P_0..P_{n-2}, K_last A_last)
    m = out.shape[0]
    k_last, a_last = types[-1], actions[-1]
    q = out.reshape(m, -1, k_last, a_last)
    qmax = q.max(axis=3)
    resp = np.argmax(q >= qmax[..., None] - TIE_TOL, axis=3)  # (M, P, K)
    prefix, top = _lowest_argmax(qmax.sum(axis=2))
    powers = a_last ** np.arange(k_last - 1, -1, -1, dtype=np.int64)
    resp_rank = resp[np.arange(m), prefix] @ powers
    return prefix * a_last**k_last + resp_rank, top


@dataclass(eq=False)
class SeqRationalQ:
    """Sequentially rational optimal values over all pure past joint policies.

    ``values[t]`` has one axis per agent (its stage-``t`` past-policy rank)
    and holds the best expected reward of stages ``t..h-1`` given the past
    joint policy; ``best_rule[t]`` holds the joint rank of the maximising
    stage-``t`` joint decision rule (agent 0 most significant, each agent's
    rule ranked with its first observation history most significant).
    """

    model: DecPomdp
    space: HistorySpace
    values: list[np.ndarray]
    best_rule: list[np.ndarray]

    @property
    def value(self) -> float:
        """Optimal value ``max_a Q*(empty history, a)``."""
        return float(self.values[0].reshape(-1)[0])

    # -- policy helpers ----------------------------------------------------

    def _ranks(self, phi: PartialJointPolicy) -> tuple[int, ...]:
        if phi.num_agents != self.model.num_agents:
            raise ValueError("policy agent count does not match model")
        phi.validate(self.model)
        return tuple(phi.agent_rank(self.model, i) for i in range(phi.num_agents))

    def decode_rule(self, t: int, joint_rank: int) -> tuple[np.ndarray, ...]:
        m = self.model
        sizes = _num_rules(m, t)
        per_agent = np.unravel_index(int(joint_rank), sizes)
        return tuple(
            rank_digits(np.array([r]), m.num_actions[i], m.num_observations[i] ** t)[0]
            for i, r in enumerate(per_agent)
        )

    def next_rule(self, phi: PartialJointPolicy) -> tuple[np.ndarray, ...]:
        """The maximising decision rule following past policy ``phi``."""
        t = phi.stage
        if t >= self.model.horizon:
            raise ValueError("phi already covers the horizon")
        return self.decode_rule(t, int(self.best_rule[t][self._ranks(phi)]))

    def continuation(self, phi: PartialJointPolicy) -> PureJointPolicy:
        """Complete ``phi`` with the maximising rules of every later stage."""
        while phi.stage < self.model.horizon:
            phi = phi.extend(self.next_rule(phi))
        return PureJointPolicy.from_partial(phi)

    def future_value(self, phi: PartialJointPolicy) -> float:
        """Best expected reward of stages ``t..h-1`` after past policy ``phi^t``."""
        if phi.stage == self.model.horizon:
            return 0.0
        return float(self.values[phi.stage][self._ranks(phi)])

    # -- Q*(theta, phi) ----------------------------------------------------

    def q_values(self, phi_next: PartialJointPolicy) -> tuple[np.ndarray, np.ndarray]:
        """``Q*(theta^t, phi^{t+1})`` for every phi-consistent ``theta^t``.

        Returns ``(thetas, q)``: the consistent joint-history indices as an
        agent-indexed grid (observation-history ranks) and the values, ``nan``
        where the history has zero probability.
        """
        m, space = self.model, self.space
        t = phi_next.stage - 1
        if t < 0:
            raise ValueError("phi_next must specify at least one stage")
        pi = self.continuation(phi_next)
        root = [consistent_agent_histories(m, i, pi.rules[i], t) for i in range(m.num_agents)]
        thetas = _grid([h.contribution for h in root])
        weighted = np.zeros(thetas.shape)
        for tau in range(t, m.horizon):
            parts = [consistent_agent_histories(m, i, pi.rules[i], tau) for i in range(m.num_agents)]
            grid = _grid([h.contribution for h in parts])
            ja = _grid([
                pi.rules[i][tau] * m.action_strides[i] for i in range(m.num_agents)
            ])
            r = np.take_along_axis(
                space.expected_reward[tau][grid.reshape(-1)], ja.reshape(-1, 1), axis=1
            )[:, 0].reshape(grid.shape)
            # fold descendants onto their stage-t ancestor: each agent's
            # observation-history axis groups by its leading t observations
            shape = []
            for i in range(m.num_agents):
                n_o = m.num_observations[i]
                shape += [n_o**t, n_o ** (tau - t)]
            folded = r.reshape(shape).sum(axis=tuple(range(1, 2 * m.num_agents, 2)))
            weighted += folded
        prob = space.prob(t)[thetas]
        with np.errstate(invalid="ignore", divide="ignore"):
            q = np.where(prob > 0, weighted / np.where(prob > 0, prob, 1.0), np.nan)
        return thetas, q

    def q(self, theta: int, phi_next: PartialJointPolicy) -> float:
        """``Q*(theta^t, phi^{t+1})`` for one joint AO-history."""
        thetas, q = self.q_values(phi_next)
        hit = np.nonzero(thetas.reshape(-1) == theta)[0]
        if hit.size == 0:
            raise ValueError("history is not consistent with the past policy")
        val = q.reshape(-1)[hit[0]]
        if np.isnan(val):
            raise UndefinedBelief("history has zero probability")
        return float(val)

    def root_q(self) -> np.ndarray:
        """``Q*(empty history, a)`` for every joint action ``a``."""
        m = self.model
        out = np.empty(m.num_joint_actions)
        for ja in range(m.num_joint_actions):
            comps = m.action_components(ja)
            phi = PartialJointPolicy(tuple((np.array([a]),) for a in comps))
            out[ja] = float(m.initial_belief @ m.reward[:, ja]) + self.future_value(phi)
        return out


def _grid(parts) -> np.ndarray:
    n = len(parts)
    out = np.zeros((1,) * n, np.int64)
    for i, c in enumerate(parts):
        shape = [1] * n
        shape[i] = np.asarray(c).size
        out = out + np.asarray(c).reshape(shape)
    return out


def _stage_scores(model, space, tables, t, ranks, next_values) -> np.ndarray:
    """Scores of all stage-``t`` joint decision rules for a batch of past
    policies: immediate weighted reward plus the best future value."""
    types = tuple(o**t for o in model.num_observations)
    payoff = _gather(tables, ranks, space.expected_reward[t])
    W = agent_major(payoff, types, model.num_actions)
    vals = batched_policy_values(W, types, model.num_actions)
    if next_values is not None:
        vals = vals + next_values[ranks]
    return vals


def _split_next(model: DecPomdp, t: int, values_next: np.ndarray) -> np.ndarray:
    """Reshape a stage-``t+1`` value table to ``(P^t..., rules^t...)``."""
    pasts, rules = _num_pasts(model, t), _num_rules(model, t)
    n = model.num_agents
    v = values_next.reshape(tuple(x for pr in zip(pasts, rules) for x in pr))
    return v.transpose(list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2)))


def qstar_sequential(
    model: DecPomdp,
    space: HistorySpace | None = None,
    work_cap: int = DEFAULT_WORK_CAP,
) -> SeqRationalQ:
    """Backward dynamic programming over all pure past joint policies."""
    space = space or HistorySpace(model)
    work = predicted_work(model)
    if work > work_cap:
        table = sum(
            int(np.prod(_num_pasts(model, t), dtype=object)) for t in range(model.horizon)
        )
        raise CapExceeded(
            f"Q* needs about {work} rule evaluations over {table} past joint "
            f"policies (cap {work_cap})"
        )
    h, n = model.horizon, model.num_agents
    values: list[np.ndarray] = [None] * h
    best: list[np.ndarray] = [None] * h
    for t in range(h - 1, -1, -1):
        pasts = _num_pasts(model, t)
        types = tuple(o**t for o in model.num_observations)
        tables = [_agent_contribution_table(model, i, t) for i in range(n)]
        total = int(np.prod(pasts, dtype=np.int64))
        v_t = np.empty(total)
        b_t = np.empty(total, np.int64)
        if t == h - 1:
            per = int(np.prod(_num_rules(model, t)[:-1], dtype=np.int64)) * types[-1] * model.num_actions[-1]
            nxt = None
        else:
            per = int(np.prod(_num_rules(model, t), dtype=np.int64))
            nxt = _split_next(model, t, values[t + 1])
        step = max(1, BLOCK // max(per, 1))
        for start in range(0, total, step):
            flat = np.arange(start, min(start + step, total), dtype=np.int64)
            ranks = np.unravel_index(flat, pasts)
            if nxt is None:
                payoff = _gather(tables, ranks, space.expected_reward[t])
                W = agent_major(payoff, types, model.num_actions)
                idx, top = _best_response_batch(W, types, model.num_actions)
            else:
                vals = _stage_scores(model, space, tables, t, ranks, nxt)
                idx, top = _lowest_argmax(vals.reshape(flat.size, -1))
            v_t[flat], b_t[flat] = top, idx
        values[t] = v_t.reshape(pasts)
        best[t] = b_t.reshape(pasts)
    return SeqRationalQ(model, space, values, best)


def extract_policy(model: DecPomdp, q: SeqRationalQ) -> PureJointPolicy:
    """Forward sweep: follow the maximising decision rule from the empty past."""
    return q.continuation(PartialJointPolicy.empty(model.num_agents))


def replan_after_deviation(
    model: DecPomdp,
    q: SeqRationalQ,
    phi_next: PartialJointPolicy,
    agent: int,
    others=None,
) -> np.ndarray:
    """Agent ``agent``'s best stage-``t+1`` decision rule after the executed
    past policy ``phi^{t+1}``, holding the other agents' rules fixed.

    ``others`` defaults to the other agents' parts of the maximising joint
    rule for ``phi^{t+1}``.
    """
    s = phi_next.stage
    if s >= model.horizon:
        raise ValueError("no decision remains after a full policy")
    if not 0 <= agent < model.num_agents:
        raise ValueError("agent index out of range")
    ranks = q._ranks(phi_next)
    tables = [_agent_contribution_table(model, i, s) for i in range(model.num_agents)]
    nxt = _split_next(model, s, q.values[s + 1]) if s + 1 < model.horizon else None
    vals = _stage_scores(
        model, q.space, tables, s, tuple(np.array([r]) for r in ranks), nxt
    )[0]
    if others is None:
        others = q.next_rule(phi_next)
    index = []
    for i in range(model.num_agents):
        if i == agent:
            index.append(slice(None))
        else:
            digits = np.asarray(others[i]).reshape(-1)
            r = 0
            for d in digits:
                r = r * model.num_actions[i] + int(d)
            index.append(r)
    row = vals[tuple(index)]
    best = int(np.argmax(row >= row.max() - TIE_TOL))
    return rank_digits(
        np.array([best]), model.num_actions[agent], model.num_observations[agent] ** s
    )[0]


class NormativeQ(QTable):
    """``Q*(theta, a)`` of a fixed optimal policy.

    Entries are computed for every joint history (continuing with ``pi*``
    after it); :meth:`consistent` marks the histories consistent with
    ``pi*``, the table's intended domain.
    """

    def __init__(self, space: HistorySpace, weighted, consistent, policy):
        super().__init__("qstar-normative", space, weighted)
        self._consistent = consistent
        self.policy = policy

    def consistent(self, t: int) -> np.ndarray:
        return self._consistent[t]

    def values(self, t: int) -> np.ndarray:
        q = super().values(t)
        q[~self._consistent[t]] = -np.inf
        return q


def _policy_joint_actions(model: DecPomdp, space: HistorySpace, pi, t: int) -> np.ndarray:
    """Joint action ``pi`` takes at every stage-``t`` joint history."""
    obs = space.agent_obs_table(t)
    ja = np.zeros(space.num_joint(t), np.int64)
    for i in range(model.num_agents):
        ja += np.asarray(pi.rules[i][t])[obs[i]] * model.action_strides[i]
    return ja


def qstar_normative(
    model: DecPomdp, policy: PureJointPolicy, space: HistorySpace | None = None
) -> NormativeQ:
    """Q-values of ``policy`` (assumed optimal) over joint histories."""
    policy.validate(model)
    space = space or HistorySpace(model)
    h, n_ja, n_jo = model.horizon, model.num_joint_actions, model.num_joint_observations
    weighted = [None] * h
    nxt_v = None
    for t in range(h - 1, -1, -1):
        u = space.expected_reward[t].copy()
        if nxt_v is not None:
            u += nxt_v.reshape(-1, n_ja, n_jo).sum(axis=2)
        weighted[t] = u
        ja = _policy_joint_actions(model, space, policy, t)
        nxt_v = u[np.arange(u.shape[0]), ja]
    consistent = []
    for t in range(h):
        mask = np.ones(space.num_joint(t), bool)
        ao = space.agent_ao_table(t)
        for i in range(model.num_agents):
            hist = consistent_agent_histories(model, i, policy.rules[i], t)
            ok = np.zeros(space.num_agent_ao(i, t), bool)
            ok[hist.ao_index] = True
            mask &= ok[ao[i]]
        consistent.append(mask)
    return NormativeQ(space, weighted, consistent, policy)
