"""Collaborative (identical-payoff) Bayesian games.

Payoffs are stored densely: ``payoff[k_0, ..., k_{n-1}, ja]`` for the joint
type ``(k_0, ..., k_{n-1})`` and flat joint action ``ja`` (agent 0 most
significant).  An individual BG policy of agent ``i`` maps each of its
``K_i`` types to an action; its rank is the base-``|A_i|`` number formed by
the actions with the first type most significant.  Joint BG policies are
ranked mixed-radix with agent 0 most significant.

All exact solvers score *every* joint BG policy with one-hot matrix
products, so the work is a handful of BLAS calls per chunk of agent-0
policies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .histories import HistorySpace, consistent_agent_histories, joint_consistent_indices
from .model import DecPomdp
from .policy import PartialJointPolicy, rank_digits

TIE_TOL = 1e-12
DEFAULT_BG_CAP = 10**9


class BgCapExceeded(RuntimeError):
    """Raised when the number of joint BG policies exceeds the cap."""


@dataclass(frozen=True, eq=False)
class BayesianGame:
    """Identical-payoff BG with dense joint-type probabilities and payoffs.

    ``type_labels[i][k]`` names type ``k`` of agent ``i`` (e.g. the agent's
    AO-history rank); joint types with probability zero are kept in the
    dense grid but never influence the objective.
    """

    num_actions: tuple[int, ...]
    prob: np.ndarray
    payoff: np.ndarray
    type_labels: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "num_actions", tuple(int(a) for a in self.num_actions))
        prob = np.asarray(self.prob, dtype=np.float64)
        payoff = np.asarray(self.payoff, dtype=np.float64)
        n = len(self.num_actions)
        if prob.ndim != n:
            raise ValueError("probability grid needs one axis per agent")
        if payoff.shape != prob.shape + (int(np.prod(self.num_actions)),):
            raise ValueError(
                f"payoff shape {payoff.shape} does not match types {prob.shape}"
                f" and {int(np.prod(self.num_actions))} joint actions"
            )
        if abs(prob.sum() - 1.0) > 1e-9 or np.any(prob < 0):
            raise ValueError("joint type probabilities must sum to 1")
        if np.any(np.isnan(payoff[prob > 0])) or np.any(np.isinf(payoff[prob > 0])):
            raise ValueError("payoff undefined for a joint type with positive probability")
        object.__setattr__(self, "prob", prob)
        object.__setattr__(self, "payoff", payoff)
        if not self.type_labels:
            object.__setattr__(
                self, "type_labels", tuple(np.arange(k) for k in prob.shape)
            )

    @property
    def num_agents(self) -> int:
        return len(self.num_actions)

    @property
    def num_types(self) -> tuple[int, ...]:
        return self.prob.shape

    def num_policies(self) -> int:
        out = 1
        for k, a in zip(self.num_types, self.num_actions):
            out *= a**k
        return out

    def weighted(self) -> np.ndarray:
        """Pr(theta) * u(theta, a), with zero for zero-probability types."""
        w = self.prob[..., None] * np.where(self.prob[..., None] > 0, self.payoff, 0.0)
        return w

    def objective(self, actions: Sequence[np.ndarray]) -> float:
        """Eq.-4 objective sum_theta Pr(theta) u(theta, beta(theta))."""
        return policy_objective(self.weighted(), self.num_types, self.num_actions, actions)


@dataclass(frozen=True, eq=False)
class BgPolicy:
    actions: tuple[np.ndarray, ...]
    value: float
    rank: int


# ---------------------------------------------------------------------------
# scoring primitives


def policy_objective(weighted, num_types, num_actions, actions) -> float:
    """Objective of one joint BG policy given the weighted payoff grid."""
    n = len(num_types)
    grids = np.indices(num_types)
    ja = np.zeros(num_types, np.int64)
    for i in range(n):
        stride = int(np.prod(num_actions[i + 1 :], dtype=np.int64))
        ja += np.asarray(actions[i])[grids[i]] * stride
    return float(np.take_along_axis(weighted, ja[..., None], axis=-1).sum())


def one_hot_policies(n_types: int, n_actions: int, ranks=None) -> np.ndarray:
    """Rows: individual BG policies (in rank order); columns: (type, action)."""
    total = n_actions**n_types
    ranks = np.arange(total, dtype=np.int64) if ranks is None else np.asarray(ranks)
    digits = rank_digits(ranks, n_actions, n_types)  # (P, K)
    E = np.zeros((ranks.size, n_types, n_actions))
    np.put_along_axis(E, digits[:, :, None], 1.0, axis=2)
    return E.reshape(ranks.size, n_types * n_actions)


def agent_major(weighted: np.ndarray, num_types, num_actions) -> np.ndarray:
    """Reorder ``(..., K_0..K_{n-1}, JA)`` to ``(..., K_0 A_0, ..., K_{n-1} A_{n-1})``."""
    n = len(num_types)
    lead = weighted.shape[: weighted.ndim - n - 1]
    w = weighted.reshape(lead + tuple(num_types) + tuple(num_actions))
    m = len(lead)
    order = list(range(m))
    for i in range(n):
        order += [m + i, m + n + i]
    w = w.transpose(order)
    return w.reshape(lead + tuple(k * a for k, a in zip(num_types, num_actions)))


def batched_policy_values(W: np.ndarray, num_types, num_actions) -> np.ndarray:
    """Values of all joint BG policies for a batch of games.

    ``W`` has shape ``(M, K_0 A_0, ..., K_{n-1} A_{n-1})``; the result has
    shape ``(M, P_0, ..., P_{n-1})``.
    """
    out = W
    for k, a in zip(num_types, num_actions):
        out = np.tensordot(out, one_hot_policies(k, a), axes=([1], [1]))
    return out


def iter_policy_values(
    W: np.ndarray, num_types, num_actions, block: int = 1 << 22
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(offset, values)`` with the flat values of consecutive joint
    BG policy ranks, chunked over agent 0's policies.

    ``W`` is the agent-major weighted payoff ``(K_0 A_0, ..., K_{n-1} A_{n-1})``.
    """
    n = len(num_types)
    rest = W[None]
    for i in range(1, n):
        rest = np.tensordot(
            rest, one_hot_policies(num_types[i], num_actions[i]), axes=([2], [1])
        )
    rest = rest[0]  # (K_0 A_0, P_1, ..., P_{n-1})
    n_rest = int(np.prod(rest.shape[1:], dtype=np.int64))
    flat = rest.reshape(rest.shape[0], n_rest)
    p0 = num_actions[0] ** num_types[0]
    step = max(1, block // n_rest)
    for start in range(0, p0, step):
        ranks = np.arange(start, min(start + step, p0), dtype=np.int64)
        E0 = one_hot_policies(num_types[0], num_actions[0], ranks)
        yield start * n_rest, (E0 @ flat).reshape(-1)


def _check_cap(num_types, num_actions, cap):
    total = 1
    for k, a in zip(num_types, num_actions):
        total *= a**k
    if total > cap:
        raise BgCapExceeded(f"BG has {total} joint policies (cap {cap})")
    return total


def argmax_policy(W, num_types, num_actions, cap=DEFAULT_BG_CAP) -> tuple[int, float]:
    """Lowest-rank maximiser of the agent-major weighted payoff ``W``.

    Agents ``0..n-2`` are enumerated jointly; for each of their policies the
    last agent's best response is computed type by type (its objective is
    separable over its own types), taking the lowest action on ties.  This
    is exact and makes ``cap`` apply to the enumerated prefix only.
    """
    n = len(num_types)
    k_last, a_last = num_types[-1], num_actions[-1]
    _check_cap(num_types[:-1], num_actions[:-1], cap)
    rest = W[None]
    for i in range(1, n - 1):
        rest = np.tensordot(
            rest, one_hot_policies(num_types[i], num_actions[i]), axes=([2], [1])
        )
    rest = np.moveaxis(rest[0], 1, -1) if n > 1 else rest  # (K0A0, P_1..P_{n-2}, KA_last)
    lead = rest.shape[0] if n > 1 else 1
    n_mid = int(np.prod(rest.shape[1:-1], dtype=np.int64)) if n > 1 else 1
    flat = rest.reshape(lead, n_mid * k_last * a_last)
    p0 = num_actions[0] ** num_types[0] if n > 1 else 1
    step = max(1, (1 << 22) // max(1, flat.shape[1]))
    powers = a_last ** np.arange(k_last - 1, -1, -1, dtype=np.int64)
    p_last = a_last**k_last
    best_val, best_rank = -np.inf, 0
    for start in range(0, p0, step):
        if n > 1:
            ranks = np.arange(start, min(start + step, p0), dtype=np.int64)
            E0 = one_hot_policies(num_types[0], num_actions[0], ranks)
            q = (E0 @ flat).reshape(-1, k_last, a_last)
        else:
            q = flat.reshape(1, k_last, a_last)
        qmax = q.max(axis=2)
        resp = np.argmax(q >= qmax[..., None] - TIE_TOL, axis=2)
        vals = qmax.sum(axis=1)
        top = vals.max()
        if top > best_val + TIE_TOL:
            idx = int(np.argmax(vals >= top - TIE_TOL))
            best_val = float(top)
            best_rank = (start * n_mid + idx) * p_last + int(resp[idx] @ powers)
    return best_rank, best_val


def top_k_policies(
    W, num_types, num_actions, k, cap=DEFAULT_BG_CAP
) -> tuple[np.ndarray, np.ndarray]:
    """The ``k`` best joint BG policies as (ranks, values), ordered by value
    (descending) and then rank (ascending)."""
    _check_cap(num_types, num_actions, cap)
    keep_r = np.zeros(0, np.int64)
    keep_v = np.zeros(0)
    for offset, vals in iter_policy_values(W, num_types, num_actions):
        ranks = offset + np.arange(vals.size, dtype=np.int64)
        if k < vals.size:
            thresh = np.partition(vals, vals.size - k)[vals.size - k]
            sel = vals >= thresh - TIE_TOL
            ranks, vals = ranks[sel], vals[sel]
        keep_r = np.concatenate([keep_r, ranks])
        keep_v = np.concatenate([keep_v, vals])
        keep_r, keep_v = _order(keep_r, keep_v)
        keep_r, keep_v = keep_r[:k], keep_v[:k]
    return keep_r, keep_v


def _order(ranks, values):
    order = np.lexsort((ranks, -np.round(values, 10)))
    return ranks[order], values[order]


def decode_joint_rank(rank: int, num_types, num_actions) -> tuple[np.ndarray, ...]:
    sizes = [a**k for k, a in zip(num_types, num_actions)]
    per_agent = np.unravel_index(rank, sizes)
    return tuple(
        rank_digits(np.array([r]), a, k)[0]
        for r, k, a in zip(per_agent, num_types, num_actions)
    )


def encode_joint_rank(actions, num_types, num_actions) -> int:
    rank = 0
    for acts, k, a in zip(actions, num_types, num_actions):
        r = 0
        for x in np.asarray(acts).reshape(-1):
            r = r * a + int(x)
        rank = rank * a**k + r
    return rank


# ---------------------------------------------------------------------------
# solvers


def solve_exhaustive(bg: BayesianGame, cap: int = DEFAULT_BG_CAP) -> BgPolicy:
    """Globally optimal joint BG policy (lowest rank among maximisers)."""
    W = agent_major(bg.weighted(), bg.num_types, bg.num_actions)
    rank, value = argmax_policy(W, bg.num_types, bg.num_actions, cap)
    actions = decode_joint_rank(rank, bg.num_types, bg.num_actions)
    return BgPolicy(actions, value, rank)


def _agent_gain(weighted, num_types, num_actions, actions, agent):
    """``g[k_i, a_i]``: objective contribution of agent ``agent`` choosing
    ``a_i`` at type ``k_i`` with the other agents' policies fixed."""
    n = len(num_types)
    w = weighted.reshape(tuple(num_types) + tuple(num_actions))
    # Fix the other agents' actions, highest agent first: type axes stay at
    # 0..n-1 and agent j's action axis stays at n + j until it is removed.
    for j in range(n - 1, -1, -1):
        if j == agent:
            continue
        shape = [1] * w.ndim
        shape[j] = num_types[j]
        idx = np.asarray(actions[j]).reshape(shape)
        w = np.squeeze(np.take_along_axis(w, idx, axis=n + j), axis=n + j)
    other_types = tuple(j for j in range(n) if j != agent)
    return w.sum(axis=other_types)


def solve_altmax(bg: BayesianGame, restarts: int = 10, seed: int = 0) -> BgPolicy:
    """Alternating maximisation from random starts; returns the best local
    optimum found (a Nash equilibrium of the identical-payoff game)."""
    rng = np.random.default_rng(seed)
    weighted = bg.weighted()
    best = None
    for _ in range(max(1, restarts)):
        actions = [rng.integers(0, a, size=k) for k, a in zip(bg.num_types, bg.num_actions)]
        value = policy_objective(weighted, bg.num_types, bg.num_actions, actions)
        while True:
            improved = False
            for i in range(bg.num_agents):
                gain = _agent_gain(weighted, bg.num_types, bg.num_actions, actions, i)
                current = gain[np.arange(bg.num_types[i]), actions[i]]
                top = gain.max(axis=1)
                better = top > current + TIE_TOL
                if np.any(better):
                    new = actions[i].copy()
                    new[better] = np.argmax(
                        gain[better] >= top[better, None] - TIE_TOL, axis=1
                    )
                    new_value = policy_objective(
                        weighted, bg.num_types, bg.num_actions,
                        actions[:i] + [new] + actions[i + 1 :],
                    )
                    if new_value > value + TIE_TOL:
                        actions[i] = new
                        value = new_value
                        improved = True
            if not improved:
                break
        rank = encode_joint_rank(actions, bg.num_types, bg.num_actions)
        if best is None or value > best.value + TIE_TOL or (
            abs(value - best.value) <= TIE_TOL and rank < best.rank
        ):
            best = BgPolicy(tuple(np.array(a) for a in actions), float(value), rank)
    return best


# ---------------------------------------------------------------------------
# construction from a Dec-POMDP stage


def build_bg(
    model: DecPomdp,
    phi: PartialJointPolicy,
    q,
    space: HistorySpace | None = None,
) -> BayesianGame:
    """The stage-``t`` BG induced by the past policy ``phi`` and Q-table ``q``.

    Types of agent ``i`` are its observation histories (equivalently its
    phi-consistent AO-histories, used as type labels); payoffs are the
    Q-table's stage-``t`` entries.
    """
    t = phi.stage
    if t >= model.horizon:
        raise ValueError("phi already specifies every stage")
    space = space or HistorySpace(model)
    parts = [
        consistent_agent_histories(model, i, phi.rules[i], t)
        for i in range(model.num_agents)
    ]
    grid = joint_consistent_indices([p.contribution for p in parts])
    probs = space.prob(t)[grid]
    total = probs.sum()
    try:
        payoff = q.values_at(t, grid)
    except (IndexError, KeyError) as exc:
        raise KeyError(f"Q-table lacks stage-{t} entries required by phi") from exc
    return BayesianGame(
        model.num_actions,
        probs / total,
        payoff,
        tuple(p.ao_index for p in parts),
    )
