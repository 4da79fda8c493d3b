"""Histories: integer indexing, consistency filtering and probability propagation.

Indexing conventions (all ranks are lexicographic, earliest stage most
significant):

* agent ``i`` observation history of length ``t``: base ``|O_i|`` number;
* agent ``i`` action-observation (AO) history: base ``|A_i||O_i|`` number whose
  step symbol is ``a * |O_i| + o``;
* joint AO-history: base ``B = |JA| * |JO|`` number whose step symbol is
  ``ja * |JO| + jo``.

Because the joint action/observation encodings are mixed radix, a joint
AO-history index is the *sum* of per-agent contributions.  This lets the
indices of all joint histories consistent with a pure partial policy be
formed by broadcasting.

Forward tables ``alpha[t][theta, s] = Pr(s^t = s, o-sequence | a-sequence)``
carry the unnormalised joint state/history mass; ``alpha.sum(1)`` is the
probability of the history under any policy consistent with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import DecPomdp
from .policy import PartialJointPolicy, rank_digits

JOINT = -1


class UndefinedBelief(ValueError):
    """Raised when conditioning on a history of probability zero."""


@dataclass(frozen=True)
class HistoryIndex:
    """A history identified by owner (agent index or ``JOINT``), stage and rank."""

    agent: int
    stage: int
    index: int


def encode_sequence(symbols, base: int) -> int:
    idx = 0
    for s in symbols:
        if not 0 <= s < base:
            raise ValueError(f"symbol {s} out of range for base {base}")
        idx = idx * base + int(s)
    return idx


def decode_sequence(index: int, base: int, length: int) -> list[int]:
    if not 0 <= index < base**length:
        raise ValueError(f"history index {index} out of range")
    out = []
    for _ in range(length):
        index, r = divmod(index, base)
        out.append(r)
    return out[::-1]


class HistorySpace:
    """Index arithmetic and stage-wise tables for one problem."""

    def __init__(self, model: DecPomdp):
        self.model = model
        self.n_ja = model.num_joint_actions
        self.n_jo = model.num_joint_observations
        self.base = self.n_ja * self.n_jo
        self._alpha = [model.initial_belief[None, :].copy()]
        self._agent_obs = [[np.zeros(1, np.int64) for _ in range(model.num_agents)]]
        self._agent_ao = [[np.zeros(1, np.int64) for _ in range(model.num_agents)]]

    # counting ------------------------------------------------------------

    def num_joint(self, t: int) -> int:
        return self.base**t

    def num_agent_obs(self, agent: int, t: int) -> int:
        return self.model.num_observations[agent] ** t

    def num_agent_ao(self, agent: int, t: int) -> int:
        m = self.model
        return (m.num_actions[agent] * m.num_observations[agent]) ** t

    # joint index arithmetic ----------------------------------------------

    def successor(self, theta: int, t: int, ja: int, jo: int) -> int:
        if t >= self.model.horizon - 1:
            raise ValueError(
                f"cannot extend a stage-{t} history beyond horizon {self.model.horizon}"
            )
        if not (0 <= ja < self.n_ja and 0 <= jo < self.n_jo):
            raise ValueError("joint action/observation out of range")
        return theta * self.base + ja * self.n_jo + jo

    def decompose(self, theta: int, t: int) -> tuple[int, int, int]:
        """Inverse of :meth:`successor`: ``(prefix, ja, jo)``."""
        if t < 1:
            raise ValueError("the empty history has no last step")
        prev, sym = divmod(theta, self.base)
        ja, jo = divmod(sym, self.n_jo)
        return prev, ja, jo

    def joint_symbols(self, theta: int, t: int) -> list[tuple[int, int]]:
        return [divmod(s, self.n_jo) for s in decode_sequence(theta, self.base, t)]

    def joint_index(self, steps) -> int:
        return encode_sequence([ja * self.n_jo + jo for ja, jo in steps], self.base)

    def agent_obs_history(self, theta: int, t: int, agent: int) -> int:
        m = self.model
        obs = [m.observation_components(jo)[agent] for _, jo in self.joint_symbols(theta, t)]
        return encode_sequence(obs, m.num_observations[agent])

    def agent_ao_history(self, theta: int, t: int, agent: int) -> int:
        m = self.model
        n_o = m.num_observations[agent]
        syms = [
            m.action_components(ja)[agent] * n_o + m.observation_components(jo)[agent]
            for ja, jo in self.joint_symbols(theta, t)
        ]
        return encode_sequence(syms, m.num_actions[agent] * n_o)

    def agent_contribution(self, agent: int, steps) -> int:
        """Contribution of agent-local steps ``[(a_i, o_i), ...]`` to a joint index."""
        m = self.model
        sa, so = m.action_strides[agent], m.observation_strides[agent]
        return encode_sequence(
            [a * sa * self.n_jo + o * so for a, o in steps], self.base
        )

    # stage tables --------------------------------------------------------

    def alpha(self, t: int) -> np.ndarray:
        """``alpha[theta, s]`` for every joint AO-history of stage ``t``."""
        if t > self.model.horizon:
            raise ValueError(f"stage {t} exceeds horizon {self.model.horizon}")
        dyn = self.model.dynamics  # (S, JA, S', JO)
        while len(self._alpha) <= t:
            prev = self._alpha[-1]
            nxt = np.einsum("ns,sayo->naoy", prev, dyn, optimize=True)
            self._alpha.append(nxt.reshape(-1, self.model.num_states))
        return self._alpha[t]

    def prob(self, t: int) -> np.ndarray:
        """Probability of each stage-``t`` joint AO-history given its actions."""
        return self.alpha(t).sum(axis=1)

    def _grow_agent_tables(self, t: int):
        m = self.model
        jo_comp = m.joint_observation_table
        ja_comp = m.joint_action_table
        while len(self._agent_obs) <= t:
            obs_prev, ao_prev = self._agent_obs[-1], self._agent_ao[-1]
            obs_new, ao_new = [], []
            for i in range(m.num_agents):
                n_o = m.num_observations[i]
                n_ao = m.num_actions[i] * n_o
                o_i = jo_comp[:, i]
                a_i = ja_comp[:, i]
                obs_new.append(
                    np.broadcast_to(
                        obs_prev[i][:, None, None] * n_o + o_i[None, None, :],
                        (obs_prev[i].size, self.n_ja, self.n_jo),
                    ).reshape(-1)
                )
                ao_new.append(
                    (
                        ao_prev[i][:, None, None] * n_ao
                        + a_i[None, :, None] * n_o
                        + o_i[None, None, :]
                    ).reshape(-1)
                )
            self._agent_obs.append(obs_new)
            self._agent_ao.append(ao_new)

    def agent_obs_table(self, t: int) -> list[np.ndarray]:
        """Per agent, its observation-history rank for every joint history."""
        self._grow_agent_tables(t)
        return self._agent_obs[t]

    def agent_ao_table(self, t: int) -> list[np.ndarray]:
        """Per agent, its AO-history rank for every joint history."""
        self._grow_agent_tables(t)
        return self._agent_ao[t]

    @cached_property
    def expected_reward(self) -> list[np.ndarray]:
        """Weighted immediate reward ``alpha_t @ R`` for all stages."""
        return [self.alpha(t) @ self.model.reward for t in range(self.model.horizon)]


# ---------------------------------------------------------------------------
# consistency with pure partial policies


@dataclass(frozen=True)
class AgentHistories:
    """Agent ``i``'s histories at stage ``t`` consistent with its past rules.

    Entries are indexed by the agent's observation-history rank ``k``:
    ``contribution[k]`` is the share of the joint AO-history index and
    ``ao_index[k]`` the agent's own AO-history rank.
    """

    contribution: np.ndarray
    ao_index: np.ndarray


def consistent_agent_histories(
    model: DecPomdp, agent: int, rules, t: int | None = None
) -> AgentHistories:
    t = len(rules) if t is None else t
    n_ja, n_jo = model.num_joint_actions, model.num_joint_observations
    base = n_ja * n_jo
    n_o = model.num_observations[agent]
    n_ao = model.num_actions[agent] * n_o
    sa = model.action_strides[agent]
    so = model.observation_strides[agent]
    contrib = np.zeros(1, np.int64)
    ao = np.zeros(1, np.int64)
    obs = np.arange(n_o, dtype=np.int64)
    for tau in range(t):
        act = np.asarray(rules[tau], dtype=np.int64)
        contrib = (
            (contrib * base + act * sa * n_jo)[:, None] + obs[None, :] * so
        ).reshape(-1)
        ao = ((ao * n_ao + act * n_o)[:, None] + obs[None, :]).reshape(-1)
    return AgentHistories(contrib, ao)


def joint_consistent_indices(parts: list[np.ndarray]) -> np.ndarray:
    """Broadcast-sum per-agent contributions into an n-dimensional index grid."""
    n = len(parts)
    out = np.zeros((1,) * n, np.int64)
    for i, c in enumerate(parts):
        shape = [1] * n
        shape[i] = c.size
        out = out + c.reshape(shape)
    return out


def is_consistent(
    model: DecPomdp, agent: int, ao_history: int, t: int, rules
) -> bool:
    """Whether agent ``agent``'s AO-history matches its pure policy ``rules``."""
    n_o = model.num_observations[agent]
    syms = decode_sequence(ao_history, model.num_actions[agent] * n_o, t)
    obs_hist = 0
    for tau, sym in enumerate(syms):
        a, o = divmod(sym, n_o)
        if int(rules[tau][obs_hist]) != a:
            return False
        obs_hist = obs_hist * n_o + o
    return True


# ---------------------------------------------------------------------------
# propagation


@dataclass(frozen=True)
class StageDistribution:
    """Joint distribution over (state, joint AO-history) at one stage.

    ``histories`` has one entry per joint type, i.e. per tuple of agent
    observation histories (mixed radix, agent 0 most significant);
    ``probs[k, s]`` is Pr(s, histories[k]).
    """

    stage: int
    histories: np.ndarray
    probs: np.ndarray

    @property
    def history_probs(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def as_dict(self) -> dict[tuple[int, int], float]:
        out = {}
        for k, theta in enumerate(self.histories):
            for s, p in enumerate(self.probs[k]):
                if p > 0.0:
                    out[(s, int(theta))] = float(p)
        return out


def propagate(
    model: DecPomdp, phi: PartialJointPolicy, b0: np.ndarray | None = None
) -> StageDistribution:
    """Forward propagation of Pr(s^t, theta^t) under the pure partial policy phi."""
    t = phi.stage
    if t > model.horizon:
        raise ValueError(f"stage {t} exceeds horizon {model.horizon}")
    b0 = model.initial_belief if b0 is None else np.asarray(b0, dtype=np.float64)
    n = model.num_agents
    n_jo = model.num_joint_observations
    n_obs = model.num_observations
    dyn = model.dynamics
    probs = b0[None, :].copy()
    jo_comp = model.joint_observation_table
    for tau in range(t):
        sizes = tuple(n_obs[i] ** tau for i in range(n))
        grid = np.indices(sizes).reshape(n, -1)
        acts = np.stack([phi.rules[i][tau][grid[i]] for i in range(n)])
        ja = np.ravel_multi_index(acts, model.num_actions)
        # (K, S', JO)
        nxt = np.einsum("ks,ksyo->kyo", probs, dyn[:, ja].transpose(1, 0, 2, 3))
        new_grid = [
            grid[i][:, None] * n_obs[i] + jo_comp[None, :, i] for i in range(n)
        ]
        new_sizes = tuple(s * o for s, o in zip(sizes, n_obs))
        flat = np.ravel_multi_index(new_grid, new_sizes).reshape(-1)
        out = np.zeros((int(np.prod(new_sizes)), model.num_states))
        out[flat] = nxt.transpose(0, 2, 1).reshape(-1, model.num_states)
        probs = out
    parts = [
        consistent_agent_histories(model, i, phi.rules[i], t).contribution
        for i in range(n)
    ]
    histories = joint_consistent_indices(parts).reshape(-1)
    return StageDistribution(t, histories, probs)


def joint_belief(
    model: DecPomdp, theta: int, t: int, b0: np.ndarray | None = None
) -> np.ndarray:
    """Pr(s | theta) by successive Bayes updates along the history."""
    b = model.initial_belief if b0 is None else np.asarray(b0, dtype=np.float64)
    space_base = model.num_joint_actions * model.num_joint_observations
    for sym in decode_sequence(theta, space_base, t):
        ja, jo = divmod(sym, model.num_joint_observations)
        unnorm = (b @ model.transition[:, ja, :]) * model.observation[ja, :, jo]
        total = unnorm.sum()
        if total <= 0.0:
            raise UndefinedBelief(
                f"history {theta} at stage {t} has probability zero"
            )
        b = unnorm / total
    return b


def enumerate_obs_histories(n_obs: int, t: int) -> np.ndarray:
    """All length-``t`` observation histories as rows, in rank order."""
    return rank_digits(np.arange(n_obs**t), n_obs, t)
