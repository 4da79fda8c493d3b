"""Approximate Q-value functions over joint action-observation histories.

Tables are stored *probability weighted*: ``weighted[t][theta, a]`` equals
``Pr(theta) * Q(theta, a)``, where ``Pr(theta)`` is the probability of the
history's observations given its actions.  Weighted entries need no
division and vanish on zero-probability histories, which is exactly what
the Bayesian-game objective requires.  The unweighted view returns
``-inf`` on zero-probability histories (their belief is undefined).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bgames import agent_major, batched_policy_values
from .histories import HistorySpace
from .model import DecPomdp

BLOCK = 1 << 22


@dataclass(frozen=True, eq=False)
class MdpQTable:
    """``values[t][s, a]``: optimal finite-horizon Q-values of the underlying MDP."""

    values: tuple[np.ndarray, ...]


class QTable:
    """Stage-indexed Q-values over (joint AO-history, joint action)."""

    def __init__(self, label: str, space: HistorySpace, weighted: list[np.ndarray]):
        self.label = label
        self.space = space
        self.model = space.model
        self.weighted = weighted

    @property
    def horizon(self) -> int:
        return len(self.weighted)

    def weighted_at(self, t: int, theta) -> np.ndarray:
        return self.weighted[t][theta]

    def values(self, t: int) -> np.ndarray:
        prob = self.space.prob(t)
        with np.errstate(invalid="ignore", divide="ignore"):
            q = self.weighted[t] / prob[:, None]
        q[prob <= 0.0] = -np.inf
        return q

    def values_at(self, t: int, theta) -> np.ndarray:
        theta = np.asarray(theta)
        prob = self.space.prob(t)[theta]
        with np.errstate(invalid="ignore", divide="ignore"):
            q = self.weighted_at(t, theta) / prob[..., None]
        return np.where(prob[..., None] > 0.0, q, -np.inf)

    def export(self) -> str:
        """Tabular text: stage, history symbols, joint action, value."""
        m = self.model
        lines = ["# stage\thistory\tjoint_action\tvalue"]
        for t in range(self.horizon):
            q = self.values(t)
            for theta in range(q.shape[0]):
                if not np.isfinite(q[theta, 0]):
                    continue
                steps = [
                    f"({m.joint_action_name(ja)}|{m.joint_observation_name(jo)})"
                    for ja, jo in self.space.joint_symbols(theta, t)
                ]
                hist = ",".join(steps) or "-"
                for ja in range(m.num_joint_actions):
                    lines.append(f"{t}\t{hist}\t{m.joint_action_name(ja)}\t{float(q[theta, ja])!r}")
        return "\n".join(lines) + "\n"


class LazyQmdp(QTable):
    """Q_MDP evaluated only at requested histories (forward-sweep mode)."""

    def __init__(self, space: HistorySpace, mdp: MdpQTable):
        super().__init__("qmdp", space, [])
        self.mdp = mdp

    @property
    def horizon(self) -> int:
        return self.model.horizon

    def weighted_at(self, t: int, theta) -> np.ndarray:
        return self.space.alpha(t)[theta] @ self.mdp.values[t]

    def values(self, t: int) -> np.ndarray:
        return self.values_at(t, np.arange(self.space.num_joint(t)))


def solve_underlying_mdp(model: DecPomdp) -> MdpQTable:
    """Backward induction on the fully observable MDP."""
    out = [None] * model.horizon
    nxt = None
    for t in range(model.horizon - 1, -1, -1):
        q = model.reward.copy()
        if nxt is not None:
            q += model.transition @ nxt.max(axis=1)
        out[t] = q
        nxt = q
    return MdpQTable(tuple(out))


def qmdp(model: DecPomdp, space: HistorySpace | None = None, mode: str = "all") -> QTable:
    """Belief-weighted underlying-MDP values.

    ``mode='all'`` tabulates every joint AO-history; ``mode='fspc'`` returns a
    table that evaluates entries on demand.
    """
    space = space or HistorySpace(model)
    mdp = solve_underlying_mdp(model)
    if mode == "fspc":
        return LazyQmdp(space, mdp)
    if mode != "all":
        raise ValueError(f"unknown mode {mode!r}")
    weighted = [space.alpha(t) @ mdp.values[t] for t in range(model.horizon)]
    return QTable("qmdp", space, weighted)


def qpomdp(model: DecPomdp, space: HistorySpace | None = None) -> QTable:
    """Underlying-POMDP values: joint histories are shared after every step."""
    space = space or HistorySpace(model)
    h, n_ja, n_jo = model.horizon, model.num_joint_actions, model.num_joint_observations
    weighted = [None] * h
    for t in range(h - 1, -1, -1):
        u = space.expected_reward[t].copy()
        if t < h - 1:
            nxt = weighted[t + 1].reshape(-1, n_ja, n_jo, n_ja)
            u += nxt.max(axis=3).sum(axis=2)
        weighted[t] = u
    return QTable("qpomdp", space, weighted)


def qbg(model: DecPomdp, space: HistorySpace | None = None) -> QTable:
    """Bayesian-game values: joint histories are shared with a one-step delay.

    For every (theta, a) the one-step BG over the next individual
    observations is solved exactly by scoring all joint BG policies.
    """
    space = space or HistorySpace(model)
    h, n_ja = model.horizon, model.num_joint_actions
    n_obs, n_act = model.num_observations, model.num_actions
    n_pol = int(np.prod([a**o for a, o in zip(n_act, n_obs)], dtype=np.int64))
    weighted = [None] * h
    for t in range(h - 1, -1, -1):
        u = space.expected_reward[t].copy()
        if t < h - 1:
            nxt = weighted[t + 1].reshape((-1,) + tuple(n_obs) + (n_ja,))
            W = agent_major(nxt, n_obs, n_act)
            step = max(1, BLOCK // n_pol)
            best = np.empty(W.shape[0])
            for s in range(0, W.shape[0], step):
                vals = batched_policy_values(W[s : s + step], n_obs, n_act)
                best[s : s + step] = vals.reshape(vals.shape[0], -1).max(axis=1)
            u += best.reshape(-1, n_ja)
        weighted[t] = u
    return QTable("qbg", space, weighted)


HEURISTICS = {"qmdp": qmdp, "qpomdp": qpomdp, "qbg": qbg}


def build_heuristic(name: str, model: DecPomdp, space: HistorySpace | None = None):
    if name not in HEURISTICS:
        raise ValueError(f"unknown heuristic {name!r}")
    return HEURISTICS[name](model, space)
