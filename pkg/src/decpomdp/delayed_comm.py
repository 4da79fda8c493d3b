"""Planning with k-steps-delayed communication as an augmented MDP.

Joint action-observation histories become common knowledge with a delay of
``k`` stages.  At stage ``t`` the augmented state is ``(theta^t, q^t)``: the
shared joint history and the joint policy tree of depth ``d = min(k, h-t)``
the agents are already committed to for stages ``t..t+d-1``.  While
``t + k < h`` the augmented action ``beta`` fixes every agent's stage-``t+k``
actions as a function of its next ``k`` individual observations; in the last
``k`` stages the only action is the empty one and the process is a Markov
chain.

``k = 0`` recovers the underlying-POMDP values, ``k = 1`` the Bayesian-game
values and ``k = h`` the optimal Dec-POMDP value.

Individual trees are tuples of actions listed level by level (level ``l``
holds one action per observation sequence of length ``l``, sequences in
lexicographic order) -- the same layout as an individual policy's decision
rules.  All values are stored probability weighted, so zero-probability
histories contribute nothing and are never expanded.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .bgames import agent_major, argmax_policy, batched_policy_values
from .evaluator import CapExceeded
from .histories import HistorySpace
from .model import DecPomdp
from .policy import rank_digits

DEFAULT_STATE_CAP = 5 * 10**6

Tree = tuple[tuple[int, ...], ...]  # one action tuple per agent


def tree_size(n_obs: int, depth: int) -> int:
    return sum(n_obs**l for l in range(depth))


def subtree(tree: tuple[int, ...], n_obs: int, depth: int, o: int) -> tuple[int, ...]:
    """The depth-``depth-1`` tree an agent follows after observing ``o``."""
    out = []
    offset = 1
    for level in range(1, depth):
        width = n_obs ** (level - 1)
        start = offset + o * width
        out.extend(tree[start : start + width])
        offset += n_obs**level
    return tuple(out)


def all_trees(n_actions: int, n_obs: int, depth: int) -> list[tuple[int, ...]]:
    size = tree_size(n_obs, depth)
    return [tuple(t) for t in itertools.product(range(n_actions), repeat=size)]


@dataclass
class _Entry:
    value: float  # weighted V_k
    tree_reward: float  # weighted expected reward of the committed tree
    future: float  # weighted best in-k-steps return (value - tree_reward)


class KDelayQ:
    """Lazily evaluated ``Q_k`` with memoisation on ``(t, theta, q)``."""

    def __init__(self, model: DecPomdp, k: int, space: HistorySpace | None = None,
                 state_cap: int = DEFAULT_STATE_CAP):
        if k < 0:
            raise ValueError("delay must be non-negative")
        self.model = model
        self.k = min(k, model.horizon)
        self.space = space or HistorySpace(model)
        self.state_cap = state_cap
        self._memo: dict[tuple[int, int, Tree], _Entry] = {}
        self._last_level: dict[tuple[int, int, Tree], float] = {}
        m = model
        self._sub_counts = tuple(
            a ** (o ** (self.k - 1)) if self.k >= 1 else a
            for a, o in zip(m.num_actions, m.num_observations)
        )

    # -- structure -----------------------------------------------------------

    def depth(self, t: int) -> int:
        return min(self.k, self.model.horizon - t)

    def has_action(self, t: int) -> bool:
        return t + self.k < self.model.horizon

    def num_beta(self) -> tuple[int, ...]:
        """Per-agent number of augmented actions (rules over ``O_i^k``)."""
        m = self.model
        return tuple(a ** (o**self.k) for a, o in zip(m.num_actions, m.num_observations))

    def initial_trees(self) -> list[Tree]:
        m = self.model
        d = self.depth(0)
        per_agent = [all_trees(a, o, d) for a, o in zip(m.num_actions, m.num_observations)]
        return list(itertools.product(*per_agent))

    def beta_tree(self, beta_rank: int) -> Tree:
        """Per-agent action tuples of the joint augmented action ``beta_rank``."""
        m = self.model
        per_agent = np.unravel_index(int(beta_rank), self.num_beta())
        return tuple(
            tuple(int(x) for x in rank_digits(np.array([r]), a, o**self.k)[0])
            for r, a, o in zip(per_agent, m.num_actions, m.num_observations)
        )

    def append(self, q: Tree, beta_rank: int) -> Tree:
        """``q ++ beta``: the tree extended by the augmented action's level."""
        return tuple(qi + bi for qi, bi in zip(q, self.beta_tree(beta_rank)))

    # -- recursion -------------------------------------------------------------

    def _alpha(self, t: int, theta: int) -> np.ndarray:
        return self.space.alpha(t)[theta]

    def _joint_first(self, q: Tree) -> int:
        return self.model.joint_action([qi[0] for qi in q])

    def _children(self, t: int, theta: int, ja: int):
        """Positive-probability ``(jo, theta')`` successors."""
        alpha = self.space.alpha(t + 1)
        base = theta * self.space.base + ja * self.model.num_joint_observations
        for jo in range(self.model.num_joint_observations):
            nxt = base + jo
            if alpha[nxt].sum() > 0.0:
                yield jo, nxt

    def _tree_depth(self, q: Tree) -> int:
        n_o, size, d = self.model.num_observations[0], len(q[0]), 0
        while tree_size(n_o, d) < size:
            d += 1
        return d

    def _sub(self, q: Tree, jo: int) -> Tree:
        m = self.model
        d = self._tree_depth(q)
        comps = m.observation_components(jo)
        return tuple(
            subtree(qi, o, d, c) for qi, o, c in zip(q, m.num_observations, comps)
        )

    def _sub_rule(self, agent: int, b: int) -> tuple[int, ...]:
        m = self.model
        width = m.num_observations[agent] ** (self.k - 1)
        return tuple(
            int(x) for x in rank_digits(np.array([b]), m.num_actions[agent], width)[0]
        )

    def _bg_payoffs(self, t: int, theta: int, q: Tree, kind: str) -> np.ndarray:
        """Weighted payoff ``u[o_0..o_{n-1}, b]`` of the one-stage game over the
        next individual observations whose actions are sub-rules ``b_i``
        (the stage-``t+k`` rule restricted to histories starting with ``o_i``).

        ``kind='value'`` uses the successor's full value, ``kind='future'``
        the last-level reward plus the successor's best in-k-steps return.
        """
        m = self.model
        n_obs = m.num_observations
        subs = self._sub_counts
        u = np.zeros(tuple(n_obs) + (int(np.prod(subs)),))
        ja = self._joint_first(q)
        for jo, nxt in self._children(t, theta, ja):
            comps = m.observation_components(jo)
            base_tree = self._sub(q, jo)
            for b, b_comps in enumerate(itertools.product(*[range(s) for s in subs])):
                child = tuple(
                    qi + self._sub_rule(i, bi)
                    for i, (qi, bi) in enumerate(zip(base_tree, b_comps))
                )
                if kind == "value":
                    u[tuple(comps) + (b,)] = self._entry(t + 1, nxt, child).value
                else:
                    u[tuple(comps) + (b,)] = (
                        self._last(t + 1, nxt, child) + self._entry(t + 1, nxt, child).future
                    )
        return u

    def _solve_bg(self, u: np.ndarray) -> float:
        m = self.model
        W = agent_major(u, m.num_observations, self._sub_counts)
        _, val = argmax_policy(W, m.num_observations, self._sub_counts)
        return val

    def _all_bg(self, u: np.ndarray) -> np.ndarray:
        m = self.model
        W = agent_major(u[None], m.num_observations, self._sub_counts)
        return batched_policy_values(W, m.num_observations, self._sub_counts)[0].reshape(-1)

    def _reward(self, t: int, theta: int, ja: int) -> float:
        return float(self.space.expected_reward[t][theta, ja])

    def _last(self, t: int, theta: int, q: Tree) -> float:
        """Weighted expected reward at the last level of tree ``q``."""
        key = (t, theta, q)
        if key in self._last_level:
            return self._last_level[key]
        ja = self._joint_first(q)
        if self._tree_depth(q) == 1:
            out = self._reward(t, theta, ja)
        else:
            out = sum(
                self._last(t + 1, nxt, self._sub(q, jo))
                for jo, nxt in self._children(t, theta, ja)
            )
        self._last_level[key] = out
        return out

    def _entry(self, t: int, theta: int, q: Tree) -> _Entry:
        key = (t, theta, q)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if len(self._memo) >= self.state_cap:
            raise CapExceeded(f"more than {self.state_cap} augmented states")
        h = self.model.horizon
        if self.k == 0:
            ent = self._entry_k0(t, theta)
        else:
            ja = self._joint_first(q)
            r = self._reward(t, theta, ja)
            tree = self._tree_reward(t, theta, q)
            if self.has_action(t):
                value = r + self._solve_bg(self._bg_payoffs(t, theta, q, "value"))
                future = self._solve_bg(self._bg_payoffs(t, theta, q, "future"))
            else:
                value = r
                if t + 1 < h:
                    value += sum(
                        self._entry(t + 1, nxt, self._sub(q, jo)).value
                        for jo, nxt in self._children(t, theta, ja)
                    )
                future = 0.0
            ent = _Entry(value, tree, future)
        self._memo[key] = ent
        return ent

    def _tree_reward(self, t: int, theta: int, q: Tree) -> float:
        """Weighted expected reward of executing tree ``q`` from ``theta``."""
        ja = self._joint_first(q)
        out = self._reward(t, theta, ja)
        if self._tree_depth(q) > 1:
            for jo, nxt in self._children(t, theta, ja):
                out += self._tree_reward(t + 1, nxt, self._sub(q, jo))
        return out

    def _q0_all(self, t: int, theta: int) -> np.ndarray:
        """Weighted ``Q_0(theta, a)`` for every joint action."""
        h = self.model.horizon
        out = np.array(self.space.expected_reward[t][theta], dtype=float)
        if t + 1 < h:
            for ja in range(self.model.num_joint_actions):
                out[ja] += sum(
                    self._entry(t + 1, nxt, ()).value
                    for _, nxt in self._children(t, theta, ja)
                )
        return out

    def _entry_k0(self, t: int, theta: int) -> _Entry:
        val = float(self._q0_all(t, theta).max())
        return _Entry(val, 0.0, val)

    # -- public queries (unweighted) ---------------------------------------

    def _prob(self, t: int, theta: int) -> float:
        p = float(self.space.prob(t)[theta])
        if p <= 0.0:
            raise ValueError("history has zero probability")
        return p

    def _root_tree(self, q) -> Tree:
        if self.k == 0:
            return ()
        return tuple(tuple(int(x) for x in qi) for qi in q)

    def value(self, t: int, theta: int, q: Tree = ()) -> float:
        """``V_k(theta^t, q^t) = max_beta Q_k`` (``q`` is ignored for ``k=0``)."""
        return self._entry(t, theta, self._root_tree(q)).value / self._prob(t, theta)

    def q_values(self, t: int, theta: int, q: Tree = ()) -> np.ndarray:
        """``Q_k(theta^t, q^t, beta)`` for every joint augmented action rank
        (a single entry, the empty action, in the last ``k`` stages)."""
        p = self._prob(t, theta)
        if self.k == 0:
            return self._q0_all(t, theta) / p
        q = self._root_tree(q)
        ent = self._entry(t, theta, q)
        if not self.has_action(t):
            return np.array([ent.value / p])
        r = self._reward(t, theta, self._joint_first(q))
        return (r + self._all_bg(self._bg_payoffs(t, theta, q, "value"))) / p

    def split(self, t: int, theta: int, q: Tree = ()) -> tuple[np.ndarray, np.ndarray]:
        """``(K, F)`` per augmented action: the committed tree's expected
        reward (constant over actions) and the in-k-steps return."""
        p = self._prob(t, theta)
        if self.k == 0:
            f = self._q0_all(t, theta) / p
            return np.zeros_like(f), f
        q = self._root_tree(q)
        ent = self._entry(t, theta, q)
        if not self.has_action(t):
            return np.array([ent.tree_reward / p]), np.array([0.0])
        f = self._all_bg(self._bg_payoffs(t, theta, q, "future")) / p
        return np.full_like(f, ent.tree_reward / p), f

    def root_value(self) -> float:
        """Best value over the initial augmented states."""
        if self.k == 0:
            return self._entry(0, 0, ()).value
        return max(self._entry(0, 0, q).value for q in self.initial_trees())

    def states(self) -> list[tuple[int, int, Tree]]:
        """Materialised augmented states ``(t, theta, q)``."""
        return list(self._memo)

    def sweep(self) -> "KDelayQ":
        """Evaluate every augmented state reachable from the initial ones."""
        self.root_value()
        return self


def qk(model: DecPomdp, k: int, space: HistorySpace | None = None,
       state_cap: int = DEFAULT_STATE_CAP) -> KDelayQ:
    """Full backward evaluation of the k-delay augmented MDP."""
    return KDelayQ(model, k, space, state_cap).sweep()


@dataclass
class MonotoneReport:
    k_max: int
    checked: dict[int, int] = field(default_factory=dict)
    max_violation: dict[int, float] = field(default_factory=dict)
    max_gap: dict[int, float] = field(default_factory=dict)
    failures: list[tuple] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_monotone(
    model: DecPomdp, k_max: int, tol: float = 1e-9, space: HistorySpace | None = None
) -> MonotoneReport:
    """Check ``Q_k(theta, q, beta) >= V_{k+1}(theta, q ++ beta)`` for every
    materialised key and ``k < k_max``; shorter delays never lose value."""
    space = space or HistorySpace(model)
    report = MonotoneReport(k_max)
    tables = {k: qk(model, k, space) for k in range(k_max + 1)}
    for k in range(k_max):
        lo, hi = tables[k], tables[k + 1]
        count, worst, gap = 0, -np.inf, 0.0
        for t, theta, q in lo.states():
            if space.prob(t)[theta] <= 0.0:
                continue
            qs = lo.q_values(t, theta, q)
            for b, val in enumerate(qs):
                if lo.has_action(t):
                    longer = (
                        tuple((model.action_components(b)[i],) for i in range(model.num_agents))
                        if k == 0
                        else lo.append(q, b)
                    )
                else:
                    longer = q if k > 0 else tuple(() for _ in range(model.num_agents))
                    if k == 0:
                        continue  # k=0 always has an action
                other = hi.value(t, theta, longer)
                diff = other - val
                count += 1
                worst = max(worst, diff)
                gap = max(gap, abs(diff))
                if diff > tol:
                    report.failures.append((k, t, theta, q, b, val, other))
        report.checked[k] = count
        report.max_violation[k] = float(max(worst, 0.0)) if count else 0.0
        report.max_gap[k] = float(gap)
    return report
