"""Generalized MAA*: best-first search over partial joint policies.

A node is a partial joint policy ``phi^t``.  Expanding it builds the
stage-``t`` Bayesian game (types: phi-consistent joint AO-histories,
payoffs: heuristic Q-values) and scores every joint BG policy ``beta``;
the child ``phi^{t+1} = (phi^t, beta)`` receives

    V(child) = V^{0..t-1}(phi^t) + sum_theta Pr(theta) Q(theta, beta(theta)).

Children that complete the policy are exact and only update the incumbent.
The ``k`` argument selects the Expand operator: ``k=inf`` keeps every
child (MAA*), a finite ``k`` keeps the ``k`` best (k-GMAA, ``k=1`` is
forward-sweep policy computation).
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bgames import (
    DEFAULT_BG_CAP,
    agent_major,
    argmax_policy,
    decode_joint_rank,
    iter_policy_values,
    policy_objective,
    top_k_policies,
)
from .histories import HistorySpace, joint_consistent_indices
from .model import DecPomdp
from .policy import PartialJointPolicy, PureJointPolicy

PRUNE_EPS = 1e-12
DEFAULT_POOL_CAP = 10**7


@dataclass
class SearchStats:
    n_phi: int = 0  # partial/full joint policies evaluated (children scored)
    expansions: int = 0
    bgs_solved: int = 0
    pushed: int = 0
    heuristic_time: float = 0.0
    search_time: float = 0.0


@dataclass
class GmaaResult:
    policy: PureJointPolicy | None
    value: float
    stats: SearchStats
    truncated: bool = False
    root_bound: float = math.inf
    open_bound: float = -math.inf  # best V-hat left in the pool when truncated
    reason: str = ""


@dataclass(eq=False)
class _Node:
    parent: "_Node | None"
    stage: int
    rank: int  # joint BG-policy rank of the last decision rule
    bound: float
    path: tuple = ()
    past: float | None = None
    rules: list | None = field(default=None, repr=False)


class _Expander:
    """Shared machinery: rules reconstruction, history grids, BG payoffs."""

    def __init__(self, model: DecPomdp, heuristic, space: HistorySpace):
        self.model = model
        self.heuristic = heuristic
        self.space = space
        self.n = model.num_agents
        self.n_ja = model.num_joint_actions
        self.n_jo = model.num_joint_observations
        self.base = self.n_ja * self.n_jo

    def types(self, t: int) -> tuple[int, ...]:
        return tuple(o**t for o in self.model.num_observations)

    def rules_of(self, node: _Node) -> list[list[np.ndarray]]:
        if node.rules is None:
            if node.parent is None:
                node.rules = [[] for _ in range(self.n)]
            else:
                parent_rules = self.rules_of(node.parent)
                acts = decode_joint_rank(
                    node.rank, self.types(node.stage - 1), self.model.num_actions
                )
                node.rules = [r + [a] for r, a in zip(parent_rules, acts)]
        return node.rules

    def contributions(self, rules) -> list[list[np.ndarray]]:
        """Per stage ``0..len(rules)``, per agent, joint-index contributions."""
        m = self.model
        out = [[np.zeros(1, np.int64) for _ in range(self.n)]]
        t = len(rules[0])
        for tau in range(t):
            layer = []
            for i in range(self.n):
                prev = out[-1][i]
                act = rules[i][tau]
                obs = np.arange(m.num_observations[i], dtype=np.int64)
                layer.append(
                    (
                        (prev * self.base + act * m.action_strides[i] * self.n_jo)[:, None]
                        + obs[None, :] * m.observation_strides[i]
                    ).reshape(-1)
                )
            out.append(layer)
        return out

    def past_value(self, node: _Node) -> float:
        if node.past is None:
            if node.parent is None:
                node.past = 0.0
            else:
                t = node.stage - 1
                rules = self.rules_of(node)
                contrib = self.contributions([r[:t] for r in rules])[t]
                grid = joint_consistent_indices(contrib)
                weights = self.space.expected_reward[t][grid]
                reward = policy_objective(
                    weights,
                    self.types(t),
                    self.model.num_actions,
                    [r[t] for r in rules],
                )
                node.past = self.past_value(node.parent) + reward
        return node.past

    def payoff(self, node: _Node) -> np.ndarray:
        rules = self.rules_of(node)
        grid = joint_consistent_indices(self.contributions(rules)[node.stage])
        weighted = self.heuristic.weighted_at(node.stage, grid)
        return agent_major(weighted, self.types(node.stage), self.model.num_actions)

    def policy(self, node: _Node, last_rank: int) -> PureJointPolicy:
        rules = self.rules_of(node)
        acts = decode_joint_rank(last_rank, self.types(node.stage), self.model.num_actions)
        return PureJointPolicy(tuple(tuple(r) + (a,) for r, a in zip(rules, acts)))


def _key(node: _Node, counter: int):
    return (-round(node.bound, 9), -node.stage, node.path, counter)


def gmaa(
    model: DecPomdp,
    heuristic,
    k: float = math.inf,
    space: HistorySpace | None = None,
    node_cap: int | None = None,
    time_cap: float | None = None,
    pool_cap: int = DEFAULT_POOL_CAP,
    bg_cap: int = DEFAULT_BG_CAP,
    on_pop: Callable[[float, float], None] | None = None,
) -> GmaaResult:
    """Run GMAA* with the given heuristic Q-table (or heuristic name).

    ``on_pop(bound, incumbent_value)`` is called for every popped node.
    """
    from .heuristics import build_heuristic

    stats = SearchStats()
    if isinstance(heuristic, str):
        t0 = time.perf_counter()
        space = space or HistorySpace(model)
        heuristic = build_heuristic(heuristic, model, space)
        stats.heuristic_time = time.perf_counter() - t0
    space = space or heuristic.space
    exp = _Expander(model, heuristic, space)
    h = model.horizon
    if k != math.inf and (k < 1 or int(k) != k):
        raise ValueError("k must be a positive integer or inf")

    t_start = time.perf_counter()
    root = _Node(None, 0, 0, math.inf, (), 0.0)
    root_W = exp.payoff(root)
    _, root_val = argmax_policy(root_W, exp.types(0), model.num_actions, bg_cap)
    root.bound = root_val
    root_bound = root_val

    maxlb = -math.inf
    incumbent = None
    counter = 0
    pool = [(_key(root, counter), root)]
    truncated, reason = False, ""
    while pool:
        _, node = heapq.heappop(pool)
        if on_pop is not None:
            on_pop(node.bound, maxlb)
        if node.bound <= maxlb + PRUNE_EPS:
            break  # every remaining node is bounded by this one
        if node_cap is not None and stats.expansions >= node_cap:
            truncated, reason = True, "node cap"
            heapq.heappush(pool, (_key(node, counter), node))
            break
        if time_cap is not None and time.perf_counter() - t_start > time_cap:
            truncated, reason = True, "time cap"
            heapq.heappush(pool, (_key(node, counter), node))
            break
        past = exp.past_value(node)
        W = exp.payoff(node)
        types = exp.types(node.stage)
        stats.expansions += 1
        stats.bgs_solved += 1
        n_children = 1
        for K, A in zip(types, model.num_actions):
            n_children *= A**K
        stats.n_phi += n_children
        last = node.stage + 1 == h
        if last:
            rank, val = argmax_policy(W, types, model.num_actions, bg_cap)
            if past + val > maxlb:
                maxlb = past + val
                incumbent = (node, rank)
            continue
        if k == math.inf:
            ranks_vals = []
            for offset, vals in iter_policy_values(W, types, model.num_actions):
                sel = np.nonzero(past + vals > maxlb + PRUNE_EPS)[0]
                if sel.size:
                    ranks_vals.append((offset + sel, vals[sel]))
            children = (
                (np.concatenate([r for r, _ in ranks_vals]),
                 np.concatenate([v for _, v in ranks_vals]))
                if ranks_vals
                else (np.zeros(0, np.int64), np.zeros(0))
            )
        else:
            children = top_k_policies(W, types, model.num_actions, int(k), bg_cap)
        for rank, val in zip(*children):
            bound = past + float(val)
            if bound <= maxlb + PRUNE_EPS:
                continue
            counter += 1
            child = _Node(node, node.stage + 1, int(rank), bound, node.path + (int(rank),))
            heapq.heappush(pool, (_key(child, counter), child))
            stats.pushed += 1
        if len(pool) > pool_cap:
            truncated, reason = True, "pool cap"
            break
    stats.search_time = time.perf_counter() - t_start
    open_bound = max((n.bound for _, n in pool), default=-math.inf) if truncated else -math.inf
    if incumbent is None:
        return GmaaResult(None, -math.inf, stats, True, root_bound, open_bound, reason or "no policy")
    policy = exp.policy(*incumbent)
    return GmaaResult(policy, maxlb, stats, truncated, root_bound, open_bound, reason)


# ---------------------------------------------------------------------------
# single-expansion helpers (exposed for testing the Expand operators)


def _node_from_policy(phi: PartialJointPolicy) -> _Node:
    node = _Node(None, phi.stage, 0, math.inf, (), None)
    node.rules = [list(r) for r in phi.rules]
    return node


def expand(
    model: DecPomdp,
    phi: PartialJointPolicy,
    heuristic,
    k: float = math.inf,
    space: HistorySpace | None = None,
) -> list[tuple[PartialJointPolicy, float]]:
    """All (``k=inf``) or the ``k`` best one-stage extensions of ``phi`` with
    their heuristic values, ordered by value then rank."""
    from .evaluator import expected_stage_rewards

    space = space or heuristic.space
    exp = _Expander(model, heuristic, space)
    if phi.stage >= model.horizon:
        raise ValueError("phi is already a full policy")
    node = _node_from_policy(phi)
    past = float(expected_stage_rewards(model, phi).sum()) if phi.stage else 0.0
    W = exp.payoff(node)
    types = exp.types(phi.stage)
    total = 1
    for K, A in zip(types, model.num_actions):
        total *= A**K
    kk = total if k == math.inf else min(int(k), total)
    ranks, vals = top_k_policies(W, types, model.num_actions, kk)
    out = []
    for rank, val in zip(ranks, vals):
        acts = decode_joint_rank(int(rank), types, model.num_actions)
        child = phi.extend(acts)
        if child.stage == model.horizon:
            child = PureJointPolicy.from_partial(child)
        out.append((child, past + float(val)))
    return out


def expand_maa(model, phi, heuristic, space=None):
    return expand(model, phi, heuristic, math.inf, space)


def expand_kbest(model, phi, heuristic, k, space=None):
    return expand(model, phi, heuristic, k, space)
