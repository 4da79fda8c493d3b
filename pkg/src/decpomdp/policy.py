"""Pure (partial) joint policies as stacks of per-stage decision rules.

A decision rule of agent ``i`` at stage ``t`` is an integer array of length
``|O_i|**t``: entry ``k`` is the action taken after the observation history
whose lexicographic rank is ``k`` (earliest observation most significant).

Policies are ranked canonically: an individual policy is a mixed-radix number
over the concatenation of its decision rules (stage 0 first, then histories
in lexicographic order, first entry most significant), and a joint policy is
a mixed-radix number over individual ranks with agent 0 most significant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import DecPomdp


def num_decision_rules(n_actions: int, n_obs: int, t: int) -> int:
    return n_actions ** (n_obs**t)


def num_individual_policies(n_actions: int, n_obs: int, stages: int) -> int:
    """Number of pure individual policies covering ``stages`` stages."""
    n_hist = sum(n_obs**t for t in range(stages))
    return n_actions**n_hist


def num_joint_policies(model: DecPomdp, stages: int | None = None) -> int:
    stages = model.horizon if stages is None else stages
    out = 1
    for a, o in zip(model.num_actions, model.num_observations):
        out *= num_individual_policies(a, o, stages)
    return out


def rank_digits(ranks: np.ndarray, base: int, length: int) -> np.ndarray:
    """Expand integer ranks into ``length`` base-``base`` digits (MSB first)."""
    ranks = np.asarray(ranks, dtype=np.int64)
    powers = base ** np.arange(length - 1, -1, -1, dtype=np.int64)
    return (ranks[..., None] // powers) % base


def digits_rank(digits: Sequence[int], base: int) -> int:
    r = 0
    for d in digits:
        r = r * base + int(d)
    return r


@dataclass(frozen=True, eq=False)
class PartialJointPolicy:
    """Decision rules for stages ``0..stage-1`` of every agent.

    ``rules[i][t]`` is agent ``i``'s stage-``t`` decision rule.  ``past_value``
    caches the exact expected reward accumulated over the specified stages
    when known (``None`` otherwise).
    """

    rules: tuple[tuple[np.ndarray, ...], ...]
    past_value: float | None = None

    def __post_init__(self):
        frozen = []
        for agent_rules in self.rules:
            stage_rules = []
            for r in agent_rules:
                arr = np.array(r, dtype=np.int64).reshape(-1)
                arr.flags.writeable = False
                stage_rules.append(arr)
            frozen.append(tuple(stage_rules))
        object.__setattr__(self, "rules", tuple(frozen))
        lengths = {len(r) for r in self.rules}
        if len(lengths) > 1:
            raise ValueError("all agents must specify the same number of stages")

    @property
    def num_agents(self) -> int:
        return len(self.rules)

    @property
    def stage(self) -> int:
        """Number of specified stages (the ``t`` of phi^t)."""
        return len(self.rules[0]) if self.rules else 0

    @classmethod
    def empty(cls, num_agents: int) -> "PartialJointPolicy":
        return cls(tuple(() for _ in range(num_agents)), 0.0)

    def extend(self, rules_t: Sequence[np.ndarray], past_value=None):
        """Append one joint decision rule (one rule per agent)."""
        return type(self)(
            tuple(tuple(r) + (np.asarray(d),) for r, d in zip(self.rules, rules_t)),
            past_value,
        )

    def prefix(self, stages: int) -> "PartialJointPolicy":
        return PartialJointPolicy(tuple(r[:stages] for r in self.rules))

    def action(self, agent: int, t: int, obs_history: int) -> int:
        return int(self.rules[agent][t][obs_history])

    def joint_action(self, model: DecPomdp, t: int, obs_histories) -> int:
        comps = [self.action(i, t, k) for i, k in enumerate(obs_histories)]
        return model.joint_action(comps)

    def validate(self, model: DecPomdp) -> None:
        if self.num_agents != model.num_agents:
            raise ValueError("policy agent count does not match model")
        for i, agent_rules in enumerate(self.rules):
            n_a, n_o = model.num_actions[i], model.num_observations[i]
            for t, rule in enumerate(agent_rules):
                if rule.shape != (n_o**t,):
                    raise ValueError(
                        f"agent {i} stage {t} rule has {rule.size} entries,"
                        f" expected {n_o**t}"
                    )
                if rule.size and (rule.min() < 0 or rule.max() >= n_a):
                    raise ValueError(f"agent {i} stage {t} rule has invalid actions")

    def agent_rank(self, model: DecPomdp, agent: int) -> int:
        digits = np.concatenate(
            [np.asarray(r) for r in self.rules[agent]] or [np.zeros(0, np.int64)]
        )
        return digits_rank(digits, model.num_actions[agent])

    def rank(self, model: DecPomdp) -> int:
        r = 0
        for i in range(self.num_agents):
            r = r * num_individual_policies(
                model.num_actions[i], model.num_observations[i], self.stage
            ) + self.agent_rank(model, i)
        return r

    def __eq__(self, other):
        if not isinstance(other, PartialJointPolicy):
            return NotImplemented
        return self.stage == other.stage and all(
            np.array_equal(x, y)
            for ra, rb in zip(self.rules, other.rules)
            for x, y in zip(ra, rb)
        ) and self.num_agents == other.num_agents

    __hash__ = object.__hash__


class PureJointPolicy(PartialJointPolicy):
    """A partial joint policy that specifies every stage of the horizon."""

    def validate(self, model: DecPomdp) -> None:
        super().validate(model)
        if self.stage != model.horizon:
            raise ValueError(
                f"policy covers {self.stage} stages, horizon is {model.horizon}"
            )

    @classmethod
    def from_partial(cls, phi: PartialJointPolicy) -> "PureJointPolicy":
        return cls(phi.rules, phi.past_value)


def individual_rules_from_rank(
    rank: int, n_actions: int, n_obs: int, stages: int
) -> tuple[np.ndarray, ...]:
    n_hist = sum(n_obs**t for t in range(stages))
    if not 0 <= rank < n_actions**n_hist:
        raise ValueError(f"policy rank {rank} out of range for {n_actions**n_hist} policies")
    digits = rank_digits(np.array([rank]), n_actions, n_hist)[0]
    out, pos = [], 0
    for t in range(stages):
        out.append(digits[pos : pos + n_obs**t].copy())
        pos += n_obs**t
    return tuple(out)


def policy_from_ranks(model: DecPomdp, ranks: Sequence[int], stages=None):
    """Build a policy from per-agent canonical ranks."""
    stages = model.horizon if stages is None else stages
    rules = tuple(
        individual_rules_from_rank(
            r, model.num_actions[i], model.num_observations[i], stages
        )
        for i, r in enumerate(ranks)
    )
    cls = PureJointPolicy if stages == model.horizon else PartialJointPolicy
    return cls(rules)


def constant_policy(model: DecPomdp, actions: Sequence[int]) -> PureJointPolicy:
    """Every agent always takes the given action."""
    return PureJointPolicy(
        tuple(
            tuple(
                np.full(model.num_observations[i] ** t, a, dtype=np.int64)
                for t in range(model.horizon)
            )
            for i, a in enumerate(actions)
        )
    )


def random_policy(model: DecPomdp, rng: np.random.Generator, stages=None):
    stages = model.horizon if stages is None else stages
    rules = tuple(
        tuple(
            rng.integers(0, model.num_actions[i], size=model.num_observations[i] ** t)
            for t in range(stages)
        )
        for i in range(model.num_agents)
    )
    cls = PureJointPolicy if stages == model.horizon else PartialJointPolicy
    return cls(rules)


def _obs_names(model: DecPomdp, agent: int, t: int, k: int) -> list[str]:
    n_o = model.num_observations[agent]
    digits = rank_digits(np.array([k]), n_o, t)[0] if t else []
    return [model.observations[agent][d] for d in digits]


def dump_policy(model: DecPomdp, policy: PartialJointPolicy) -> str:
    """One line per (agent, stage, observation history) -> action name."""
    lines = []
    for i, agent_rules in enumerate(policy.rules):
        for t, rule in enumerate(agent_rules):
            for k, a in enumerate(rule):
                hist = ",".join(_obs_names(model, i, t, k)) or "-"
                lines.append(f"agent {i} stage {t} [{hist}] -> {model.actions[i][a]}")
    return "\n".join(lines) + "\n"
