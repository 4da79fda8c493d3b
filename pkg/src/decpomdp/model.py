"""Finite-horizon Dec-POMDP problem representation.

Joint actions and joint observations are flattened with a mixed-radix
encoding in which agent 0 is the most significant digit.  All tables are
dense ``float64`` arrays:

* ``transition[s, ja, s2]``  = Pr(s2 | s, ja)
* ``observation[ja, s2, jo]`` = Pr(jo | ja, s2)
* ``reward[s, ja]``           = R(s, ja)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

STOCHASTIC_TOL = 1e-9


class ModelError(ValueError):
    """Raised when a problem violates a stochasticity or shape constraint."""


def _radix_strides(sizes: Sequence[int]) -> tuple[int, ...]:
    strides = []
    acc = 1
    for size in reversed(sizes):
        strides.append(acc)
        acc *= size
    return tuple(reversed(strides))


def encode(components: Sequence[int], sizes: Sequence[int]) -> int:
    """Flatten per-agent indices into a joint index (agent 0 most significant)."""
    if len(components) != len(sizes):
        raise ValueError("component count does not match agent count")
    index = 0
    for c, n in zip(components, sizes):
        if not 0 <= c < n:
            raise ValueError(f"component {c} out of range [0, {n})")
        index = index * n + c
    return index


def decode(index: int, sizes: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`encode`."""
    total = int(np.prod(sizes))
    if not 0 <= index < total:
        raise ValueError(f"joint index {index} out of range [0, {total})")
    out = []
    for n in reversed(sizes):
        index, c = divmod(index, n)
        out.append(c)
    return tuple(reversed(out))


@dataclass(frozen=True, eq=False)
class DecPomdp:
    """The tuple <n, S, A, T, R, O, Obs, h, b0>; immutable after construction."""

    states: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    observations: tuple[tuple[str, ...], ...]
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    horizon: int
    initial_belief: np.ndarray
    name: str = "decpomdp"

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(tuple(a) for a in self.actions))
        object.__setattr__(
            self, "observations", tuple(tuple(o) for o in self.observations)
        )
        for field in ("transition", "observation", "reward", "initial_belief"):
            arr = np.array(getattr(self, field), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, field, arr)
        object.__setattr__(self, "horizon", int(self.horizon))
        self.validate()

    # sizes ---------------------------------------------------------------

    @property
    def num_agents(self) -> int:
        return len(self.actions)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @cached_property
    def num_actions(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.actions)

    @cached_property
    def num_observations(self) -> tuple[int, ...]:
        return tuple(len(o) for o in self.observations)

    @property
    def num_joint_actions(self) -> int:
        return int(np.prod(self.num_actions))

    @property
    def num_joint_observations(self) -> int:
        return int(np.prod(self.num_observations))

    @cached_property
    def action_strides(self) -> tuple[int, ...]:
        return _radix_strides(self.num_actions)

    @cached_property
    def observation_strides(self) -> tuple[int, ...]:
        return _radix_strides(self.num_observations)

    # joint index helpers -------------------------------------------------

    def joint_action(self, components: Sequence[int]) -> int:
        return encode(components, self.num_actions)

    def action_components(self, ja: int) -> tuple[int, ...]:
        return decode(ja, self.num_actions)

    def joint_observation(self, components: Sequence[int]) -> int:
        return encode(components, self.num_observations)

    def observation_components(self, jo: int) -> tuple[int, ...]:
        return decode(jo, self.num_observations)

    @cached_property
    def joint_action_table(self) -> np.ndarray:
        """``table[ja, i]`` is agent i's action in joint action ``ja``."""
        return np.array(
            [self.action_components(ja) for ja in range(self.num_joint_actions)],
            dtype=np.int64,
        ).reshape(self.num_joint_actions, self.num_agents)

    @cached_property
    def joint_observation_table(self) -> np.ndarray:
        return np.array(
            [
                self.observation_components(jo)
                for jo in range(self.num_joint_observations)
            ],
            dtype=np.int64,
        ).reshape(self.num_joint_observations, self.num_agents)

    def joint_action_name(self, ja: int) -> str:
        comps = self.action_components(ja)
        return " ".join(self.actions[i][a] for i, a in enumerate(comps))

    def joint_observation_name(self, jo: int) -> str:
        comps = self.observation_components(jo)
        return " ".join(self.observations[i][o] for i, o in enumerate(comps))

    # derived tables ------------------------------------------------------

    @cached_property
    def dynamics(self) -> np.ndarray:
        """``dynamics[s, ja, s2, jo]`` = Pr(s2, jo | s, ja)."""
        out = self.transition[:, :, :, None] * self.observation[None, :, :, :]
        out.flags.writeable = False
        return out

    # validation ----------------------------------------------------------

    def validate(self) -> None:
        n_s = len(self.states)
        if n_s == 0:
            raise ModelError("model needs at least one state")
        if len(self.actions) == 0 or len(self.actions) != len(self.observations):
            raise ModelError("actions and observations must be given for every agent")
        if any(len(a) == 0 for a in self.actions) or any(
            len(o) == 0 for o in self.observations
        ):
            raise ModelError("every agent needs at least one action and observation")
        if self.horizon < 1:
            raise ModelError(f"horizon must be >= 1, got {self.horizon}")
        n_ja = int(np.prod([len(a) for a in self.actions]))
        n_jo = int(np.prod([len(o) for o in self.observations]))
        shapes = {
            "transition": (n_s, n_ja, n_s),
            "observation": (n_ja, n_s, n_jo),
            "reward": (n_s, n_ja),
            "initial_belief": (n_s,),
        }
        for field, shape in shapes.items():
            got = getattr(self, field).shape
            if got != shape:
                raise ModelError(f"{field} has shape {got}, expected {shape}")
        if not np.all(np.isfinite(self.reward)):
            raise ModelError("reward table contains non-finite entries")
        for field in ("transition", "observation", "initial_belief"):
            arr = getattr(self, field)
            if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
                raise ModelError(f"{field} has entries outside [0, 1]")

        sums = self.transition.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > STOCHASTIC_TOL)
        if bad.size:
            s, ja = (int(x) for x in bad[0])
            raise ModelError(
                f"transition row T(.|s={self.states[s]}, a={self.joint_action_name(ja)})"
                f" sums to {float(sums[s, ja])!r}, not 1"
            )
        sums = self.observation.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > STOCHASTIC_TOL)
        if bad.size:
            ja, s = (int(x) for x in bad[0])
            raise ModelError(
                f"observation row O(.|a={self.joint_action_name(ja)}, s'={self.states[s]})"
                f" sums to {float(sums[ja, s])!r}, not 1"
            )
        total = self.initial_belief.sum()
        if abs(total - 1.0) > STOCHASTIC_TOL:
            raise ModelError(f"initial belief sums to {float(total)!r}, not 1")

    # misc ----------------------------------------------------------------

    def with_horizon(self, horizon: int) -> "DecPomdp":
        return self.replace(horizon=horizon)

    def replace(self, **changes) -> "DecPomdp":
        fields = dict(
            states=self.states,
            actions=self.actions,
            observations=self.observations,
            transition=self.transition,
            observation=self.observation,
            reward=self.reward,
            horizon=self.horizon,
            initial_belief=self.initial_belief,
            name=self.name,
        )
        fields.update(changes)
        return DecPomdp(**fields)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DecPomdp):
            return NotImplemented
        return (
            self.states == other.states
            and self.actions == other.actions
            and self.observations == other.observations
            and self.horizon == other.horizon
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.observation, other.observation)
            and np.array_equal(self.reward, other.reward)
            and np.array_equal(self.initial_belief, other.initial_belief)
        )

    __hash__ = object.__hash__

    def __repr__(self) -> str:
        return (
            f"DecPomdp(name={self.name!r}, agents={self.num_agents}, "
            f"|S|={self.num_states}, |A_i|={self.num_actions}, "
            f"|O_i|={self.num_observations}, h={self.horizon})"
        )
