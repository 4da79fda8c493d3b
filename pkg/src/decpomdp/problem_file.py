"""Line-oriented text format for Dec-POMDP problems.

Header lines::

    agents: 2
    states: sL sR            # or a count, e.g. ``states: 4``
    actions: 0: aOL aOR aLi  # one line per agent (names or a count)
    observations: 0: oHL oHR
    horizon: 3
    start: 0.5 0.5

Body lines (``*`` is a wildcard for a whole field or for one agent's
component; states and per-agent elements may be given by name or index)::

    T: <joint action> : <s> : <s'> : <prob>
    O: <joint action> : <s'> : <joint observation> : <prob>
    R: <joint action> : <s> : <value>

``#`` starts a comment.  Unspecified probabilities and rewards are 0 and
later lines override earlier ones.  Numbers are written with ``repr`` so
an export re-parses to bit-identical tables.
"""

from __future__ import annotations

import itertools

import numpy as np

from .model import DecPomdp, ModelError


class ParseError(ModelError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _names(tokens: list[str], prefix: str) -> tuple[str, ...]:
    if len(tokens) == 1 and tokens[0].isdigit():
        return tuple(f"{prefix}{i}" for i in range(int(tokens[0])))
    if len(set(tokens)) != len(tokens):
        raise ValueError("duplicate names")
    return tuple(tokens)


def _lookup(token: str, names: tuple[str, ...], what: str) -> list[int]:
    if token == "*":
        return list(range(len(names)))
    if token in names:
        return [names.index(token)]
    if token.isdigit() and int(token) < len(names):
        return [int(token)]
    raise ValueError(f"unknown {what} {token!r}")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.n_agents: int | None = None
        self.states: tuple[str, ...] | None = None
        self.actions: dict[int, tuple[str, ...]] = {}
        self.observations: dict[int, tuple[str, ...]] = {}
        self.horizon: int | None = None
        self.start: np.ndarray | None = None
        self.body: list[tuple[int, str, list[str]]] = []

    def _number(self, token: str, line: int) -> float:
        try:
            return float(token)
        except ValueError:
            raise ParseError(line, f"expected a number, got {token!r}") from None

    def _per_agent(self, rest: str, line: int, table: dict, prefix: str):
        if ":" not in rest:
            raise ParseError(line, "expected '<agent>: <names>'")
        agent, names = rest.split(":", 1)
        try:
            i = int(agent)
        except ValueError:
            raise ParseError(line, f"bad agent index {agent.strip()!r}") from None
        if self.n_agents is None:
            raise ParseError(line, "'agents:' must precede per-agent sets")
        if not 0 <= i < self.n_agents:
            raise ParseError(line, f"agent index {i} out of range")
        try:
            table[i] = _names(names.split(), prefix)
        except ValueError as e:
            raise ParseError(line, str(e)) from None
        if not table[i]:
            raise ParseError(line, "empty set")

    def parse(self) -> DecPomdp:
        for no, raw in enumerate(self.text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise ParseError(no, f"cannot parse {line!r}")
            key, rest = line.split(":", 1)
            key = key.strip()
            if key == "agents":
                try:
                    self.n_agents = int(rest)
                except ValueError:
                    raise ParseError(no, "agent count must be an integer") from None
                if self.n_agents < 1:
                    raise ParseError(no, "need at least one agent")
            elif key == "states":
                try:
                    self.states = _names(rest.split(), "s")
                except ValueError as e:
                    raise ParseError(no, str(e)) from None
            elif key == "actions":
                self._per_agent(rest, no, self.actions, "a")
            elif key == "observations":
                self._per_agent(rest, no, self.observations, "o")
            elif key == "horizon":
                try:
                    self.horizon = int(rest)
                except ValueError:
                    raise ParseError(no, "horizon must be an integer") from None
            elif key == "start":
                self.start = np.array([self._number(x, no) for x in rest.split()])
            elif key in ("T", "O", "R"):
                self.body.append((no, key, [f.strip() for f in rest.split(":")]))
            else:
                raise ParseError(no, f"unknown keyword {key!r}")
        return self._build()

    def _joint(self, field: str, sets: list[tuple[str, ...]], line: int, what: str):
        tokens = field.split()
        if tokens == ["*"]:
            tokens = ["*"] * len(sets)
        if len(tokens) != len(sets):
            raise ParseError(line, f"joint {what} needs {len(sets)} components")
        try:
            choices = [_lookup(tok, names, what) for tok, names in zip(tokens, sets)]
        except ValueError as e:
            raise ParseError(line, str(e)) from None
        return [
            int(np.ravel_multi_index(c, [len(s) for s in sets]))
            for c in itertools.product(*choices)
        ]

    def _state(self, field: str, line: int) -> list[int]:
        if len(field.split()) != 1:
            raise ParseError(line, f"expected one state, got {field!r}")
        try:
            return _lookup(field, self.states, "state")
        except ValueError as e:
            raise ParseError(line, str(e)) from None

    def _build(self) -> DecPomdp:
        last = len(self.text.splitlines())
        for what, value in (("agents", self.n_agents), ("states", self.states),
                            ("horizon", self.horizon), ("start", self.start)):
            if value is None:
                raise ParseError(last, f"missing '{what}:' header")
        for what, table in (("actions", self.actions), ("observations", self.observations)):
            missing = [i for i in range(self.n_agents) if i not in table]
            if missing:
                raise ParseError(last, f"missing '{what}:' for agent {missing[0]}")
        acts = [self.actions[i] for i in range(self.n_agents)]
        obs = [self.observations[i] for i in range(self.n_agents)]
        n_s = len(self.states)
        n_ja = int(np.prod([len(a) for a in acts]))
        n_jo = int(np.prod([len(o) for o in obs]))
        T = np.zeros((n_s, n_ja, n_s))
        O = np.zeros((n_ja, n_s, n_jo))
        R = np.zeros((n_s, n_ja))
        for no, key, fields in self.body:
            expected = 3 if key == "R" else 4
            if len(fields) != expected:
                raise ParseError(no, f"{key} line needs {expected} ':'-separated fields")
            jas = self._joint(fields[0], acts, no, "action")
            if key == "T":
                ss, ss2 = self._state(fields[1], no), self._state(fields[2], no)
                p = self._number(fields[3], no)
                T[np.ix_(ss, jas, ss2)] = p
            elif key == "O":
                ss2 = self._state(fields[1], no)
                jos = self._joint(fields[2], obs, no, "observation")
                O[np.ix_(jas, ss2, jos)] = self._number(fields[3], no)
            else:
                ss = self._state(fields[1], no)
                R[np.ix_(ss, jas)] = self._number(fields[2], no)
        if self.start.size != n_s:
            raise ModelError(f"start has {self.start.size} entries for {n_s} states")
        return DecPomdp(
            states=self.states,
            actions=tuple(acts),
            observations=tuple(obs),
            transition=T,
            observation=O,
            reward=R,
            horizon=self.horizon,
            initial_belief=self.start,
        )


def load_problem(text: str) -> DecPomdp:
    """Parse and validate a problem file."""
    return _Parser(text).parse()


def _check_name(name: str) -> str:
    if not name or any(c in name for c in " \t:#*\n") or name.isdigit():
        raise ModelError(f"name {name!r} cannot be written to a problem file")
    return name


def export_problem(model: DecPomdp) -> str:
    """Problem-file text that re-parses to an identical model."""
    m = model
    lines = []
    if m.name:
        lines.append(f"# {m.name}")
    lines.append(f"agents: {m.num_agents}")
    lines.append("states: " + " ".join(_check_name(s) for s in m.states))
    for i, names in enumerate(m.actions):
        lines.append(f"actions: {i}: " + " ".join(_check_name(a) for a in names))
    for i, names in enumerate(m.observations):
        lines.append(f"observations: {i}: " + " ".join(_check_name(o) for o in names))
    lines.append(f"horizon: {m.horizon}")
    lines.append("start: " + " ".join(repr(float(p)) for p in m.initial_belief))

    def joint(names, comps):
        return " ".join(names[i][c] for i, c in enumerate(comps))

    for s, ja, s2 in zip(*np.nonzero(m.transition)):
        a = joint(m.actions, m.action_components(int(ja)))
        lines.append(f"T: {a} : {m.states[s]} : {m.states[s2]} : {float(m.transition[s, ja, s2])!r}")
    for ja, s2, jo in zip(*np.nonzero(m.observation)):
        a = joint(m.actions, m.action_components(int(ja)))
        o = joint(m.observations, m.observation_components(int(jo)))
        lines.append(f"O: {a} : {m.states[s2]} : {o} : {float(m.observation[ja, s2, jo])!r}")
    for s, ja in zip(*np.nonzero(m.reward)):
        a = joint(m.actions, m.action_components(int(ja)))
        lines.append(f"R: {a} : {m.states[s]} : {float(m.reward[s, ja])!r}")
    return "\n".join(lines) + "\n"
