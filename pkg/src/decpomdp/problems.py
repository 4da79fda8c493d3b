"""Built-in benchmark problems."""

from __future__ import annotations

import itertools

import numpy as np

from .model import DecPomdp, ModelError

# --------------------------------------------------------------------------
# Dec-Tiger

_TIGER_ACTIONS = ("aOL", "aOR", "aLi")
_TIGER_OBS = ("oHL", "oHR")
_OPEN_LEFT, _OPEN_RIGHT, _LISTEN = range(3)


def _tiger_reward(state: int, a1: int, a2: int) -> float:
    """Nair et al. reward for tiger position ``state`` (0 = left, 1 = right)."""
    tiger = _OPEN_LEFT if state == 0 else _OPEN_RIGHT
    treasure = _OPEN_RIGHT if state == 0 else _OPEN_LEFT
    pair = {a1, a2}
    if pair == {_LISTEN}:
        return -2.0
    if pair == {treasure}:
        return 20.0
    if pair == {tiger}:
        return -50.0
    if pair == {treasure, _LISTEN}:
        return 9.0
    if pair == {tiger, _LISTEN}:
        return -101.0
    return -100.0  # the agents open different doors


def make_dectiger(horizon: int, initial_belief=(0.5, 0.5)) -> DecPomdp:
    """The decentralized tiger problem."""
    n_ja, n_jo = 9, 4
    T = np.zeros((2, n_ja, 2))
    O = np.zeros((n_ja, 2, n_jo))
    R = np.zeros((2, n_ja))
    hear = np.array([[0.85, 0.15], [0.15, 0.85]])  # hear[state, obs]
    for a1, a2 in itertools.product(range(3), repeat=2):
        ja = a1 * 3 + a2
        listen = a1 == _LISTEN and a2 == _LISTEN
        for s in range(2):
            R[s, ja] = _tiger_reward(s, a1, a2)
            if listen:
                T[s, ja, s] = 1.0
            else:
                T[s, ja, :] = 0.5
            for o1, o2 in itertools.product(range(2), repeat=2):
                O[ja, s, o1 * 2 + o2] = (
                    hear[s, o1] * hear[s, o2] if listen else 0.25
                )
    return DecPomdp(
        states=("sL", "sR"),
        actions=(_TIGER_ACTIONS, _TIGER_ACTIONS),
        observations=(_TIGER_OBS, _TIGER_OBS),
        transition=T,
        observation=O,
        reward=R,
        horizon=horizon,
        initial_belief=np.asarray(initial_belief, dtype=np.float64),
        name="dectiger",
    )


def make_skewed_dectiger(horizon: int) -> DecPomdp:
    """Dec-Tiger with the tiger initially on the left with probability 0.8."""
    return make_dectiger(horizon, initial_belief=(0.8, 0.2)).replace(
        name="skewed-dectiger"
    )


# --------------------------------------------------------------------------
# FireFighting

_FLAME_PROB = (0.2, 0.5, 0.8)


def _house_transition(level: int, n_present: int, neighbor_burning: bool, nf: int):
    """Distribution over the next fire level of a single house."""
    top = nf - 1
    dist = np.zeros(nf)
    if n_present >= 2:
        dist[0] = 1.0
    elif n_present == 1:
        if level == 0:
            dist[0] = 1.0
        elif neighbor_burning:
            dist[level - 1] += 0.6
            dist[level] += 0.4
        else:
            dist[level - 1] = 1.0
    else:
        if level == 0:
            p = 0.8 if neighbor_burning else 0.0
            dist[min(1, top)] += p
            dist[0] += 1.0 - p
        else:
            p = 0.8 if neighbor_burning else 0.4
            dist[min(level + 1, top)] += p
            dist[level] += 1.0 - p
    return dist


def make_firefighting(
    n_houses: int = 3, n_firelevels: int = 3, n_agents: int = 2, horizon: int = 3
) -> DecPomdp:
    """Fire fighters choosing which house in a row to fight fires at."""
    if n_agents != 2:
        raise ModelError("FireFighting is only defined for 2 agents")
    if n_houses < 2 or n_firelevels < 2:
        raise ModelError("FireFighting needs >= 2 houses and >= 2 fire levels")
    nh, nf = n_houses, n_firelevels
    levels = list(itertools.product(range(nf), repeat=nh))
    n_s = len(levels)
    n_ja = nh * nh
    T = np.zeros((n_s, n_ja, n_s))
    for s, fire in enumerate(levels):
        for a1, a2 in itertools.product(range(nh), repeat=2):
            ja = a1 * nh + a2
            dist = np.ones(1)
            for h in range(nh):
                present = (a1 == h) + (a2 == h)
                neighbor = any(
                    fire[n] > 0 for n in (h - 1, h + 1) if 0 <= n < nh
                )
                house = _house_transition(fire[h], present, neighbor, nf)
                dist = np.multiply.outer(dist, house).reshape(-1)
            T[s, ja] = dist
    cost = -np.array([sum(f) for f in levels], dtype=np.float64)
    R = T @ cost
    O = np.zeros((n_ja, n_s, 4))
    for s, fire in enumerate(levels):
        for a1, a2 in itertools.product(range(nh), repeat=2):
            p1 = _FLAME_PROB[min(fire[a1], 2)]
            p2 = _FLAME_PROB[min(fire[a2], 2)]
            probs1, probs2 = (p1, 1 - p1), (p2, 1 - p2)
            for o1, o2 in itertools.product(range(2), repeat=2):
                O[a1 * nh + a2, s, o1 * 2 + o2] = probs1[o1] * probs2[o2]
    acts = tuple(f"H{h + 1}" for h in range(nh))
    obs = ("flames", "none")
    return DecPomdp(
        states=tuple("f" + "".join(map(str, f)) for f in levels),
        actions=(acts, acts),
        observations=(obs, obs),
        transition=T,
        observation=O,
        reward=R,
        horizon=horizon,
        initial_belief=np.full(n_s, 1.0 / n_s),
        name=f"firefighting-{nh}-{nf}",
    )


# --------------------------------------------------------------------------
# BroadcastChannel


def make_broadcast_channel(
    horizon: int, refill=(0.9, 0.1), accuracy: float = 0.8
) -> DecPomdp:
    """Two nodes sharing a channel; a message gets through iff exactly one
    node with a full buffer transmits.

    State: (buffer of node 1, buffer of node 2), each full or empty; both
    start full.  Sending empties a full buffer; an empty buffer is refilled
    at the end of the step with the node's arrival probability.  Each node
    observes its own buffer after the step, correctly with probability
    ``accuracy``.
    """
    states = ("ee", "ef", "fe", "ff")  # node-1 buffer, node-2 buffer
    full = [(s // 2, s % 2) for s in range(4)]
    n_ja = 4
    T = np.zeros((4, n_ja, 4))
    R = np.zeros((4, n_ja))
    for s, (f1, f2) in enumerate(full):
        for a1, a2 in itertools.product(range(2), repeat=2):
            ja = a1 * 2 + a2
            send = (a1 == 0 and f1, a2 == 0 and f2)
            R[s, ja] = 1.0 if send[0] != send[1] else 0.0
            # a buffer is emptied only by a successful transmission
            after = [f1, f2]
            if send[0] != send[1]:
                after[0 if send[0] else 1] = 0
            per_node = []
            for node in range(2):
                if after[node]:
                    per_node.append(np.array([0.0, 1.0]))
                else:
                    p = refill[node]
                    per_node.append(np.array([1.0 - p, p]))
            T[s, ja] = np.multiply.outer(per_node[0], per_node[1]).reshape(-1)
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError("accuracy must lie in [0, 1]")
    O = np.zeros((n_ja, 4, 4))
    for s2, (f1, f2) in enumerate(full):
        # observation index 0 = "full", 1 = "empty"
        per_node = [
            np.array([accuracy, 1.0 - accuracy] if f else [1.0 - accuracy, accuracy])
            for f in (f1, f2)
        ]
        O[:, s2, :] = np.multiply.outer(per_node[0], per_node[1]).reshape(-1)
    acts = ("send", "wait")
    obs = ("full", "empty")
    return DecPomdp(
        states=states,
        actions=(acts, acts),
        observations=(obs, obs),
        transition=T,
        observation=O,
        reward=R,
        horizon=horizon,
        initial_belief=np.array([0.0, 0.0, 0.0, 1.0]),
        name="broadcast-channel",
    )


# --------------------------------------------------------------------------
# Meeting on a 2x2 grid

_MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1), "stay": (0, 0)}


def _grid_move(cell: int, move: str) -> int:
    r, c = divmod(cell, 2)
    dr, dc = _MOVES[move]
    nr, nc = r + dr, c + dc
    if 0 <= nr < 2 and 0 <= nc < 2:
        return nr * 2 + nc
    return cell


def make_grid_small(
    horizon: int,
    success: float = 0.6,
    failure: str = "other",
    start: str = "corners",
    reward_on: str = "next",
    obs_noise: float = 0.0,
) -> DecPomdp:
    """Two robots on a 2x2 grid rewarded for sharing a cell.

    Actions: up, down, left, right, stay.  A move succeeds with probability
    ``success``; otherwise the robot stays (``failure='stay'``) or moves in
    one of the other four directions uniformly (``failure='other'``).  Each
    robot senses whether the wall is on its left or its right (i.e. its
    column), flipped with probability ``obs_noise``.  The robots start in
    diagonally opposite corners and are rewarded (``reward_on='next'``) by
    the probability of sharing a cell after the joint move.
    """
    moves = tuple(_MOVES)
    cell_dist = np.zeros((4, 5, 4))
    for cell in range(4):
        for m, move in enumerate(moves):
            if move == "stay":
                cell_dist[cell, m, cell] = 1.0
                continue
            cell_dist[cell, m, _grid_move(cell, move)] += success
            if failure == "stay":
                cell_dist[cell, m, cell] += 1.0 - success
            elif failure == "other":
                others = [x for x in moves if x != move]
                for x in others:
                    cell_dist[cell, m, _grid_move(cell, x)] += (1 - success) / len(others)
            else:
                raise ValueError(f"unknown failure mode {failure!r}")
    n_s, n_ja = 16, 25
    T = np.zeros((n_s, n_ja, n_s))
    for s in range(n_s):
        c1, c2 = divmod(s, 4)
        for a1, a2 in itertools.product(range(5), repeat=2):
            T[s, a1 * 5 + a2] = np.multiply.outer(
                cell_dist[c1, a1], cell_dist[c2, a2]
            ).reshape(-1)
    meet = np.array([1.0 if s // 4 == s % 4 else 0.0 for s in range(n_s)])
    if reward_on == "current":
        R = np.repeat(meet[:, None], n_ja, axis=1)
    elif reward_on == "next":
        R = T @ meet
    else:
        raise ValueError(f"unknown reward timing {reward_on!r}")
    col_obs = np.array([[1 - obs_noise, obs_noise], [obs_noise, 1 - obs_noise]])
    O = np.zeros((n_ja, n_s, 4))
    for s in range(n_s):
        c1, c2 = divmod(s, 4)
        O[:, s, :] = np.multiply.outer(col_obs[c1 % 2], col_obs[c2 % 2]).reshape(-1)
    b0 = np.zeros(n_s)
    if start == "corners":
        b0[0 * 4 + 3] = 1.0  # robot 1 upper-left, robot 2 lower-right
    elif start == "uniform":
        b0[:] = 1.0 / n_s
    elif start == "same":
        b0[0] = 1.0
    else:
        raise ValueError(f"unknown start {start!r}")
    cells = ("ul", "ur", "ll", "lr")
    obs = ("wall-left", "wall-right")
    return DecPomdp(
        states=tuple(f"{a}-{b}" for a in cells for b in cells),
        actions=(moves, moves),
        observations=(obs, obs),
        transition=T,
        observation=O,
        reward=R,
        horizon=horizon,
        initial_belief=b0,
        name="grid-small",
    )


def random_problem(
    rng: np.random.Generator,
    n_states: int = 2,
    n_actions=(2, 2),
    n_observations=(2, 2),
    horizon: int = 2,
    sparsity: float = 0.0,
) -> DecPomdp:
    """Random Dec-POMDP with Dirichlet tables and uniform rewards in [-1, 1]."""
    n_ja = int(np.prod(n_actions))
    n_jo = int(np.prod(n_observations))

    def simplex(shape):
        x = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
        if sparsity > 0:
            mask = rng.random(x.shape) < sparsity
            mask[..., 0] = False
            x = np.where(mask, 0.0, x)
            x /= x.sum(axis=-1, keepdims=True)
        return x

    return DecPomdp(
        states=tuple(f"s{i}" for i in range(n_states)),
        actions=tuple(tuple(f"a{j}" for j in range(n)) for n in n_actions),
        observations=tuple(tuple(f"o{j}" for j in range(n)) for n in n_observations),
        transition=simplex((n_states, n_ja, n_states)),
        observation=simplex((n_ja, n_states, n_jo)),
        reward=rng.uniform(-1, 1, size=(n_states, n_ja)),
        horizon=horizon,
        initial_belief=rng.dirichlet(np.ones(n_states)),
        name="random",
    )


BUILTIN = {
    "dectiger": lambda h: make_dectiger(h),
    "skewed-dectiger": lambda h: make_skewed_dectiger(h),
    "broadcast": lambda h: make_broadcast_channel(h),
    "gridsmall": lambda h: make_grid_small(h),
}


def make_builtin(spec: str, horizon: int) -> DecPomdp:
    """Build a problem from ``name`` or ``name:p1,p2,...`` syntax."""
    name, _, params = spec.partition(":")
    name = name.strip().lower()
    args = [int(p) for p in params.split(",") if p.strip()] if params else []
    if name == "firefighting":
        if len(args) > 2:
            raise ValueError("firefighting takes at most 2 parameters")
        nh, nf = args + [3, 3][len(args):]
        return make_firefighting(nh, nf, 2, horizon)
    if name in BUILTIN:
        if args:
            raise ValueError(f"problem {name!r} takes no parameters")
        return BUILTIN[name](horizon)
    raise ValueError(
        f"unknown problem {spec!r}; choose from "
        + ", ".join(sorted(list(BUILTIN) + ["firefighting"]))
    )
