"""Built-in game environments and random-game generators.

Shared conventions:

* Grids are row-major with row 0 at the top; cell (r, c) has flat index
  r * n_cols + c.
* The action set is {0 stay, 1 up, 2 down, 3 left, 4 right} everywhere. An
  agent whose move would leave the board (or its allowed region) stays put.
* "Orthogonal" movers use those four compass steps. "Diagonal" movers (the
  two-player pursuit prey) use the same action indices rotated one half-step
  clockwise: up -> up-right, down -> down-left, left -> up-left,
  right -> down-right.
* Pursuit boards are the 3x3 grid with nodes 0-8; the hunter edge set is
  orthogonal, the prey edge set diagonal.

Builders return validated games; all are registered in ENVIRONMENTS under
their command-line names.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .game import (
    DENSE_ENTRY_BUDGET,
    MarkovGame,
    TransitionKernel,
    joint_index,
    validate_game,
)
from .forward_backward import SimplifiedGame, validate_simplified_game
from .validation import check_choice, check_index, check_positive

N_ACTIONS = 5
ACTION_NAMES = ("stay", "up", "down", "left", "right")
ORTHOGONAL_DELTAS = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))
DIAGONAL_DELTAS = ((0, 0), (-1, 1), (1, -1), (-1, -1), (1, 1))


# ---------------------------------------------------------------------------
# movement tables
# ---------------------------------------------------------------------------

def move_table(n_rows: int, n_cols: int, deltas=ORTHOGONAL_DELTAS,
               allowed=None) -> np.ndarray:
    """Deterministic next-cell table, shape (n_cells, n_actions), int.

    Moves that leave the board stay put. When ``allowed`` (an iterable of
    flat cell indices) is given, moves out of the allowed region stay put as
    well, and cells outside the region are absorbing under every action.
    """
    n_cells = n_rows * n_cols
    allowed_mask = None
    if allowed is not None:
        allowed_mask = np.zeros(n_cells, dtype=bool)
        allowed_mask[list(allowed)] = True
    table = np.empty((n_cells, len(deltas)), dtype=int)
    for cell in range(n_cells):
        r, c = divmod(cell, n_cols)
        for a, (dr, dc) in enumerate(deltas):
            nr, nc = r + dr, c + dc
            nxt = nr * n_cols + nc
            if not (0 <= nr < n_rows and 0 <= nc < n_cols):
                nxt = cell
            elif allowed_mask is not None and not (
                    allowed_mask[cell] and allowed_mask[nxt]):
                nxt = cell
            table[cell, a] = nxt
    return table


def one_hot_kernel(next_table: np.ndarray, n_states: int) -> np.ndarray:
    """Deterministic (n_states, n_actions, n_states) kernel from a next table."""
    next_table = np.asarray(next_table, dtype=int)
    kern = np.zeros((next_table.shape[0], next_table.shape[1], n_states))
    rows = np.arange(next_table.shape[0])[:, None]
    acts = np.arange(next_table.shape[1])[None, :]
    kern[rows, acts, next_table] = 1.0
    return kern


# ---------------------------------------------------------------------------
# joint kernels from independent per-agent dynamics
# ---------------------------------------------------------------------------

def deterministic_joint_kernel(next_tables, n_actions: int) -> TransitionKernel:
    """Joint kernel when every agent's own dynamics are deterministic.

    next_tables[i] is agent i's (n_i, n_actions) next-state table; the joint
    next state is componentwise with probability one.
    """
    sizes = tuple(int(t.shape[0]) for t in next_tables)
    m = len(next_tables)
    n_joint = int(np.prod(sizes))
    n_profiles = n_actions ** m
    comps = np.unravel_index(np.arange(n_joint), sizes)
    acts = np.unravel_index(np.arange(n_profiles), (n_actions,) * m)
    nxt = [np.asarray(next_tables[i], dtype=int)[comps[i][:, None],
                                                 acts[i][None, :]]
           for i in range(m)]
    dest = np.ravel_multi_index(nxt, sizes)
    rows = (np.arange(n_joint)[:, None] * n_profiles
            + np.arange(n_profiles)[None, :]).ravel()
    coo = sp.coo_matrix(
        (np.ones(rows.size), (rows, dest.ravel())),
        shape=(n_joint * n_profiles, n_joint),
    )
    if n_joint * n_profiles * n_joint <= DENSE_ENTRY_BUDGET:
        return TransitionKernel(coo.toarray(), n_joint, n_profiles)
    return TransitionKernel(coo.tocsr(), n_joint, n_profiles)


def independent_joint_kernel(own_kernels, n_actions: int) -> TransitionKernel:
    """Joint kernel as the product of per-agent own-state kernels.

    own_kernels[i] is either a deterministic int table (n_i, n_actions) or a
    stochastic array (n_i, n_actions, n_i). With every agent deterministic
    the fast path applies; otherwise outcomes are enumerated per agent and
    multiplied.
    """
    tables = [np.asarray(k) for k in own_kernels]
    if all(t.ndim == 2 for t in tables):
        return deterministic_joint_kernel(tables, n_actions)
    m = len(tables)
    sizes = []
    outcomes = []
    for t in tables:
        if t.ndim == 2:
            n_i = t.shape[0]
            t = one_hot_kernel(t.astype(int), n_i)
        n_i = t.shape[0]
        sizes.append(n_i)
        per_state = [
            [[(int(xp), float(t[x, a, xp])) for xp in np.nonzero(t[x, a])[0]]
             for a in range(n_actions)]
            for x in range(n_i)
        ]
        outcomes.append(per_state)
    sizes = tuple(sizes)
    n_joint = int(np.prod(sizes))
    n_profiles = n_actions ** m
    entries = []
    for x in range(n_joint):
        comps = np.unravel_index(x, sizes)
        for prof, acts in enumerate(
                itertools.product(range(n_actions), repeat=m)):
            combos = [((), 1.0)]
            for i in range(m):
                combos = [
                    (prefix + (xp,), p * q)
                    for prefix, p in combos
                    for xp, q in outcomes[i][comps[i]][acts[i]]
                ]
            for nxt, p in combos:
                entries.append((x, prof, joint_index(nxt, sizes), p))
    return TransitionKernel.from_entries(entries, n_joint, n_profiles)


def _state_reward(values: np.ndarray, n_actions: int) -> np.ndarray:
    """Broadcast a per-joint-state reward vector across own actions."""
    return np.repeat(np.asarray(values, dtype=float)[:, None], n_actions,
                     axis=1)


# ---------------------------------------------------------------------------
# pursuit games (3x3 board, nodes 0-8)
# ---------------------------------------------------------------------------

def build_pursuit_2p(horizon=22, beta=1.0, catch_reward=0.4) -> MarkovGame:
    """Hunter vs prey on the 3x3 board; deterministic, simultaneous moves.

    The hunter moves orthogonally, the prey diagonally, both may stay. The
    hunter earns +catch_reward and the prey -catch_reward whenever they share
    a node; final rewards are zero. Initial placement is uniform over
    distinct node pairs.
    """
    hunter = move_table(3, 3, ORTHOGONAL_DELTAS)
    prey = move_table(3, 3, DIAGONAL_DELTAS)
    kernel = deterministic_joint_kernel([hunter, prey], N_ACTIONS)
    h, p = np.divmod(np.arange(81), 9)
    caught = (h == p).astype(float)
    rewards = (
        _state_reward(catch_reward * caught, N_ACTIONS),
        _state_reward(-catch_reward * caught, N_ACTIONS),
    )
    p0 = np.where(h == p, 0.0, 1.0)
    p0 /= p0.sum()
    game = MarkovGame(
        n_agents=2, state_sizes=(9, 9), n_actions=N_ACTIONS,
        transition=kernel, rewards=rewards, beta=float(beta),
        horizon=int(horizon),
        final_rewards=(np.zeros(81), np.zeros(81)),
        p0=p0, name="pursuit-2p",
    )
    return validate_game(game)


def build_pursuit_3p(initial=(0, 8, 4), horizon=3, beta=1.0) -> MarkovGame:
    """Two hunters and one prey on the 3x3 board, all moving orthogonally.

    Hunter 1's step reward by case: 0 when alone, -15/4 on colliding with
    hunter 2 away from the prey, -10/4 when all three share a node, +5/4 on
    catching the prey alone; hunter 2 symmetric. The prey pays -1/8 whenever
    caught. Final rewards are zero; initial placement is the fixed
    (h1, h2, p) node triple.
    """
    initial = tuple(int(v) for v in initial)
    if len(initial) != 3:
        raise ValueError(f"initial must be (h1, h2, p) nodes, got {initial!r}")
    for v in initial:
        check_index(v, "initial node", 9)
    table = move_table(3, 3, ORTHOGONAL_DELTAS)
    kernel = deterministic_joint_kernel([table, table, table], N_ACTIONS)
    idx = np.arange(729)
    h1, rem = np.divmod(idx, 81)
    h2, p = np.divmod(rem, 9)

    def hunter_reward(own, other):
        r = np.zeros(729)
        r[(own == other) & (own != p)] = -15.0 / 4.0
        r[(own == other) & (own == p)] = -10.0 / 4.0
        r[(own == p) & (own != other)] = 5.0 / 4.0
        return r

    prey_reward = np.where((p == h1) | (p == h2), -1.0 / 8.0, 0.0)
    rewards = (
        _state_reward(hunter_reward(h1, h2), N_ACTIONS),
        _state_reward(hunter_reward(h2, h1), N_ACTIONS),
        _state_reward(prey_reward, N_ACTIONS),
    )
    p0 = np.zeros(729)
    p0[joint_index(initial, (9, 9, 9))] = 1.0
    game = MarkovGame(
        n_agents=3, state_sizes=(9, 9, 9), n_actions=N_ACTIONS,
        transition=kernel, rewards=rewards, beta=float(beta),
        horizon=int(horizon),
        final_rewards=tuple(np.zeros(729) for _ in range(3)),
        p0=p0, name="pursuit-3p",
    )
    return validate_game(game)


# ---------------------------------------------------------------------------
# rabbit-hole game (4x4 board, hole at cell 15)
# ---------------------------------------------------------------------------

RABBIT_HOLE_CELL = 15


def build_rabbit_hole(horizon=12, beta=1.0, prize=0.3,
                      catch_reward=2.0) -> MarkovGame:
    """Fox chases rabbit on a 4x4 grid with a one-time prize hole.

    Agent 0 is the fox (16 cell states); agent 1 is the rabbit, whose state
    is cell + 16 * flag where the flag records that the prize was already
    collected. Standing at the hole with the flag unset pays the rabbit
    +prize once (the flag then sets). Sharing a cell pays the fox
    +catch_reward and the rabbit -catch_reward. Both move orthogonally.
    """
    fox_table = move_table(4, 4, ORTHOGONAL_DELTAS)
    rabbit_table = np.empty((32, N_ACTIONS), dtype=int)
    for cell in range(16):
        for flag in (0, 1):
            new_flag = 1 if cell == RABBIT_HOLE_CELL else flag
            rabbit_table[cell + 16 * flag] = fox_table[cell] + 16 * new_flag
    kernel = deterministic_joint_kernel([fox_table, rabbit_table], N_ACTIONS)

    idx = np.arange(16 * 32)
    fox, rabbit_state = np.divmod(idx, 32)
    rabbit_cell = rabbit_state % 16
    flag = rabbit_state // 16
    caught = (fox == rabbit_cell).astype(float)
    prize_due = ((rabbit_cell == RABBIT_HOLE_CELL) & (flag == 0)).astype(float)
    rewards = (
        _state_reward(catch_reward * caught, N_ACTIONS),
        _state_reward(prize * prize_due - catch_reward * caught, N_ACTIONS),
    )
    p0 = np.where((fox != rabbit_cell) & (flag == 0), 1.0, 0.0)
    p0 /= p0.sum()
    game = MarkovGame(
        n_agents=2, state_sizes=(16, 32), n_actions=N_ACTIONS,
        transition=kernel, rewards=rewards, beta=float(beta),
        horizon=int(horizon),
        final_rewards=(np.zeros(512), np.zeros(512)),
        p0=p0, name="rabbit-hole",
    )
    return validate_game(game)


# ---------------------------------------------------------------------------
# grid games (3x3 boards)
# ---------------------------------------------------------------------------

GRID1_STARTS = (6, 8)
GRID1_GOALS = (2, 0)
GRID2_GOAL = 1


def build_grid_game_1(horizon=8, beta=1.0, goal_reward=30.0,
                      collision_cost=1.0) -> MarkovGame:
    """Two players race to crossed goals on a 3x3 board.

    Player A starts bottom-left (6) aiming top-right (2); player B starts
    bottom-right (8) aiming top-left (0). Standing on the own goal pays
    +goal_reward per step; sharing a cell costs collision_cost each. Moves
    are deterministic and simultaneous.
    """
    table = move_table(3, 3, ORTHOGONAL_DELTAS)
    kernel = deterministic_joint_kernel([table, table], N_ACTIONS)
    a, b = np.divmod(np.arange(81), 9)
    collide = (a == b).astype(float)
    rewards = (
        _state_reward(goal_reward * (a == GRID1_GOALS[0])
                      - collision_cost * collide, N_ACTIONS),
        _state_reward(goal_reward * (b == GRID1_GOALS[1])
                      - collision_cost * collide, N_ACTIONS),
    )
    p0 = np.zeros(81)
    p0[joint_index(GRID1_STARTS, (9, 9))] = 1.0
    game = MarkovGame(
        n_agents=2, state_sizes=(9, 9), n_actions=N_ACTIONS,
        transition=kernel, rewards=rewards, beta=float(beta),
        horizon=int(horizon),
        final_rewards=(np.zeros(81), np.zeros(81)),
        p0=p0, name="grid-1",
    )
    return validate_game(game)


def build_grid_game_2(horizon=8, beta=1.0, goal_reward=2.0,
                      collision_cost=1.0, barrier_success=0.5) -> MarkovGame:
    """Coordination grid game with stochastic barriers (3x3 board).

    Both players start at the bottom corners (6 and 8) and share the goal at
    the top middle (1), worth +goal_reward per step of standing there;
    sharing any cell costs collision_cost each. Moving up out of either
    bottom corner crosses a barrier and succeeds with probability
    barrier_success (otherwise the mover stays); the middle route is free.
    """
    own = one_hot_kernel(move_table(3, 3, ORTHOGONAL_DELTAS), 9)
    for corner, above in ((6, 3), (8, 5)):
        own[corner, 1, :] = 0.0
        own[corner, 1, above] = barrier_success
        own[corner, 1, corner] = 1.0 - barrier_success
    kernel = independent_joint_kernel([own, own], N_ACTIONS)
    a, b = np.divmod(np.arange(81), 9)
    collide = (a == b).astype(float)
    rewards = (
        _state_reward(goal_reward * (a == GRID2_GOAL)
                      - collision_cost * collide, N_ACTIONS),
        _state_reward(goal_reward * (b == GRID2_GOAL)
                      - collision_cost * collide, N_ACTIONS),
    )
    p0 = np.zeros(81)
    p0[joint_index(GRID1_STARTS, (9, 9))] = 1.0
    game = MarkovGame(
        n_agents=2, state_sizes=(9, 9), n_actions=N_ACTIONS,
        transition=kernel, rewards=rewards, beta=float(beta),
        horizon=int(horizon),
        final_rewards=(np.zeros(81), np.zeros(81)),
        p0=p0, name="grid-2",
    )
    return validate_game(game)


# ---------------------------------------------------------------------------
# driving scene (7x7 junction, own-state game)
# ---------------------------------------------------------------------------

DRIVING_ROWS = 7
DRIVING_COLS = 7
DRIVING_SOUTH_LANE = 3   # column, driven north -> south by car 1
DRIVING_NORTH_LANE = 4   # column, driven south -> north by car 3
DRIVING_EAST_ROAD = 3    # row, driven west -> east by car 2
DRIVING_ZEBRA_ROW = 2    # row the pedestrian walks along
DRIVING_AGENT_NAMES = ("car1", "car2", "car3", "pedestrian")


def _cell(r, c):
    return r * DRIVING_COLS + c


DRIVING_STARTS = (_cell(0, 3), _cell(3, 0), _cell(6, 4), _cell(2, 2))
DRIVING_GOALS = (_cell(6, 3), _cell(3, 6), _cell(0, 4), _cell(2, 6))
DRIVING_CROSSING_CELLS = (_cell(2, 3), _cell(2, 4))
DRIVING_JUNCTION_CELLS = (_cell(2, 3), _cell(2, 4), _cell(3, 3), _cell(3, 4))


def build_driving_scene(horizon=12, beta=2.0, mu=(1.0, 1.0, 1.0, 5.0),
                        step_cost=(0.02, 0.02, 0.02, 0.3),
                        goal_bonus=3.0) -> SimplifiedGame:
    """Three cars and a pedestrian negotiate a junction with a zebra crossing.

    A 7x7 grid of shared cells. The vertical road has two one-way lanes:
    car 1 drives south down column 3, car 3 north up column 4; car 2 drives
    east along row 3 through the junction cells (3,3) and (3,4). The
    pedestrian walks east along row 2, crossing both lanes at (2,3) and
    (2,4). Each agent is confined to its lane or row. Step reward is 0 at the
    own goal and -step_cost elsewhere (scalar or one cost per agent; an
    impatient pedestrian has a higher cost than the cars); the final reward
    pays +goal_bonus at the goal. Coupling is the linear occupancy penalty
    weighted by mu (a scalar applies to every agent).
    """
    n = DRIVING_ROWS * DRIVING_COLS
    if np.isscalar(mu):
        mu = (float(mu),) * 4
    else:
        mu = tuple(float(v) for v in mu)
    if len(mu) != 4:
        raise ValueError(f"mu must be a scalar or 4 weights, got {mu!r}")
    if np.isscalar(step_cost):
        step_cost = (float(step_cost),) * 4
    else:
        step_cost = tuple(float(v) for v in step_cost)
    if len(step_cost) != 4:
        raise ValueError(
            f"step_cost must be a scalar or 4 costs, got {step_cost!r}"
        )
    lanes = (
        [_cell(r, DRIVING_SOUTH_LANE) for r in range(DRIVING_ROWS)],
        [_cell(DRIVING_EAST_ROAD, c) for c in range(DRIVING_COLS)],
        [_cell(r, DRIVING_NORTH_LANE) for r in range(DRIVING_ROWS)],
        [_cell(DRIVING_ZEBRA_ROW, c) for c in range(DRIVING_COLS)],
    )
    kernels = tuple(
        one_hot_kernel(
            move_table(DRIVING_ROWS, DRIVING_COLS, ORTHOGONAL_DELTAS,
                       allowed=allowed),
            n,
        )
        for allowed in lanes
    )
    rewards = []
    finals = []
    for goal, cost in zip(DRIVING_GOALS, step_cost):
        step = np.full(n, -cost)
        step[goal] = 0.0
        rewards.append(np.repeat(step[:, None], N_ACTIONS, axis=1))
        final = np.zeros(n)
        final[goal] = float(goal_bonus)
        finals.append(final)
    game = SimplifiedGame(
        n_agents=4, n_states=n, n_actions=N_ACTIONS, kernels=kernels,
        rewards=tuple(rewards), final_rewards=tuple(finals),
        horizon=int(horizon), mu=mu, initial_states=DRIVING_STARTS,
        beta=float(beta), name="driving",
    )
    return validate_simplified_game(game)


# ---------------------------------------------------------------------------
# random generators
# ---------------------------------------------------------------------------

def generate_random_game(n_agents, states_per_agent, n_actions, horizon_mode,
                         reward_scale, seed, *, gamma=0.9, horizon=3,
                         beta=1.0, final_scale=0.0) -> MarkovGame:
    """Reproducible random dense game for benchmarks and property tests.

    Kernel rows are uniform draws normalized to sum to one; step rewards are
    uniform in [-reward_scale, reward_scale] (final rewards likewise with
    final_scale, finite mode only); p0 is uniform. horizon_mode selects
    "infinite" (discount gamma) or "finite" (horizon steps).
    """
    check_positive(reward_scale, "reward_scale")
    check_choice(horizon_mode, "horizon_mode", ("infinite", "finite"))
    m = int(n_agents)
    sizes = (int(states_per_agent),) * m
    n_joint = int(np.prod(sizes))
    n_profiles = int(n_actions) ** m
    if n_joint * n_profiles * n_joint > DENSE_ENTRY_BUDGET:
        raise ValueError(
            f"random game of {n_joint} joint states x {n_profiles} profiles "
            f"exceeds the dense size budget"
        )
    rng = np.random.default_rng(seed)
    table = rng.uniform(size=(n_joint, n_profiles, n_joint))
    table /= table.sum(axis=2, keepdims=True)
    rewards = tuple(
        rng.uniform(-reward_scale, reward_scale, size=(n_joint, n_actions))
        for _ in range(m)
    )
    kwargs = {}
    if horizon_mode == "infinite":
        kwargs["gamma"] = float(gamma)
    else:
        kwargs["horizon"] = int(horizon)
        kwargs["final_rewards"] = tuple(
            rng.uniform(-final_scale, final_scale, size=n_joint)
            if final_scale > 0 else np.zeros(n_joint)
            for _ in range(m)
        )
    game = MarkovGame(
        n_agents=m, state_sizes=sizes, n_actions=int(n_actions),
        transition=TransitionKernel.from_dense(table, n_joint, n_profiles),
        rewards=rewards, beta=float(beta),
        p0=np.full(n_joint, 1.0 / n_joint),
        name=f"random-{seed}", **kwargs,
    )
    return validate_game(game)


def generate_random_simplified_game(n_agents, n_states, n_actions, horizon,
                                    seed, *, mu_scale=0.01, reward_scale=0.1,
                                    final_scale=0.1, beta=1.0) -> SimplifiedGame:
    """Reproducible random own-state game (linear occupancy penalty)."""
    check_positive(reward_scale, "reward_scale")
    m, n, a = int(n_agents), int(n_states), int(n_actions)
    rng = np.random.default_rng(seed)
    kernels = []
    for _ in range(m):
        k = rng.uniform(size=(n, a, n))
        k /= k.sum(axis=2, keepdims=True)
        kernels.append(k)
    rewards = tuple(
        rng.uniform(-reward_scale, reward_scale, size=(n, a)) for _ in range(m)
    )
    finals = tuple(
        rng.uniform(-final_scale, final_scale, size=n)
        if final_scale > 0 else np.zeros(n)
        for _ in range(m)
    )
    mu = tuple(float(v) for v in rng.uniform(0.0, mu_scale, size=m))
    game = SimplifiedGame(
        n_agents=m, n_states=n, n_actions=a, kernels=tuple(kernels),
        rewards=rewards, final_rewards=finals, horizon=int(horizon), mu=mu,
        initial_states=tuple(int(v) for v in rng.integers(0, n, size=m)),
        beta=float(beta), name=f"random-simplified-{seed}",
    )
    return validate_simplified_game(game)


# ---------------------------------------------------------------------------
# event detectors (used by rollout reports)
# ---------------------------------------------------------------------------

def _pursuit_2p_events(states, actions):
    h, p = states[:, 0], states[:, 1]
    return {"hunts": int(np.sum(h == p))}


def _pursuit_3p_events(states, actions):
    h1, h2, p = states[:, 0], states[:, 1], states[:, 2]
    return {
        "hunts": int(np.sum((p == h1) | (p == h2))),
        "hunter_collisions": int(np.sum(h1 == h2)),
    }


def _rabbit_hole_events(states, actions):
    fox = states[:, 0]
    rabbit_cell = states[:, 1] % 16
    flag = states[:, 1] // 16
    return {
        "catches": int(np.sum(fox == rabbit_cell)),
        "prizes": int(np.sum((rabbit_cell == RABBIT_HOLE_CELL) & (flag == 0))),
    }


def _grid_events(goals):
    def detect(states, actions):
        a, b = states[:, 0], states[:, 1]
        return {
            "collisions": int(np.sum(a == b)),
            "goal_steps": int(np.sum(a == goals[0]) + np.sum(b == goals[1])),
        }

    return detect


def _driving_events(states, actions):
    conflicts = 0
    for tau in range(states.shape[0]):
        cells = states[tau]
        for i in range(len(cells)):
            for j in range(i + 1, len(cells)):
                conflicts += int(cells[i] == cells[j])
    return {"conflicts": conflicts}


EVENT_DETECTORS = {
    "pursuit-2p": _pursuit_2p_events,
    "pursuit-3p": _pursuit_3p_events,
    "rabbit-hole": _rabbit_hole_events,
    "grid-1": _grid_events(GRID1_GOALS),
    "grid-2": _grid_events((GRID2_GOAL, GRID2_GOAL)),
    "driving": _driving_events,
}


def detector_for(name: str):
    """Event detector for a built-in environment (empty dict otherwise)."""
    return EVENT_DETECTORS.get(name, lambda states, actions: {})


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvironmentSpec:
    """A named builder plus its default parameters."""

    name: str
    builder: object
    kind: str  # "markov" or "simplified"
    parameters: dict = field(default_factory=dict)
    description: str = ""


ENVIRONMENTS = {
    "pursuit-2p": EnvironmentSpec(
        "pursuit-2p", build_pursuit_2p, "markov",
        {"horizon": 22, "beta": 1.0},
        "hunter (orthogonal) vs prey (diagonal) on a 3x3 board",
    ),
    "pursuit-3p": EnvironmentSpec(
        "pursuit-3p", build_pursuit_3p, "markov",
        {"initial": (0, 8, 4), "horizon": 3, "beta": 1.0},
        "two hunters vs one prey, all orthogonal, on a 3x3 board",
    ),
    "rabbit-hole": EnvironmentSpec(
        "rabbit-hole", build_rabbit_hole, "markov",
        {"horizon": 12, "beta": 1.0},
        "fox vs rabbit on a 4x4 board with a one-time prize hole",
    ),
    "grid-1": EnvironmentSpec(
        "grid-1", build_grid_game_1, "markov",
        {"horizon": 8, "beta": 1.0},
        "two players race to crossed corner goals",
    ),
    "grid-2": EnvironmentSpec(
        "grid-2", build_grid_game_2, "markov",
        {"horizon": 8, "beta": 1.0},
        "coordination game with stochastic barriers and a shared goal",
    ),
    "driving": EnvironmentSpec(
        "driving", build_driving_scene, "simplified",
        {"horizon": 12, "beta": 2.0, "mu": (1.0, 1.0, 1.0, 5.0)},
        "three cars and a pedestrian at a junction (own-state game)",
    ),
}


def build_environment(name: str, **overrides):
    """Build a registered environment, applying parameter overrides."""
    if name not in ENVIRONMENTS:
        raise KeyError(
            f"unknown environment {name!r}; known: "
            f"{', '.join(sorted(ENVIRONMENTS))}"
        )
    spec = ENVIRONMENTS[name]
    params = dict(spec.parameters)
    params.update(overrides)
    return spec.builder(**params)
