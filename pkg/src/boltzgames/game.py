"""Markov game data model: joint-state indexing, transition kernels, file I/O.

A game couples M agents on a product state space. Each agent i has its own
finite state component x_i; the joint state is the tuple (x_0, ..., x_{M-1}),
linearized row-major with agent 0 outermost. All agents share one action set
of size A; a joint action (a_0, ..., a_{M-1}) is linearized the same way.

The transition kernel maps (joint state, joint action) rows to distributions
over next joint states. Rows are stored either as one dense 2-D array of shape
(n_joint_states * n_joint_actions, n_joint_states) or, above a size budget, as
a scipy CSR matrix of the same shape holding only the nonzeros.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .validation import (
    PROB_TOL,
    GameFormatError,
    GameValidationError,
    check_probability_vector,
)

# Dense kernels are kept below this many stored entries; bigger games switch
# to the sparse backing automatically.
DENSE_ENTRY_BUDGET = 2**25

GAME_FORMAT = "boltzgames-game"
GAME_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# joint indexing
# ---------------------------------------------------------------------------

def joint_index(components, sizes) -> int:
    """Flat index of per-agent components, row-major, agent 0 outermost."""
    components = tuple(int(c) for c in components)
    sizes = tuple(int(s) for s in sizes)
    if len(components) != len(sizes):
        raise ValueError(
            f"expected {len(sizes)} components, got {len(components)}"
        )
    for k, (c, s) in enumerate(zip(components, sizes)):
        if not 0 <= c < s:
            raise ValueError(f"component {k} = {c} out of range [0, {s})")
    return int(np.ravel_multi_index(components, sizes))


def joint_components(index, sizes) -> tuple:
    """Inverse of :func:`joint_index`."""
    n = int(np.prod(sizes))
    if not 0 <= int(index) < n:
        raise ValueError(f"flat index {index} out of range [0, {n})")
    return tuple(int(c) for c in np.unravel_index(int(index), sizes))


@dataclass(frozen=True)
class JointState:
    """A joint state held both ways: per-agent components and flat index."""

    components: tuple
    flat_index: int

    @classmethod
    def from_components(cls, components, sizes) -> "JointState":
        comps = tuple(int(c) for c in components)
        return cls(comps, joint_index(comps, sizes))

    @classmethod
    def from_flat(cls, index, sizes) -> "JointState":
        return cls(joint_components(index, sizes), int(index))


def action_profile_index(actions, n_agents, n_actions) -> int:
    """Flat index of a joint action profile (same row-major convention)."""
    return joint_index(actions, (n_actions,) * n_agents)


def action_profile_components(index, n_agents, n_actions) -> tuple:
    return joint_components(index, (n_actions,) * n_agents)


# ---------------------------------------------------------------------------
# transition kernel
# ---------------------------------------------------------------------------

class TransitionKernel:
    """Row-stochastic kernel over (joint state, joint action) pairs.

    Row r = x * n_joint_actions + a encodes P(. | x, a). The backing is either
    a dense float64 array or a CSR matrix; both expose the same operations.
    """

    def __init__(self, matrix, n_states: int, n_action_profiles: int):
        n_rows = n_states * n_action_profiles
        if matrix.shape != (n_rows, n_states):
            raise ValueError(
                f"kernel shape {matrix.shape} does not match "
                f"({n_rows}, {n_states})"
            )
        if sp.issparse(matrix):
            matrix = matrix.tocsr()
            matrix.data.flags.writeable = False
        else:
            matrix = np.ascontiguousarray(matrix, dtype=float)
            matrix.flags.writeable = False
        self.matrix = matrix
        self.n_states = int(n_states)
        self.n_action_profiles = int(n_action_profiles)

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_dense(cls, table, n_states, n_action_profiles) -> "TransitionKernel":
        """Build from a dense [state][action profile][next state] table."""
        arr = np.asarray(table, dtype=float)
        expected = (n_states, n_action_profiles, n_states)
        if arr.shape != expected:
            raise ValueError(f"dense table shape {arr.shape}, expected {expected}")
        return cls(arr.reshape(n_states * n_action_profiles, n_states),
                   n_states, n_action_profiles)

    @classmethod
    def from_entries(cls, entries, n_states, n_action_profiles) -> "TransitionKernel":
        """Build from (state, action profile, next state, prob) nonzeros.

        Chooses the dense backing when the full table fits the entry budget,
        CSR otherwise. Duplicate coordinates are summed.
        """
        rows, cols, vals = [], [], []
        for x, a, xp, p in entries:
            rows.append(int(x) * n_action_profiles + int(a))
            cols.append(int(xp))
            vals.append(float(p))
        coo = sp.coo_matrix(
            (vals, (rows, cols)),
            shape=(n_states * n_action_profiles, n_states),
        )
        total = n_states * n_action_profiles * n_states
        if total <= DENSE_ENTRY_BUDGET:
            return cls(coo.toarray(), n_states, n_action_profiles)
        return cls(coo.tocsr(), n_states, n_action_profiles)

    # -- queries -----------------------------------------------------------

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def row(self, state, action_profile) -> np.ndarray:
        """Dense distribution over next joint states for one (x, a) pair."""
        r = int(state) * self.n_action_profiles + int(action_profile)
        if self.is_sparse:
            return self.matrix[r].toarray().ravel()
        return np.array(self.matrix[r])

    def row_sums(self) -> np.ndarray:
        if self.is_sparse:
            return np.asarray(self.matrix.sum(axis=1)).ravel()
        return self.matrix.sum(axis=1)

    def min_entry(self) -> float:
        if self.is_sparse:
            return float(self.matrix.data.min()) if self.matrix.nnz else 0.0
        return float(self.matrix.min())

    def expected_values(self, values) -> np.ndarray:
        """E[v(x') | x, a] for every row, shaped (n_states, n_action_profiles)."""
        out = self.matrix @ np.asarray(values, dtype=float)
        return np.asarray(out).reshape(self.n_states, self.n_action_profiles)

    def propagate(self, row_weights) -> np.ndarray:
        """Push row weights forward: sum_r w_r * P(. | r), shaped (n_states,)."""
        w = np.asarray(row_weights, dtype=float).ravel()
        out = self.matrix.T @ w
        return np.asarray(out).ravel()

    def iter_entries(self):
        """Yield (state, action profile, next state, prob) nonzeros."""
        if self.is_sparse:
            coo = self.matrix.tocoo()
            for r, c, v in zip(coo.row, coo.col, coo.data):
                yield int(r) // self.n_action_profiles, \
                    int(r) % self.n_action_profiles, int(c), float(v)
        else:
            for r, c in zip(*np.nonzero(self.matrix)):
                yield int(r) // self.n_action_profiles, \
                    int(r) % self.n_action_profiles, int(c), \
                    float(self.matrix[r, c])


# ---------------------------------------------------------------------------
# the game itself
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkovGame:
    """An M-agent Markov game with a shared action set.

    Exactly one of ``gamma`` (discounted, infinite horizon) and ``horizon``
    (undiscounted, finite horizon) is set. Rewards are per-agent tables
    R_i(joint state, own action); final rewards, when present, are per-agent
    vectors over joint states and are only meaningful in the finite mode.

    Instances are treated as immutable after :func:`validate_game`; all
    arrays are marked read-only.
    """

    n_agents: int
    state_sizes: tuple
    n_actions: int
    transition: TransitionKernel
    rewards: tuple
    beta: float = 1.0
    gamma: float = None
    horizon: int = None
    final_rewards: tuple = None
    p0: np.ndarray = None
    name: str = ""

    @property
    def n_joint_states(self) -> int:
        return int(np.prod(self.state_sizes))

    @property
    def n_action_profiles(self) -> int:
        return self.n_actions ** self.n_agents

    @property
    def is_finite_horizon(self) -> bool:
        return self.horizon is not None

    def agent_range(self):
        return range(self.n_agents)

    def state_components(self, flat_index) -> tuple:
        return joint_components(flat_index, self.state_sizes)

    def state_index(self, components) -> int:
        return joint_index(components, self.state_sizes)

    def with_beta(self, beta: float) -> "MarkovGame":
        return validate_game(dataclasses.replace(self, beta=float(beta)))


def _freeze(arr) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.flags.writeable = False
    return arr


def validate_game(game: MarkovGame, tol: float = PROB_TOL) -> MarkovGame:
    """Check every structural and stochastic constraint; return the game.

    Raises GameValidationError naming the offending field. Also normalizes
    array fields to read-only float64 arrays.
    """
    try:
        m = int(game.n_agents)
        if m < 1:
            raise ValueError(f"n_agents must be >= 1, got {m}")
        sizes = tuple(int(s) for s in game.state_sizes)
        if len(sizes) != m or any(s < 1 for s in sizes):
            raise ValueError(f"state_sizes must be {m} positive ints, got {sizes}")
        n_actions = int(game.n_actions)
        if n_actions < 1:
            raise ValueError(f"n_actions must be >= 1, got {n_actions}")
        if not (game.beta > 0 and np.isfinite(game.beta)):
            raise ValueError(f"beta must be finite and > 0, got {game.beta!r}")

        if (game.gamma is None) == (game.horizon is None):
            raise ValueError("exactly one of gamma and horizon must be set")
        if game.gamma is not None and not 0.0 <= game.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {game.gamma!r}")
        if game.horizon is not None and int(game.horizon) < 1:
            raise ValueError(f"horizon must be >= 1, got {game.horizon!r}")

        n_joint = int(np.prod(sizes))
        n_profiles = n_actions ** m

        rewards = tuple(np.asarray(r, dtype=float) for r in game.rewards)
        if len(rewards) != m:
            raise ValueError(f"rewards must have {m} tables, got {len(rewards)}")
        for i, r in enumerate(rewards):
            if r.shape != (n_joint, n_actions):
                raise ValueError(
                    f"rewards[{i}] has shape {r.shape}, "
                    f"expected {(n_joint, n_actions)}"
                )
            if not np.all(np.isfinite(r)):
                raise ValueError(f"rewards[{i}] contains non-finite values")

        final = game.final_rewards
        if final is not None:
            if game.horizon is None:
                raise ValueError("final_rewards are only valid with a horizon")
            final = tuple(np.asarray(f, dtype=float) for f in final)
            if len(final) != m:
                raise ValueError(
                    f"final_rewards must have {m} vectors, got {len(final)}"
                )
            for i, f in enumerate(final):
                if f.shape != (n_joint,):
                    raise ValueError(
                        f"final_rewards[{i}] has shape {f.shape}, "
                        f"expected {(n_joint,)}"
                    )
                if not np.all(np.isfinite(f)):
                    raise ValueError(
                        f"final_rewards[{i}] contains non-finite values"
                    )

        kernel = game.transition
        if not isinstance(kernel, TransitionKernel):
            raise ValueError("transition must be a TransitionKernel")
        if kernel.n_states != n_joint or kernel.n_action_profiles != n_profiles:
            raise ValueError(
                f"transition indexed for {kernel.n_states} states x "
                f"{kernel.n_action_profiles} action profiles, expected "
                f"{n_joint} x {n_profiles}"
            )
        if kernel.min_entry() < -tol:
            raise ValueError("transition has negative probabilities")
        sums = kernel.row_sums()
        off = np.abs(sums - 1.0)
        if np.any(off > tol):
            r = int(np.argmax(off))
            raise ValueError(
                f"transition row (state {r // n_profiles}, "
                f"profile {r % n_profiles}) sums to {sums[r]!r}"
            )

        if game.p0 is not None:
            p0 = check_probability_vector(game.p0, "p0", tol)
            if p0.shape != (n_joint,):
                raise ValueError(
                    f"p0 has length {p0.shape[0]}, expected {n_joint}"
                )
        else:
            p0 = None
    except GameValidationError:
        raise
    except ValueError as exc:
        raise GameValidationError(str(exc)) from None

    object.__setattr__(game, "n_agents", m)
    object.__setattr__(game, "state_sizes", sizes)
    object.__setattr__(game, "n_actions", n_actions)
    object.__setattr__(game, "beta", float(game.beta))
    if game.gamma is not None:
        object.__setattr__(game, "gamma", float(game.gamma))
    if game.horizon is not None:
        object.__setattr__(game, "horizon", int(game.horizon))
    object.__setattr__(game, "rewards", tuple(_freeze(r) for r in rewards))
    if final is not None:
        object.__setattr__(game, "final_rewards",
                           tuple(_freeze(f) for f in final))
    if p0 is not None:
        object.__setattr__(game, "p0", _freeze(p0))
    return game


def joint_transition_row(game: MarkovGame, state, actions) -> np.ndarray:
    """Distribution over next joint states given a joint state and action.

    ``state`` is a flat joint-state index or a components tuple; ``actions``
    is a flat action-profile index or a per-agent tuple.
    """
    if np.ndim(state) > 0:
        state = game.state_index(state)
    else:
        state = int(state)
        if not 0 <= state < game.n_joint_states:
            raise ValueError(
                f"state {state} out of range [0, {game.n_joint_states})"
            )
    if np.ndim(actions) > 0:
        actions = action_profile_index(actions, game.n_agents, game.n_actions)
    else:
        actions = int(actions)
        if not 0 <= actions < game.n_action_profiles:
            raise ValueError(
                f"action profile {actions} out of range "
                f"[0, {game.n_action_profiles})"
            )
    return game.transition.row(state, actions)


# ---------------------------------------------------------------------------
# joint-tensor utilities shared by the solvers
# ---------------------------------------------------------------------------

def continuation_tensor(game: MarkovGame, values) -> np.ndarray:
    """E[v(x') | x, joint action] reshaped to (n_joint, A, ..., A).

    The M trailing axes follow the agent order, matching the row-major
    action-profile linearization.
    """
    w = game.transition.expected_values(values)
    return w.reshape((game.n_joint_states,) + (game.n_actions,) * game.n_agents)


def opponent_mix(w: np.ndarray, policies, agent: int) -> np.ndarray:
    """Average a joint-action tensor over every agent's policy except one.

    ``w`` has shape (n_states, A, ..., A) with one action axis per agent;
    ``policies[j]`` is agent j's per-state policy (n_states, A). Returns the
    (n_states, A) table indexed by the kept agent's action.
    """
    n_states = w.shape[0]
    out = w
    for j in range(len(policies) - 1, -1, -1):
        if j == agent:
            continue
        axis = 1 + j
        shape = [n_states] + [1] * (out.ndim - 1)
        shape[axis] = policies[j].shape[1]
        out = (out * policies[j].reshape(shape)).sum(axis=axis)
    return out


def joint_action_probabilities(policies) -> np.ndarray:
    """Product policy over action profiles, shape (n_states, A**M)."""
    n_states = policies[0].shape[0]
    out = np.ones((n_states, 1))
    for pol in policies:
        out = (out[:, :, None] * pol[:, None, :]).reshape(n_states, -1)
    return out


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

_TOP_LEVEL_KEYS = {
    "format", "version", "name", "metadata", "agents", "states", "actions",
    "beta", "gamma", "horizon", "p0", "transition", "rewards", "final_rewards",
}


def _rule_kernel(rule, n_joint, n_profiles) -> TransitionKernel:
    if rule == "uniform":
        dense = np.full((n_joint, n_profiles, n_joint), 1.0 / n_joint)
        return TransitionKernel.from_dense(dense, n_joint, n_profiles)
    if rule == "identity":
        dense = np.zeros((n_joint, n_profiles, n_joint))
        for x in range(n_joint):
            dense[x, :, x] = 1.0
        return TransitionKernel.from_dense(dense, n_joint, n_profiles)
    raise GameFormatError(f"transition: unknown rule {rule!r}")


def _parse_transition(spec, n_joint, n_profiles) -> TransitionKernel:
    if isinstance(spec, str):
        return _rule_kernel(spec, n_joint, n_profiles)
    if isinstance(spec, dict):
        if "rule" in spec:
            return _rule_kernel(spec["rule"], n_joint, n_profiles)
        kind = spec.get("kind")
        if kind == "sparse":
            entries = spec.get("entries")
            if not isinstance(entries, list):
                raise GameFormatError("transition.entries must be a list")
            return TransitionKernel.from_entries(entries, n_joint, n_profiles)
        if kind == "dense":
            spec = spec.get("table")
    if isinstance(spec, list):
        arr = np.asarray(spec, dtype=float)
        if arr.shape != (n_joint, n_profiles, n_joint):
            raise GameFormatError(
                f"transition table has shape {arr.shape}, expected "
                f"{(n_joint, n_profiles, n_joint)}"
            )
        return TransitionKernel.from_dense(arr, n_joint, n_profiles)
    raise GameFormatError(
        "transition must be a dense table, a sparse entry dict, or a rule name"
    )


def game_from_dict(doc: dict) -> MarkovGame:
    """Build and validate a game from a parsed game document."""
    if not isinstance(doc, dict):
        raise GameFormatError("game document must be a JSON object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise GameFormatError(f"unknown keys: {sorted(unknown)}")
    for key in ("agents", "states", "actions", "rewards", "transition"):
        if key not in doc:
            raise GameFormatError(f"missing required key: {key}")
    if ("gamma" in doc) == ("horizon" in doc):
        raise GameFormatError("exactly one of gamma and horizon is required")

    try:
        m = int(doc["agents"])
        sizes = tuple(int(s) for s in doc["states"])
        n_actions = int(doc["actions"])
    except (TypeError, ValueError) as exc:
        raise GameFormatError(f"bad agents/states/actions: {exc}") from None
    n_joint = int(np.prod(sizes)) if sizes else 0
    n_profiles = n_actions ** m if m else 0

    p0 = doc.get("p0")
    if isinstance(p0, str):
        if p0 != "uniform":
            raise GameFormatError(f"p0: unknown rule {p0!r}")
        p0 = np.full(n_joint, 1.0 / n_joint)

    game = MarkovGame(
        n_agents=m,
        state_sizes=sizes,
        n_actions=n_actions,
        transition=_parse_transition(doc["transition"], n_joint, n_profiles),
        rewards=tuple(np.asarray(r, dtype=float) for r in doc["rewards"]),
        beta=float(doc.get("beta", 1.0)),
        gamma=None if "gamma" not in doc else float(doc["gamma"]),
        horizon=None if "horizon" not in doc else int(doc["horizon"]),
        final_rewards=(
            None if doc.get("final_rewards") is None
            else tuple(np.asarray(f, dtype=float) for f in doc["final_rewards"])
        ),
        p0=p0,
        name=str(doc.get("name", "")),
    )
    return validate_game(game)


def game_to_dict(game: MarkovGame) -> dict:
    """Serializable document for :func:`game_from_dict` (exact round-trip)."""
    doc = {
        "format": GAME_FORMAT,
        "version": GAME_FORMAT_VERSION,
        "agents": game.n_agents,
        "states": list(game.state_sizes),
        "actions": game.n_actions,
        "beta": game.beta,
        "rewards": [r.tolist() for r in game.rewards],
    }
    if game.name:
        doc["name"] = game.name
    if game.gamma is not None:
        doc["gamma"] = game.gamma
    else:
        doc["horizon"] = game.horizon
    if game.final_rewards is not None:
        doc["final_rewards"] = [f.tolist() for f in game.final_rewards]
    if game.p0 is not None:
        doc["p0"] = game.p0.tolist()
    kernel = game.transition
    if kernel.is_sparse:
        doc["transition"] = {
            "kind": "sparse",
            "entries": [list(e) for e in kernel.iter_entries()],
        }
    else:
        doc["transition"] = kernel.matrix.reshape(
            kernel.n_states, kernel.n_action_profiles, kernel.n_states
        ).tolist()
    return doc


def save_game(game: MarkovGame, path) -> None:
    with open(path, "w") as fh:
        json.dump(game_to_dict(game), fh)
        fh.write("\n")


def load_game(source) -> MarkovGame:
    """Load a game from a JSON file path or a built-in environment name."""
    from . import envs

    name = str(source)
    if name in envs.ENVIRONMENTS:
        return envs.build_environment(name)
    try:
        with open(source) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise GameFormatError(
                    f"{source}: invalid JSON at line {exc.lineno} "
                    f"column {exc.colno}: {exc.msg}"
                ) from None
    except FileNotFoundError:
        raise GameFormatError(
            f"{source!r} is neither a built-in environment "
            f"({', '.join(sorted(envs.ENVIRONMENTS))}) nor a readable file"
        ) from None
    try:
        return game_from_dict(doc)
    except GameValidationError as exc:
        raise GameValidationError(f"{source}: {exc}") from None
    except GameFormatError as exc:
        raise GameFormatError(f"{source}: {exc}") from None
