"""Occupancy-measure forward-backward solver for simplified Markov games.

In the simplified model each agent moves on its OWN copy of a shared state
space under its own kernel; the only coupling is a penalty functional of the
opponents' occupancy measures added to the per-step reward. Planning
alternates two exact passes:

  forward   O_i^{tau+1}(x) = sum_{x', a} pi_i^tau(a | x') P_i(x | x', a) O_i^tau(x')
  backward  Q_i^tau(x, a)  = R_i(x, a) + Psi_i(O_-i^tau)(x)
                              + sum_{x'} P_i(x' | x, a) V_i^{tau+1}(x')

with pi the Boltzmann policy of Q, V the soft value, the backward boundary
after the last decision equal to the final reward (held as a Q table constant
across actions), and delta occupancies at tau = 0. Decisions happen at
tau = 0..T; the terminal state at T+1 collects the final reward.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .softmax import boltzmann_policy, soft_value
from .validation import GameValidationError, check_stochastic_rows


# ---------------------------------------------------------------------------
# interaction functionals
# ---------------------------------------------------------------------------

class InteractionFunctional:
    """Maps a set of opponent occupancy vectors to a per-state penalty."""

    kind = "abstract"

    def penalty(self, occupancies) -> np.ndarray:
        raise NotImplementedError

    def lipschitz_constant(self) -> float:
        """L with ||Psi(O) - Psi(O')||_inf <= L * max_j ||O_j - O'_j||_inf."""
        raise NotImplementedError

    def sup_bound(self) -> float:
        """An upper bound on ||Psi(O)||_inf over distributions O."""
        raise NotImplementedError


@dataclass(frozen=True)
class LinearPenalty(InteractionFunctional):
    """Psi(O_1..O_k)(x) = -sum_j weights[j] * O_j(x), weights > 0."""

    weights: tuple

    kind = "linear_penalty"

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if any(v < 0 or not np.isfinite(v) for v in w):
            raise ValueError(f"penalty weights must be >= 0, got {w}")
        object.__setattr__(self, "weights", w)

    def penalty(self, occupancies) -> np.ndarray:
        occ = [np.asarray(o, dtype=float) for o in occupancies]
        if len(occ) != len(self.weights):
            raise ValueError(
                f"{len(occ)} occupancy vectors for {len(self.weights)} weights"
            )
        if not occ:
            return np.zeros(0)
        out = np.zeros_like(occ[0])
        for w, o in zip(self.weights, occ):
            out -= w * o
        return out

    def lipschitz_constant(self) -> float:
        return float(sum(self.weights))

    def sup_bound(self) -> float:
        # each occupancy is a distribution, so |O_j(x)| <= 1 pointwise
        return float(sum(self.weights))


def interaction_penalty(functional: InteractionFunctional, occupancies):
    """Apply a functional to opponent occupancies (free-function form)."""
    return functional.penalty(occupancies)


# ---------------------------------------------------------------------------
# the simplified game
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplifiedGame:
    """Own-state game: shared state space, per-agent kernels and rewards.

    kernels[i][x, a, x'] is agent i's own transition; rewards[i] is its
    (n_states, n_actions) step table and final_rewards[i] its terminal
    vector. mu[j] weighs how strongly OTHER agents avoid agent j's occupancy
    (linear penalty). Decisions happen at tau = 0..horizon.
    """

    n_agents: int
    n_states: int
    n_actions: int
    kernels: tuple
    rewards: tuple
    final_rewards: tuple
    horizon: int
    mu: tuple
    initial_states: tuple
    beta: float = 1.0
    name: str = ""

    def penalty_for(self, agent: int) -> LinearPenalty:
        """The linear penalty an agent faces from its opponents."""
        return LinearPenalty(
            tuple(self.mu[j] for j in range(self.n_agents) if j != agent)
        )

    def opponent_indices(self, agent: int) -> list:
        return [j for j in range(self.n_agents) if j != agent]


def validate_simplified_game(game: SimplifiedGame) -> SimplifiedGame:
    """Structural and stochastic checks; returns the game with frozen arrays."""
    try:
        m = int(game.n_agents)
        n = int(game.n_states)
        a = int(game.n_actions)
        if m < 1 or n < 1 or a < 1:
            raise ValueError("n_agents, n_states, n_actions must be >= 1")
        if int(game.horizon) < 0:
            raise ValueError(f"horizon must be >= 0, got {game.horizon!r}")
        if not (game.beta > 0 and np.isfinite(game.beta)):
            raise ValueError(f"beta must be finite and > 0, got {game.beta!r}")

        kernels = []
        for i, k in enumerate(game.kernels):
            arr = np.asarray(k, dtype=float)
            if arr.shape != (n, a, n):
                raise ValueError(
                    f"kernels[{i}] has shape {arr.shape}, expected {(n, a, n)}"
                )
            check_stochastic_rows(arr, f"kernels[{i}]")
            kernels.append(arr)
        if len(kernels) != m:
            raise ValueError(f"expected {m} kernels, got {len(kernels)}")

        rewards = [np.asarray(r, dtype=float) for r in game.rewards]
        if len(rewards) != m or any(r.shape != (n, a) for r in rewards):
            raise ValueError(f"rewards must be {m} tables of shape {(n, a)}")
        final = [np.asarray(f, dtype=float) for f in game.final_rewards]
        if len(final) != m or any(f.shape != (n,) for f in final):
            raise ValueError(f"final_rewards must be {m} vectors of length {n}")
        for name, tables in (("rewards", rewards), ("final_rewards", final)):
            for i, t in enumerate(tables):
                if not np.all(np.isfinite(t)):
                    raise ValueError(f"{name}[{i}] contains non-finite values")

        mu = tuple(float(v) for v in game.mu)
        if len(mu) != m or any(v < 0 or not np.isfinite(v) for v in mu):
            raise ValueError(f"mu must be {m} finite nonnegative weights")
        inits = tuple(int(s) for s in game.initial_states)
        if len(inits) != m or any(not 0 <= s < n for s in inits):
            raise ValueError(f"initial_states must be {m} indices in [0, {n})")
    except GameValidationError:
        raise
    except ValueError as exc:
        raise GameValidationError(str(exc)) from None

    def freeze(arr):
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        return arr

    object.__setattr__(game, "n_agents", m)
    object.__setattr__(game, "n_states", n)
    object.__setattr__(game, "n_actions", a)
    object.__setattr__(game, "horizon", int(game.horizon))
    object.__setattr__(game, "beta", float(game.beta))
    object.__setattr__(game, "kernels", tuple(freeze(k) for k in kernels))
    object.__setattr__(game, "rewards", tuple(freeze(r) for r in rewards))
    object.__setattr__(game, "final_rewards", tuple(freeze(f) for f in final))
    object.__setattr__(game, "mu", mu)
    object.__setattr__(game, "initial_states", inits)
    return game


# ---------------------------------------------------------------------------
# the two passes
# ---------------------------------------------------------------------------

def occupancy_forward_step(game: SimplifiedGame, agent: int, occupancy,
                           q) -> np.ndarray:
    """Push one agent's occupancy through its Boltzmann policy and kernel."""
    occ = np.asarray(occupancy, dtype=float)
    pol = boltzmann_policy(q, game.beta)
    flow = occ[:, None] * pol
    return np.tensordot(flow, game.kernels[agent], axes=([0, 1], [0, 1]))


def occupancy_backward_step(game: SimplifiedGame, agent: int, occupancies,
                            q_next) -> np.ndarray:
    """One backward update of an agent's Q table at one decision epoch.

    ``occupancies`` holds ALL agents' occupancy vectors at this epoch (the
    agent's own entry is ignored); ``q_next`` is the agent's next-epoch table,
    whose soft value under its own Boltzmann policy is backed up.
    """
    if not 0 <= agent < game.n_agents:
        raise ValueError(f"agent {agent} out of range [0, {game.n_agents})")
    opp = [occupancies[j] for j in game.opponent_indices(agent)]
    psi = game.penalty_for(agent).penalty(opp) if opp else np.zeros(game.n_states)
    v_next = soft_value(q_next, boltzmann_policy(q_next, game.beta))
    cont = np.tensordot(game.kernels[agent], v_next, axes=([2], [0]))
    return game.rewards[agent] + psi[:, None] + cont


def forward_backward_convergence_bound(game: SimplifiedGame) -> dict:
    """Sufficient condition 2 L T <= xi * exp(-beta (T+1) xi) for convergence.

    omega bounds every reward table's sup norm, phi bounds the penalty, L is
    the penalty's Lipschitz constant, xi = (T+1)(omega + phi). L and phi are
    the per-agent worst case max_i sum_{j != i} mu_j.
    """
    omega = max(
        max(float(np.max(np.abs(r))) for r in game.rewards),
        max(float(np.max(np.abs(f))) for f in game.final_rewards),
    )
    if game.n_agents == 1:
        big_l = phi = 0.0
    else:
        per_agent = [
            game.penalty_for(i).lipschitz_constant()
            for i in range(game.n_agents)
        ]
        big_l = phi = max(per_agent)
    t = game.horizon
    xi = (t + 1) * (omega + phi)
    rhs = xi * np.exp(-game.beta * (t + 1) * xi)
    lhs = 2.0 * big_l * t
    return {
        "satisfied": bool(lhs <= rhs),
        "lhs": float(lhs),
        "rhs": float(rhs),
        "xi": float(xi),
        "L": float(big_l),
        "omega": float(omega),
        "phi": float(phi),
    }


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

@dataclass
class ForwardBackwardTrace:
    """Per-outer-iteration record: sup-norm Q change and occupancy health."""

    deltas: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    occupancy_sum_min: list = field(default_factory=list)
    occupancy_sum_max: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.deltas)


class ForwardBackwardSolver(BaseEstimator):
    """Alternating occupancy/backup solver (solver id mge-fb).

    Runs ``n_iterations`` full alternations of an exact forward occupancy
    pass (from delta occupancies at the initial states) and an exact backward
    Q pass against the current iteration's occupancies. With ``epsilon`` > 0
    the loop stops early once the sup-norm Q change drops below it.

    Fitted attributes:
        q_by_time_: per-agent arrays (T+1, n_states, n_actions).
        occupancies_: per-agent arrays (T+1, n_states).
        policies_by_time_: [tau][agent] Boltzmann policy tables.
        trace_: ForwardBackwardTrace (deltas and occupancy sums per iteration).
        bound_check_: the sufficient-condition report.
    """

    def __init__(self, n_iterations=50, epsilon=0.0, init="zeros",
                 init_scale=1.0, seed=None):
        self.n_iterations = n_iterations
        self.epsilon = epsilon
        self.init = init
        self.init_scale = init_scale
        self.seed = seed

    def _initial_tables(self, game):
        shape = (game.horizon + 1, game.n_states, game.n_actions)
        if self.init == "zeros":
            return [np.zeros(shape) for _ in range(game.n_agents)]
        if self.init == "random":
            rng = np.random.default_rng(self.seed)
            return [
                rng.uniform(-self.init_scale, self.init_scale, size=shape)
                for _ in range(game.n_agents)
            ]
        raise ValueError(f"init must be 'zeros' or 'random', got {self.init!r}")

    def fit(self, game: SimplifiedGame) -> "ForwardBackwardSolver":
        if int(self.n_iterations) < 0:
            raise ValueError(
                f"n_iterations must be >= 0, got {self.n_iterations!r}"
            )
        self.bound_check_ = forward_backward_convergence_bound(game)
        if not self.bound_check_["satisfied"]:
            warnings.warn(
                "outside the sufficient forward-backward convergence "
                "condition (lhs = {lhs:.6g} > rhs = {rhs:.6g}); the "
                "alternation may cycle".format(**self.bound_check_),
                RuntimeWarning,
            )

        m, t = game.n_agents, game.horizon
        q = self._initial_tables(game)
        boundary = [
            np.repeat(f[:, None], game.n_actions, axis=1)
            for f in game.final_rewards
        ]
        occ = [np.zeros((t + 1, game.n_states)) for _ in range(m)]
        for i in range(m):
            occ[i][0, game.initial_states[i]] = 1.0
        trace = ForwardBackwardTrace()

        for _ in range(int(self.n_iterations)):
            t0 = time.perf_counter()
            # forward: exact occupancy propagation from the delta initials
            for i in range(m):
                for tau in range(t):
                    occ[i][tau + 1] = occupancy_forward_step(
                        game, i, occ[i][tau], q[i][tau]
                    )
            sums = np.concatenate([o.sum(axis=1) for o in occ])
            trace.occupancy_sum_min.append(float(sums.min()))
            trace.occupancy_sum_max.append(float(sums.max()))

            # backward: boundary first, then every decision epoch
            delta = 0.0
            for i in range(m):
                occ_at = lambda tau: [occ[j][tau] for j in range(m)]
                new_i = np.empty_like(q[i])
                for tau in range(t, -1, -1):
                    q_next = boundary[i] if tau == t else new_i[tau + 1]
                    new_i[tau] = occupancy_backward_step(
                        game, i, occ_at(tau), q_next
                    )
                delta = max(delta, float(np.max(np.abs(new_i - q[i]))))
                q[i] = new_i
            trace.deltas.append(delta)
            trace.wall_ms.append((time.perf_counter() - t0) * 1e3)
            if self.epsilon and delta < self.epsilon:
                trace.converged = True
                break

        self.q_by_time_ = q
        self.occupancies_ = occ
        self.policies_by_time_ = [
            [boltzmann_policy(q[i][tau], game.beta) for i in range(m)]
            for tau in range(t + 1)
        ]
        self.trace_ = trace
        self.deltas_ = trace.deltas
        self.converged_ = trace.converged
        self.n_agents_ = m
        return self

    def predict(self, states, time_step=0) -> np.ndarray:
        """Argmax action per agent given each agent's OWN state.

        ``states`` is (n, M): one own-state index per agent per row.
        """
        if not hasattr(self, "policies_by_time_"):
            raise NotFittedError("this ForwardBackwardSolver is not fitted yet")
        states = np.atleast_2d(np.asarray(states, dtype=int))
        pols = self.policies_by_time_[time_step]
        return np.stack(
            [np.argmax(pols[i][states[:, i]], axis=-1)
             for i in range(self.n_agents_)],
            axis=1,
        )
