"""Discounted infinite-horizon solver for Boltzmann-exploration Markov games.

Every agent plays the Boltzmann policy of its own Q table. The coupled backup
for agent i maps the stack of all Q tables to a new table for i:

    (T_i Q)(x, a_i) = R_i(x, a_i)
        + gamma * E_{a_-i ~ pi_-i(x), x' ~ P(.|x, a)} [ V_i(x') ]

with V_i the soft value of Q_i under agent i's own Boltzmann policy. A sweep
updates every agent once; iterating sweeps drives the stack to the coupled
fixed point. When every reward table is small enough relative to the
discount, the sweep map is a sup-norm contraction and the fixed point is
unique; `infinite_contraction_bound` evaluates that sufficient condition.
"""

from __future__ import annotations

import dataclasses
import time
import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .game import MarkovGame, continuation_tensor, opponent_mix, validate_game
from .softmax import boltzmann_policy, soft_value, sup_distance
from .trace import SolveTrace

DEFAULT_EPSILON = 1e-8
DEFAULT_MAX_SWEEPS = 100_000


def _require_infinite(game: MarkovGame):
    if game.gamma is None:
        raise ValueError("expected a discounted (gamma) game, got a finite-horizon one")


def infinite_contraction_bound(game: MarkovGame) -> dict:
    """Sufficient condition for the coupled backup to be a contraction.

    Returns {"satisfied", "lhs", "rhs"} where lhs = max_i ||R_i||_inf and
    rhs = (1 - gamma)^2 / (2 * gamma * M * beta). gamma = 0 makes the backup
    trivially contracting; the rhs is reported as +inf in that case.
    """
    _require_infinite(game)
    lhs = max(float(np.max(np.abs(r))) for r in game.rewards)
    if game.gamma == 0.0:
        rhs = np.inf
    else:
        rhs = (1.0 - game.gamma) ** 2 / (
            2.0 * game.gamma * game.n_agents * game.beta
        )
    return {"satisfied": bool(lhs <= rhs), "lhs": lhs, "rhs": float(rhs)}


def scale_rewards_to_contraction(game: MarkovGame, safety: float = 1.0) -> MarkovGame:
    """Rescale all rewards so their sup norm sits at ``safety`` times the bound.

    Works for both horizon modes (using the matching bound); final rewards are
    scaled by the same factor so relative magnitudes are preserved. Returns the
    game unchanged when the bound is infinite or all rewards are zero.
    """
    if not 0 < safety:
        raise ValueError(f"safety must be > 0, got {safety!r}")
    if game.gamma is not None:
        bound = infinite_contraction_bound(game)
    else:
        from .finite_horizon import finite_contraction_bound

        bound = finite_contraction_bound(game)
    lhs, rhs = bound["lhs"], bound["rhs"]
    if lhs == 0.0 or not np.isfinite(rhs):
        return game
    factor = safety * rhs / lhs
    scaled = dataclasses.replace(
        game,
        rewards=tuple(r * factor for r in game.rewards),
        final_rewards=(
            None if game.final_rewards is None
            else tuple(f * factor for f in game.final_rewards)
        ),
    )
    return validate_game(scaled)


def coupled_bellman_update(game: MarkovGame, agent: int, q_tables) -> np.ndarray:
    """One application of the coupled backup T_i to agent ``agent``.

    ``q_tables`` holds every agent's current Q table; opponents' tables set
    their Boltzmann policies, the agent's own table sets the soft value being
    backed up.
    """
    _require_infinite(game)
    if not 0 <= agent < game.n_agents:
        raise ValueError(f"agent {agent} out of range [0, {game.n_agents})")
    policies = [boltzmann_policy(q, game.beta) for q in q_tables]
    v_own = soft_value(q_tables[agent], policies[agent])
    w = continuation_tensor(game, v_own)
    return game.rewards[agent] + game.gamma * opponent_mix(w, policies, agent)


def _backup(game, agent, policies, v_own):
    w = continuation_tensor(game, v_own)
    return game.rewards[agent] + game.gamma * opponent_mix(w, policies, agent)


class InfiniteHorizonSolver(BaseEstimator):
    """Fixed-point solver for the coupled Boltzmann backup (solver id mge-i).

    Parameters:
        epsilon: stop when the sup-norm change of a full sweep drops below
            this value.
        max_sweeps: sweep cap; hitting it reports converged_=False rather
            than raising.
        sweep_mode: "asymmetric" updates every opponent of the distinguished
            agent from the previous sweep's tables, then the distinguished
            agent from the opponents' fresh tables; "jacobi" updates every
            agent from the previous sweep.
        distinguished_agent: the agent updated last in asymmetric mode.
        init: "zeros" or "random" (uniform in [-init_scale, init_scale]).
        seed: RNG seed for random init.

    Fitted attributes:
        q_: list of per-agent Q tables at the fixed point.
        policies_: their Boltzmann policies.
        v_: per-agent soft values.
        trace_: SolveTrace with per-sweep residuals.
        n_sweeps_, converged_, residual_, bound_check_.
    """

    def __init__(self, epsilon=DEFAULT_EPSILON, max_sweeps=DEFAULT_MAX_SWEEPS,
                 sweep_mode="asymmetric", distinguished_agent=0, init="zeros",
                 init_scale=1.0, seed=None):
        self.epsilon = epsilon
        self.max_sweeps = max_sweeps
        self.sweep_mode = sweep_mode
        self.distinguished_agent = distinguished_agent
        self.init = init
        self.init_scale = init_scale
        self.seed = seed

    def _initial_tables(self, game):
        shape = (game.n_joint_states, game.n_actions)
        if self.init == "zeros":
            return [np.zeros(shape) for _ in game.agent_range()]
        if self.init == "random":
            rng = np.random.default_rng(self.seed)
            return [
                rng.uniform(-self.init_scale, self.init_scale, size=shape)
                for _ in game.agent_range()
            ]
        raise ValueError(f"init must be 'zeros' or 'random', got {self.init!r}")

    def fit(self, game: MarkovGame) -> "InfiniteHorizonSolver":
        _require_infinite(game)
        if self.sweep_mode not in ("asymmetric", "jacobi"):
            raise ValueError(
                f"sweep_mode must be 'asymmetric' or 'jacobi', "
                f"got {self.sweep_mode!r}"
            )
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon!r}")
        dist = self.distinguished_agent
        if not 0 <= dist < game.n_agents:
            raise ValueError(
                f"distinguished_agent {dist} out of range [0, {game.n_agents})"
            )

        self.bound_check_ = infinite_contraction_bound(game)
        if not self.bound_check_["satisfied"]:
            warnings.warn(
                "reward sup norm {lhs:.6g} exceeds the contraction bound "
                "{rhs:.6g}; the fixed point may not be unique and the sweep "
                "may not converge".format(**self.bound_check_),
                RuntimeWarning,
            )

        q = self._initial_tables(game)
        trace = SolveTrace()
        converged = False
        for _ in range(int(self.max_sweeps)):
            t0 = time.perf_counter()
            q_next = self._sweep(game, q, dist)
            residual = sup_distance(q_next, q)
            trace.record(residual, (time.perf_counter() - t0) * 1e3)
            q = q_next
            if residual < self.epsilon:
                converged = True
                break
        trace.converged = converged

        self.q_ = q
        self.policies_ = [boltzmann_policy(t, game.beta) for t in q]
        self.v_ = [soft_value(t, p) for t, p in zip(q, self.policies_)]
        self.trace_ = trace
        self.n_sweeps_ = trace.iterations
        self.converged_ = converged
        self.residual_ = trace.residuals[-1] if trace.residuals else 0.0
        self.n_agents_ = game.n_agents
        return self

    def _sweep(self, game, q, dist):
        policies = [boltzmann_policy(t, game.beta) for t in q]
        values = [soft_value(t, p) for t, p in zip(q, policies)]
        q_next = [None] * game.n_agents
        if self.sweep_mode == "jacobi":
            for i in game.agent_range():
                q_next[i] = _backup(game, i, policies, values[i])
            return q_next
        for j in game.agent_range():
            if j != dist:
                q_next[j] = _backup(game, j, policies, values[j])
        fresh = [
            policies[j] if j == dist else boltzmann_policy(q_next[j], game.beta)
            for j in game.agent_range()
        ]
        q_next[dist] = _backup(game, dist, fresh, values[dist])
        return q_next

    def predict(self, states) -> np.ndarray:
        """Argmax action per agent at each joint state (ties: lowest index)."""
        if not hasattr(self, "policies_"):
            raise NotFittedError("this InfiniteHorizonSolver is not fitted yet")
        states = np.asarray(states, dtype=int).ravel()
        return np.stack(
            [np.argmax(self.policies_[i][states], axis=-1)
             for i in range(self.n_agents_)],
            axis=1,
        )
