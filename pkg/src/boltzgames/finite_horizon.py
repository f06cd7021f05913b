"""Finite-horizon solver: backward induction over coupled Boltzmann stages.

The horizon-T game is solved stage by stage from tau = T-1 down to 0. At each
stage the one-step backup for agent i, holding the next stage's soft values
fixed, is

    (U_i Q)(x, a_i) = R_i(x, a_i)
        + E_{a_-i ~ pi_-i(x), x' ~ P(.|x, a)} [ V_i^{tau+1}(x') ]

(no discounting; the boundary V^T is the final reward vector). U couples the
agents through the opponents' Boltzmann policies, so each stage runs an inner
fixed-point loop; a damping weight alpha mixes the backup with the previous
iterate, which restores convergence when the plain iteration oscillates. The
converged stage tables are then finalized with one more backup and their soft
values become the next boundary.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .game import MarkovGame, continuation_tensor, opponent_mix
from .softmax import boltzmann_policy, soft_value, sup_distance
from .trace import SolveTrace

DEFAULT_EPSILON = 1e-8
DEFAULT_MAX_INNER = 100_000


def _require_finite(game: MarkovGame):
    if game.horizon is None:
        raise ValueError("expected a finite-horizon game, got a discounted one")


def _final_values(game: MarkovGame) -> list:
    if game.final_rewards is not None:
        return [np.array(f) for f in game.final_rewards]
    return [np.zeros(game.n_joint_states) for _ in game.agent_range()]


def finite_contraction_bound(game: MarkovGame) -> dict:
    """Sufficient uniqueness/convergence condition for the stage backups.

    lhs = max_i max(||R_i||_inf, ||R_iF||_inf), rhs = 1 / (2 beta (M-1) (1+T)).
    A single-agent game has no coupling; the rhs is +inf then.
    """
    _require_finite(game)
    lhs = max(float(np.max(np.abs(r))) for r in game.rewards)
    if game.final_rewards is not None:
        lhs = max(lhs, max(float(np.max(np.abs(f))) for f in game.final_rewards))
    if game.n_agents == 1:
        rhs = np.inf
    else:
        rhs = 1.0 / (
            2.0 * game.beta * (game.n_agents - 1) * (1 + game.horizon)
        )
    return {"satisfied": bool(lhs <= rhs), "lhs": lhs, "rhs": float(rhs)}


def damping_convergence_condition(game: MarkovGame, alpha: float) -> dict:
    """Sufficient condition for the alpha-damped stage iteration to converge.

    Scales the reward norm by alpha, evaluates the stage contraction
    coefficient gamma_ab = 2 beta (M-1) (1+T) * (alpha * lhs), and requires
    gamma_ab + (1 - alpha) < 1. At alpha = 1 this reduces to the plain stage
    bound (strict form).
    """
    _require_finite(game)
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    lhs = max(float(np.max(np.abs(r))) for r in game.rewards)
    if game.final_rewards is not None:
        lhs = max(lhs, max(float(np.max(np.abs(f))) for f in game.final_rewards))
    b = alpha * lhs
    gamma_ab = 2.0 * game.beta * (game.n_agents - 1) * (1 + game.horizon) * b
    return {
        "satisfied": bool(gamma_ab + (1.0 - alpha) < 1.0),
        "gamma_ab": float(gamma_ab),
        "b": float(b),
        "alpha": float(alpha),
        "reward_norm": float(lhs),
    }


def stage_backup(game: MarkovGame, agent: int, q_tables, v_next) -> np.ndarray:
    """One application of the stage backup U_i.

    ``q_tables`` fixes every agent's current stage table (only the opponents'
    Boltzmann policies matter); ``v_next`` is agent ``agent``'s value vector
    for the following stage.
    """
    _require_finite(game)
    if not 0 <= agent < game.n_agents:
        raise ValueError(f"agent {agent} out of range [0, {game.n_agents})")
    v_next = np.asarray(v_next, dtype=float)
    if v_next.shape != (game.n_joint_states,):
        raise ValueError(
            f"v_next has shape {v_next.shape}, expected {(game.n_joint_states,)}"
        )
    policies = [boltzmann_policy(q, game.beta) for q in q_tables]
    w = continuation_tensor(game, v_next)
    return game.rewards[agent] + opponent_mix(w, policies, agent)


def solve_stage(game: MarkovGame, v_next, *, epsilon=DEFAULT_EPSILON,
                alpha=1.0, max_inner_iters=DEFAULT_MAX_INNER, q_init=None,
                label=""):
    """Solve one stage's coupled fixed point and finalize it.

    The inner loop updates every agent from the previous iterate (all-stale
    sweeps), damped by alpha:

        Q_i <- alpha * U_i(Q_-i, v_next_i) + (1 - alpha) * Q_i

    until the sup-norm change over all agents drops below epsilon. The
    converged tables are then finalized: one more plain backup per agent,
    whose Boltzmann policy and soft value are the stage's outputs.

    Returns (q_hat, v_stage, policies, trace, q_converged); q_converged is
    the raw converged inner iterate, useful for warm-starting the next stage.
    """
    _require_finite(game)
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon!r}")
    m = game.n_agents
    shape = (game.n_joint_states, game.n_actions)
    if q_init is None:
        q = [np.zeros(shape) for _ in range(m)]
    else:
        q = [np.array(t, dtype=float) for t in q_init]
    v_next = [np.asarray(v, dtype=float) for v in v_next]

    # v_next is fixed for the whole stage, so the continuation tensors are too.
    w = [continuation_tensor(game, v_next[i]) for i in range(m)]

    trace = SolveTrace(label=str(label))
    converged = False
    for _ in range(int(max_inner_iters)):
        t0 = time.perf_counter()
        policies = [boltzmann_policy(t, game.beta) for t in q]
        q_new = [
            alpha * (game.rewards[i] + opponent_mix(w[i], policies, i))
            + (1.0 - alpha) * q[i]
            for i in range(m)
        ]
        residual = sup_distance(q_new, q)
        trace.record(residual, (time.perf_counter() - t0) * 1e3)
        q = q_new
        if residual < epsilon:
            converged = True
            break
    trace.converged = converged

    policies = [boltzmann_policy(t, game.beta) for t in q]
    q_hat = [
        game.rewards[i] + opponent_mix(w[i], policies, i) for i in range(m)
    ]
    stage_policies = [boltzmann_policy(t, game.beta) for t in q_hat]
    v_stage = [soft_value(t, p) for t, p in zip(q_hat, stage_policies)]
    return q_hat, v_stage, stage_policies, trace, q


@dataclass
class FiniteSolution:
    """Everything a finite-horizon solve produces.

    q_by_time[tau][i] and policies_by_time[tau][i] cover tau = 0..T-1;
    v_by_time[tau][i] covers tau = 0..T, where v_by_time[T] is exactly the
    final reward vector.
    """

    q_by_time: list
    v_by_time: list
    policies_by_time: list
    traces: list

    @property
    def horizon(self) -> int:
        return len(self.q_by_time)

    @property
    def converged(self) -> bool:
        return all(t.converged for t in self.traces)


def solve_finite_horizon(game: MarkovGame, *, epsilon=DEFAULT_EPSILON,
                         alpha=1.0, max_inner_iters=DEFAULT_MAX_INNER,
                         init="zeros", init_scale=1.0, seed=None,
                         warm_start=True) -> FiniteSolution:
    """Backward induction over all stages; see FiniteHorizonSolver."""
    _require_finite(game)
    m = game.n_agents
    shape = (game.n_joint_states, game.n_actions)

    def fresh_init():
        if init == "zeros":
            return [np.zeros(shape) for _ in range(m)]
        if init == "random":
            rng = np.random.default_rng(seed)
            return [
                rng.uniform(-init_scale, init_scale, size=shape)
                for _ in range(m)
            ]
        raise ValueError(f"init must be 'zeros' or 'random', got {init!r}")

    horizon = game.horizon
    v_by_time = [None] * (horizon + 1)
    q_by_time = [None] * horizon
    policies_by_time = [None] * horizon
    traces = [None] * horizon

    v_by_time[horizon] = _final_values(game)
    carry = fresh_init()
    for tau in range(horizon - 1, -1, -1):
        q_hat, v_stage, pols, trace, q_conv = solve_stage(
            game, v_by_time[tau + 1], epsilon=epsilon, alpha=alpha,
            max_inner_iters=max_inner_iters, q_init=carry, label=str(tau),
        )
        q_by_time[tau] = q_hat
        v_by_time[tau] = v_stage
        policies_by_time[tau] = pols
        traces[tau] = trace
        carry = q_conv if warm_start else fresh_init()
    return FiniteSolution(q_by_time, v_by_time, policies_by_time, traces)


class FiniteHorizonSolver(BaseEstimator):
    """Backward-induction solver for finite-horizon games (solver id mge-f).

    Parameters:
        epsilon: inner-loop stop tolerance per stage (sup norm).
        alpha: damping weight in (0, 1]; 1 is the plain iteration.
        max_inner_iters: per-stage iteration cap (reported, not raised).
        init: "zeros" or "random" initial stage tables.
        warm_start: start each stage's inner loop from the previous stage's
            converged iterate (False re-initializes every stage).
        seed: RNG seed for random init.

    Fitted attributes:
        solution_: FiniteSolution with everything.
        q_by_time_, v_by_time_, policies_by_time_, traces_: views into it.
        converged_: all stages converged.
        bound_check_, damping_check_: the two sufficient-condition reports.
    """

    def __init__(self, epsilon=DEFAULT_EPSILON, alpha=1.0,
                 max_inner_iters=DEFAULT_MAX_INNER, init="zeros",
                 init_scale=1.0, seed=None, warm_start=True):
        self.epsilon = epsilon
        self.alpha = alpha
        self.max_inner_iters = max_inner_iters
        self.init = init
        self.init_scale = init_scale
        self.seed = seed
        self.warm_start = warm_start

    def fit(self, game: MarkovGame) -> "FiniteHorizonSolver":
        _require_finite(game)
        self.bound_check_ = finite_contraction_bound(game)
        self.damping_check_ = damping_convergence_condition(game, self.alpha)
        if not self.damping_check_["satisfied"]:
            warnings.warn(
                "damped stage iteration is outside the sufficient convergence "
                "condition (gamma_ab = {gamma_ab:.6g}, alpha = {alpha:g}); "
                "convergence is not guaranteed".format(**self.damping_check_),
                RuntimeWarning,
            )
        solution = solve_finite_horizon(
            game, epsilon=self.epsilon, alpha=self.alpha,
            max_inner_iters=self.max_inner_iters, init=self.init,
            init_scale=self.init_scale, seed=self.seed,
            warm_start=self.warm_start,
        )
        self.solution_ = solution
        self.q_by_time_ = solution.q_by_time
        self.v_by_time_ = solution.v_by_time
        self.policies_by_time_ = solution.policies_by_time
        self.traces_ = solution.traces
        self.converged_ = solution.converged
        self.n_agents_ = game.n_agents
        return self

    def predict(self, states, time_step=0) -> np.ndarray:
        """Argmax action per agent at each joint state for one stage."""
        if not hasattr(self, "solution_"):
            raise NotFittedError("this FiniteHorizonSolver is not fitted yet")
        pols = self.policies_by_time_[time_step]
        states = np.asarray(states, dtype=int).ravel()
        return np.stack(
            [np.argmax(pols[i][states], axis=-1) for i in range(self.n_agents_)],
            axis=1,
        )
