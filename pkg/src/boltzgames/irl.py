"""Multi-agent maximum-causal-entropy inverse reinforcement learning.

The forward model is the finite-horizon Boltzmann game at unit temperature.
The backward recursion below chooses, for each agent, the policy of maximum
causal entropy whose feature expectations can be matched to demonstrations:

    W_i^tau(x, a_i) = r_i(x, a_i) + E_{a_-i ~ pi_-i^tau(x), x'} [ logZ_i^{tau+1}(x') ]
    logZ_i^tau(x)   = log sum_a exp W_i^tau(x, a)        pi_i^tau = exp(W - logZ)

with logZ == 0 after the last decision. Unlike the soft-value recursion used
by the game solvers, the backed-up quantity is the log partition itself. The
learner observes an agent's own reward plus opponent trajectories, and fits
opponent reward weights theta_j (rewards <theta_j, F_j(x, a_j)>) by projected
gradient steps on the feature-matching gap.
"""

from __future__ import annotations

import dataclasses
import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .game import (
    MarkovGame,
    continuation_tensor,
    joint_action_probabilities,
    joint_index,
    opponent_mix,
)
from .softmax import boltzmann_policy, softmax_log, sup_distance

DEFAULT_INNER_EPSILON = 1e-9
DEFAULT_INNER_CAP = 10_000


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass
class FeatureModel:
    """Per-agent reward features and their weights.

    features[i] has shape (n_joint_states, n_actions, dim_i); rewards are the
    inner products <thetas[i], features[i](x, a)>. ball_radius bounds the
    Euclidean norm of each theta; step_size is the gradient step.
    """

    features: tuple
    thetas: tuple = None
    ball_radius: float = 10.0
    step_size: float = 0.05

    def __post_init__(self):
        feats = tuple(np.asarray(f, dtype=float) for f in self.features)
        if any(f.ndim != 3 for f in feats):
            raise ValueError("each feature table must be (states, actions, dim)")
        if not self.ball_radius > 0:
            raise ValueError(f"ball_radius must be > 0, got {self.ball_radius!r}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size!r}")
        if self.thetas is None:
            thetas = tuple(np.zeros(f.shape[2]) for f in feats)
        else:
            thetas = tuple(np.asarray(t, dtype=float) for t in self.thetas)
            for i, (f, t) in enumerate(zip(feats, thetas)):
                if t.shape != (f.shape[2],):
                    raise ValueError(
                        f"thetas[{i}] has shape {t.shape}, expected "
                        f"({f.shape[2]},)"
                    )
        self.features = feats
        self.thetas = thetas

    def reward_tables(self, thetas=None) -> list:
        thetas = self.thetas if thetas is None else thetas
        return [f @ np.asarray(t, dtype=float)
                for f, t in zip(self.features, thetas)]


@dataclass
class TrajectoryLog:
    """Demonstration episodes: per-step joint states and joint actions.

    Each episode is a pair (states, actions) of int arrays with shape
    (steps, n_agents); states hold per-agent state components, actions hold
    per-agent action indices taken at those states.
    """

    n_agents: int
    episodes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.episodes)

    def append(self, states, actions) -> None:
        states = np.asarray(states, dtype=int)
        actions = np.asarray(actions, dtype=int)
        if states.ndim != 2 or states.shape[1] != self.n_agents:
            raise ValueError(
                f"states must be (steps, {self.n_agents}), got {states.shape}"
            )
        if actions.shape != states.shape:
            raise ValueError(
                f"actions shape {actions.shape} must match states {states.shape}"
            )
        self.episodes.append((states, actions))

    def to_csv(self, path) -> None:
        m = self.n_agents
        header = (["episode", "tau"]
                  + [f"x{i}" for i in range(m)] + [f"a{i}" for i in range(m)])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for ep, (states, actions) in enumerate(self.episodes):
                for tau in range(states.shape[0]):
                    writer.writerow(
                        [ep, tau, *states[tau].tolist(), *actions[tau].tolist()]
                    )

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:2] != ["episode", "tau"]:
                raise ValueError(f"{path}: not a trajectory file")
            m = (len(header) - 2) // 2
            expected = (["episode", "tau"]
                        + [f"x{i}" for i in range(m)]
                        + [f"a{i}" for i in range(m)])
            if header != expected:
                raise ValueError(f"{path}: bad trajectory header {header}")
            rows = {}
            for row in reader:
                if not row:
                    continue
                ep = int(row[0])
                rows.setdefault(ep, []).append(
                    (int(row[1]), [int(v) for v in row[2:2 + m]],
                     [int(v) for v in row[2 + m:2 + 2 * m]])
                )
        log = cls(n_agents=m)
        for ep in sorted(rows):
            steps = sorted(rows[ep], key=lambda r: r[0])
            log.append([s for _, s, _ in steps], [a for _, _, a in steps])
        return log


# ---------------------------------------------------------------------------
# the backward recursion
# ---------------------------------------------------------------------------

@dataclass
class CausalEntropyResult:
    """Backward-recursion output over decision epochs tau = 0..D-1."""

    policies_by_time: list
    w_by_time: list
    log_z_by_time: list
    inner_iterations: list
    converged: bool


def causal_entropy_backward(game: MarkovGame, rewards=None, *,
                            epsilon=DEFAULT_INNER_EPSILON,
                            max_inner=DEFAULT_INNER_CAP) -> CausalEntropyResult:
    """Coupled log-partition recursion at unit temperature.

    ``rewards`` overrides the game's reward tables (the usual case: tables
    built from feature weights). The game's horizon sets the number of
    decision epochs D; policies come out for tau = 0..D-1. Each epoch below
    the last runs a Jacobi fixed-point loop over the agents' W tables to
    tolerance ``epsilon`` (the last epoch is closed-form).
    """
    if game.horizon is None:
        raise ValueError("causal_entropy_backward needs a finite-horizon game")
    m = game.n_agents
    base = list(game.rewards) if rewards is None else [
        np.asarray(r, dtype=float) for r in rewards
    ]
    if len(base) != m:
        raise ValueError(f"expected {m} reward tables, got {len(base)}")
    d = game.horizon
    uniform = np.full((game.n_joint_states, game.n_actions),
                      1.0 / game.n_actions)

    policies_by_time = [None] * d
    w_by_time = [None] * d
    log_z_by_time = [None] * d
    inner_iterations = [0] * d
    converged = True

    log_z_next = None  # implicit zero boundary after the last decision
    for tau in range(d - 1, -1, -1):
        if tau == d - 1:
            w = [np.array(b) for b in base]
            inner_iterations[tau] = 0
        else:
            cont = [continuation_tensor(game, log_z_next[i]) for i in range(m)]
            if m == 1:
                w = [base[0] + opponent_mix(cont[0], [uniform], 0)]
                inner_iterations[tau] = 1
            else:
                policies = [uniform] * m
                w = [base[i] + opponent_mix(cont[i], policies, i)
                     for i in range(m)]
                ok = False
                for it in range(1, int(max_inner) + 1):
                    policies = [boltzmann_policy(t, 1.0) for t in w]
                    w_new = [base[i] + opponent_mix(cont[i], policies, i)
                             for i in range(m)]
                    residual = sup_distance(w_new, w)
                    w = w_new
                    if residual < epsilon:
                        ok = True
                        break
                inner_iterations[tau] = it
                converged = converged and ok
        w_by_time[tau] = w
        log_z_next = [softmax_log(t, axis=-1) for t in w]
        log_z_by_time[tau] = log_z_next
        policies_by_time[tau] = [boltzmann_policy(t, 1.0) for t in w]
    return CausalEntropyResult(
        policies_by_time, w_by_time, log_z_by_time, inner_iterations, converged
    )


# ---------------------------------------------------------------------------
# feature expectations and the dual
# ---------------------------------------------------------------------------

def model_feature_expectation(game: MarkovGame, policies_by_time, features,
                              agent: int) -> np.ndarray:
    """Exact expected feature sum for one agent under time-indexed policies.

    Propagates the joint-state distribution from the game's p0 through the
    product policy and the kernel; no sampling. The sum runs over every
    decision epoch the policy list covers.
    """
    if game.p0 is None:
        raise ValueError("model_feature_expectation needs the game's p0")
    feats = np.asarray(features[agent], dtype=float)
    dist = np.array(game.p0, dtype=float)
    total = np.zeros(feats.shape[2])
    steps = len(policies_by_time)
    for tau in range(steps):
        pols = policies_by_time[tau]
        total += np.einsum("x,xa,xak->k", dist, pols[agent], feats)
        if tau < steps - 1:
            flow = (dist[:, None] * joint_action_probabilities(pols)).ravel()
            dist = game.transition.propagate(flow)
    return total


def empirical_feature_expectation(game: MarkovGame, trajectories: TrajectoryLog,
                                  features, agent: int) -> np.ndarray:
    """Mean per-episode feature sum of one agent over demonstration episodes."""
    if not len(trajectories):
        raise ValueError("trajectory log is empty")
    if trajectories.n_agents != game.n_agents:
        raise ValueError(
            f"log has {trajectories.n_agents} agents, game has {game.n_agents}"
        )
    feats = np.asarray(features[agent], dtype=float)
    total = np.zeros(feats.shape[2])
    for states, actions in trajectories.episodes:
        for tau in range(states.shape[0]):
            x = joint_index(states[tau], game.state_sizes)
            a = int(actions[tau, agent])
            if not 0 <= a < game.n_actions:
                raise ValueError(f"action {a} out of range [0, {game.n_actions})")
            total += feats[x, a]
    return total / len(trajectories)


def dual_gradient(empirical, model) -> np.ndarray:
    """Feature-matching gap, empirical minus model expectation."""
    emp = np.asarray(empirical, dtype=float)
    mod = np.asarray(model, dtype=float)
    if emp.shape != mod.shape:
        raise ValueError(f"shapes differ: {emp.shape} vs {mod.shape}")
    return emp - mod


def dual_objective(game: MarkovGame, features, thetas, agent: int, empirical,
                   *, epsilon=1e-12, max_inner=DEFAULT_INNER_CAP) -> float:
    """<theta_i, empirical_i> - E_p0[logZ_i at tau 0], all agents at theta.

    The gradient of this scalar in theta_i is exactly
    :func:`dual_gradient` (empirical minus model expectation); opponents'
    policy shifts cancel in expectation.
    """
    if game.p0 is None:
        raise ValueError("dual_objective needs the game's p0")
    rewards = [np.asarray(f, dtype=float) @ np.asarray(t, dtype=float)
               for f, t in zip(features, thetas)]
    res = causal_entropy_backward(
        game, rewards, epsilon=epsilon, max_inner=max_inner
    )
    expected_log_z0 = float(np.dot(game.p0, res.log_z_by_time[0][agent]))
    return float(np.dot(thetas[agent], np.asarray(empirical, dtype=float))
                 - expected_log_z0)


def project_to_ball(theta, radius: float) -> np.ndarray:
    """Euclidean projection onto the ball of the given radius."""
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius!r}")
    theta = np.array(theta, dtype=float)
    norm = float(np.linalg.norm(theta))
    if norm > radius:
        theta *= radius / norm
    return theta


# ---------------------------------------------------------------------------
# the online learner
# ---------------------------------------------------------------------------

@dataclass
class IrlStepInfo:
    """Diagnostics from one projected-gradient step."""

    model_expectations: dict
    empirical_expectations: dict
    gaps: dict
    gap_norms: dict
    inner_converged: bool
    policies_by_time: list


def _zero_final(game: MarkovGame):
    return tuple(np.zeros(game.n_joint_states) for _ in game.agent_range())


def _solve_forward_model(game, rewards, forward_model, *, inner_epsilon,
                         inner_alpha, inner_max_iters, recursion_epsilon,
                         recursion_max_inner):
    shell = dataclasses.replace(
        game, rewards=tuple(rewards), final_rewards=_zero_final(game), beta=1.0
    )
    if forward_model == "finite":
        from .finite_horizon import solve_finite_horizon

        sol = solve_finite_horizon(
            shell, epsilon=inner_epsilon, alpha=inner_alpha,
            max_inner_iters=inner_max_iters,
        )
        return shell, sol.policies_by_time, sol.converged
    if forward_model == "recursion":
        res = causal_entropy_backward(
            shell, epsilon=recursion_epsilon, max_inner=recursion_max_inner
        )
        return shell, res.policies_by_time, res.converged
    raise ValueError(
        f"forward_model must be 'finite' or 'recursion', got {forward_model!r}"
    )


def online_irl_step(game: MarkovGame, features, thetas, observer: int,
                    trajectories: TrajectoryLog, *, own_reward=None,
                    step_size=0.05, ball_radius=10.0, forward_model="finite",
                    inner_epsilon=1e-8, inner_alpha=1.0,
                    inner_max_iters=100_000,
                    recursion_epsilon=DEFAULT_INNER_EPSILON,
                    recursion_max_inner=DEFAULT_INNER_CAP,
                    empirical_cache=None):
    """One projected-gradient update of every opponent's reward weights.

    Solves the forward game at unit temperature with the observer's own
    reward and the opponents' current feature rewards, compares model and
    demonstration feature expectations, and moves each opponent's theta along
    the gap (projected back onto the norm ball). Returns (new_thetas, info);
    the observer's theta entry is passed through untouched.
    """
    m = game.n_agents
    if not 0 <= observer < m:
        raise ValueError(f"observer {observer} out of range [0, {m})")
    thetas = [None if t is None else np.asarray(t, dtype=float) for t in thetas]
    own = game.rewards[observer] if own_reward is None else np.asarray(
        own_reward, dtype=float
    )
    rewards = [
        own if j == observer
        else np.asarray(features[j], dtype=float) @ thetas[j]
        for j in range(m)
    ]
    shell, policies, inner_ok = _solve_forward_model(
        game, rewards, forward_model, inner_epsilon=inner_epsilon,
        inner_alpha=inner_alpha, inner_max_iters=inner_max_iters,
        recursion_epsilon=recursion_epsilon,
        recursion_max_inner=recursion_max_inner,
    )
    learned = [j for j in range(m) if j != observer]
    if empirical_cache is None:
        empirical_cache = {
            j: empirical_feature_expectation(game, trajectories, features, j)
            for j in learned
        }
    model = {
        j: model_feature_expectation(shell, policies, features, j)
        for j in learned
    }
    gaps = {j: dual_gradient(empirical_cache[j], model[j]) for j in learned}
    new_thetas = list(thetas)
    for j in learned:
        new_thetas[j] = project_to_ball(
            thetas[j] + step_size * gaps[j], ball_radius
        )
    info = IrlStepInfo(
        model_expectations=model,
        empirical_expectations=dict(empirical_cache),
        gaps=gaps,
        gap_norms={j: float(np.linalg.norm(g)) for j, g in gaps.items()},
        inner_converged=inner_ok,
        policies_by_time=policies,
    )
    return new_thetas, info


class OnlineRewardLearner(BaseEstimator):
    """Fits opponents' reward weights from demonstrations (projected gradient).

    Parameters:
        game: finite-horizon game supplying dynamics, horizon, and p0 (its
            reward tables only matter for the observer's own reward default).
        features: per-agent feature tables (n_joint, n_actions, dim_j), or a
            FeatureModel (whose ball_radius/step_size become defaults).
        observer: the learning agent; its own reward is known, all other
            agents' thetas are fitted.
        own_reward: override for the observer's reward table.
        step_size, ball_radius: projected-gradient hyperparameters (None
            defers to the FeatureModel, else 0.05 / 10.0).
        n_steps: number of gradient steps in fit.
        forward_model: "finite" solves the Boltzmann game each step,
            "recursion" uses the log-partition recursion instead.
        gap_tol: stop early once every learned agent's gap norm is below
            this (0 disables).
        require_inner_convergence: raise if the forward solve does not
            converge (default records it and continues).

    Fitted attributes:
        theta_: per-agent weights (observer entry None).
        gaps_, gap_norms_: last feature gaps per learned agent.
        theta_history_: list over steps of per-agent weight copies.
        gap_norm_history_: list over steps of {agent: gap norm}.
        inner_converged_: per-step forward-solve convergence flags.
        policies_: the last solved forward-model policies.
    """

    def __init__(self, game=None, features=None, observer=0, own_reward=None,
                 step_size=None, ball_radius=None, n_steps=100,
                 forward_model="finite", inner_epsilon=1e-8, inner_alpha=1.0,
                 inner_max_iters=100_000,
                 recursion_epsilon=DEFAULT_INNER_EPSILON,
                 recursion_max_inner=DEFAULT_INNER_CAP, gap_tol=0.0,
                 require_inner_convergence=False, theta_init=None):
        self.game = game
        self.features = features
        self.observer = observer
        self.own_reward = own_reward
        self.step_size = step_size
        self.ball_radius = ball_radius
        self.n_steps = n_steps
        self.forward_model = forward_model
        self.inner_epsilon = inner_epsilon
        self.inner_alpha = inner_alpha
        self.inner_max_iters = inner_max_iters
        self.recursion_epsilon = recursion_epsilon
        self.recursion_max_inner = recursion_max_inner
        self.gap_tol = gap_tol
        self.require_inner_convergence = require_inner_convergence
        self.theta_init = theta_init

    def _resolved(self):
        game = self.game
        if game is None or game.horizon is None:
            raise ValueError("OnlineRewardLearner needs a finite-horizon game")
        feats = self.features
        step, radius = self.step_size, self.ball_radius
        if isinstance(feats, FeatureModel):
            step = feats.step_size if step is None else step
            radius = feats.ball_radius if radius is None else radius
            feats = feats.features
        feats = [np.asarray(f, dtype=float) for f in feats]
        if len(feats) != game.n_agents:
            raise ValueError(
                f"expected {game.n_agents} feature tables, got {len(feats)}"
            )
        for i, f in enumerate(feats):
            if f.shape[:2] != (game.n_joint_states, game.n_actions):
                raise ValueError(
                    f"features[{i}] has shape {f.shape}, expected "
                    f"({game.n_joint_states}, {game.n_actions}, dim)"
                )
        step = 0.05 if step is None else float(step)
        radius = 10.0 if radius is None else float(radius)
        if not step > 0 or not radius > 0:
            raise ValueError("step_size and ball_radius must be > 0")
        observer = int(self.observer)
        if not 0 <= observer < game.n_agents:
            raise ValueError(
                f"observer {observer} out of range [0, {game.n_agents})"
            )
        return game, feats, observer, step, radius

    def fit(self, trajectories: TrajectoryLog) -> "OnlineRewardLearner":
        game, feats, observer, step, radius = self._resolved()
        learned = [j for j in range(game.n_agents) if j != observer]
        if self.theta_init is None:
            thetas = [
                None if j == observer else np.zeros(feats[j].shape[2])
                for j in range(game.n_agents)
            ]
        else:
            thetas = [
                None if j == observer
                else np.array(self.theta_init[j], dtype=float)
                for j in range(game.n_agents)
            ]
        empirical = {
            j: empirical_feature_expectation(game, trajectories, feats, j)
            for j in learned
        }

        theta_history, gap_norm_history, inner_flags = [], [], []
        info = None
        for _ in range(int(self.n_steps)):
            thetas, info = online_irl_step(
                game, feats, thetas, observer, trajectories,
                own_reward=self.own_reward, step_size=step,
                ball_radius=radius, forward_model=self.forward_model,
                inner_epsilon=self.inner_epsilon, inner_alpha=self.inner_alpha,
                inner_max_iters=self.inner_max_iters,
                recursion_epsilon=self.recursion_epsilon,
                recursion_max_inner=self.recursion_max_inner,
                empirical_cache=empirical,
            )
            if self.require_inner_convergence and not info.inner_converged:
                raise RuntimeError(
                    "forward-model solve did not converge during an IRL step"
                )
            theta_history.append(
                [None if t is None else t.copy() for t in thetas]
            )
            gap_norm_history.append(dict(info.gap_norms))
            inner_flags.append(info.inner_converged)
            if self.gap_tol and info.gap_norms and \
                    max(info.gap_norms.values()) < self.gap_tol:
                break

        self.theta_ = thetas
        self.gaps_ = {} if info is None else info.gaps
        self.gap_norms_ = {} if info is None else info.gap_norms
        self.theta_history_ = theta_history
        self.gap_norm_history_ = gap_norm_history
        self.inner_converged_ = inner_flags
        self.policies_ = None if info is None else info.policies_by_time
        self.empirical_ = empirical
        self.model_ = {} if info is None else info.model_expectations
        self.n_steps_ = len(theta_history)
        return self

    def predict(self, states, time_step=0) -> np.ndarray:
        """Argmax action per agent at joint states under the fitted model."""
        if not hasattr(self, "policies_"):
            raise NotFittedError("this OnlineRewardLearner is not fitted yet")
        if self.policies_ is None:
            raise NotFittedError("fit ran for zero steps; no policies available")
        pols = self.policies_[time_step]
        states = np.asarray(states, dtype=int).ravel()
        return np.stack(
            [np.argmax(pols[i][states], axis=-1) for i in range(len(pols))],
            axis=1,
        )
