"""Episode execution for solved policies, with scores and event counts.

Joint-state games run decisions at tau = 0..T-1 and collect the final reward
at the terminal state x_T; own-state (simplified) games run decisions at
tau = 0..T with the terminal state at T+1, matching their planners. Episode
randomness derives from per-episode substreams of a single seed, so reports
are bitwise reproducible. Argmax execution breaks ties by lowest action
index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward_backward import SimplifiedGame
from .game import MarkovGame
from .irl import TrajectoryLog
from .validation import check_choice

EXECUTION_MODES = ("argmax", "sample")
INITIAL_MODES = ("random_from_p0", "fixed")


@dataclass
class RolloutConfig:
    """How to execute episodes.

    execution: "argmax" plays the highest-probability action (ties to the
        lowest index); "sample" draws from the mixed policy.
    episodes: number of episodes (>= 1).
    seed: root seed; episode e uses the substream (seed, e).
    initial_state: "random_from_p0" draws the start from the game's p0;
        "fixed" uses fixed_state (a flat joint index or a component tuple).
        Own-state games always start from their built-in initial states.
    horizon: decision count override; defaults to the game's horizon.
    """

    execution: str = "argmax"
    episodes: int = 10
    seed: int = 0
    initial_state: str = "random_from_p0"
    fixed_state: object = None
    horizon: int = None

    def __post_init__(self):
        check_choice(self.execution, "execution", EXECUTION_MODES)
        check_choice(self.initial_state, "initial_state", INITIAL_MODES)
        if int(self.episodes) < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes!r}")


@dataclass
class RolloutReport:
    """Per-episode rewards, event counts, and trajectories."""

    n_agents: int
    episode_rewards: np.ndarray  # (episodes, n_agents), totals incl. final
    event_counts: list           # per episode: dict name -> count
    trajectories: list           # per episode: (states, actions) int arrays
    execution: str
    seed: int

    @property
    def n_episodes(self) -> int:
        return int(self.episode_rewards.shape[0])

    @property
    def mean_rewards(self) -> np.ndarray:
        return self.episode_rewards.mean(axis=0)

    def to_trajectory_log(self) -> TrajectoryLog:
        """Decision-step (state, action) pairs in the demonstration format."""
        log = TrajectoryLog(n_agents=self.n_agents)
        for states, actions in self.trajectories:
            log.append(states[: actions.shape[0]], actions)
        return log


def _policy_stack(policies, horizon, n_agents):
    """Normalize stationary or per-stage policies to a [tau][agent] list."""
    pols = list(policies)
    if pols and isinstance(pols[0], (list, tuple)):
        if len(pols) < horizon:
            raise ValueError(
                f"policies cover {len(pols)} stages, horizon needs {horizon}"
            )
        stages = [list(stage) for stage in pols[:horizon]]
    else:
        stages = [pols] * horizon
    for stage in stages:
        if len(stage) != n_agents:
            raise ValueError(
                f"stage has {len(stage)} policies, expected {n_agents}"
            )
    return stages


def _select_action(policy_row, execution, rng) -> int:
    if execution == "argmax":
        return int(np.argmax(policy_row))
    return int(rng.choice(policy_row.shape[0], p=policy_row))


def _episode_rng(seed, episode):
    return np.random.default_rng(np.random.SeedSequence([int(seed), episode]))


def run_rollouts(game: MarkovGame, policies, config: RolloutConfig,
                 detector=None) -> RolloutReport:
    """Execute episodes of a joint-state game under solved policies.

    ``policies`` is either a per-stage list [tau][agent] (as produced by the
    finite-horizon solver) or a stationary per-agent list (infinite-horizon
    fixed point); stationary policies repeat at every step. ``detector`` maps
    (states, actions) of one episode to a dict of event counts; states
    includes the terminal row, actions does not.
    """
    m = game.n_agents
    horizon = config.horizon if config.horizon is not None else game.horizon
    if horizon is None:
        raise ValueError(
            "infinite-horizon game: set RolloutConfig.horizon for rollouts"
        )
    horizon = int(horizon)
    stages = _policy_stack(policies, horizon, m)
    if config.initial_state == "random_from_p0" and game.p0 is None:
        raise ValueError("game has no p0; use initial_state='fixed'")
    if config.initial_state == "fixed":
        if config.fixed_state is None:
            raise ValueError("initial_state='fixed' needs fixed_state")
        fixed = config.fixed_state
        fixed_flat = (game.state_index(fixed)
                      if np.ndim(fixed) > 0 else int(fixed))

    rewards = np.zeros((config.episodes, m))
    events, trajectories = [], []
    for ep in range(int(config.episodes)):
        rng = _episode_rng(config.seed, ep)
        if config.initial_state == "random_from_p0":
            x = int(rng.choice(game.n_joint_states, p=game.p0))
        else:
            x = fixed_flat
        states = np.empty((horizon + 1, m), dtype=int)
        actions = np.empty((horizon, m), dtype=int)
        for tau in range(horizon):
            states[tau] = game.state_components(x)
            acts = [
                _select_action(stages[tau][i][x], config.execution, rng)
                for i in range(m)
            ]
            actions[tau] = acts
            for i in range(m):
                rewards[ep, i] += game.rewards[i][x, acts[i]]
            profile = int(np.ravel_multi_index(acts, (game.n_actions,) * m))
            row = game.transition.row(x, profile)
            x = int(rng.choice(game.n_joint_states, p=row))
        states[horizon] = game.state_components(x)
        if game.final_rewards is not None:
            for i in range(m):
                rewards[ep, i] += game.final_rewards[i][x]
        events.append({} if detector is None else detector(states, actions))
        trajectories.append((states, actions))
    return RolloutReport(
        n_agents=m, episode_rewards=rewards, event_counts=events,
        trajectories=trajectories, execution=config.execution,
        seed=int(config.seed),
    )


def run_simplified_rollouts(game: SimplifiedGame, policies_by_time,
                            config: RolloutConfig,
                            detector=None) -> RolloutReport:
    """Execute an own-state game: independent per-agent chains.

    Decisions run at tau = 0..horizon (one more than a joint-state game of
    the same horizon, matching the occupancy planner); the terminal own
    states collect the final rewards. Starts are the game's built-in initial
    states. Scores sum base rewards only; the occupancy penalty is a planning
    device, not a payoff.
    """
    if config.initial_state != "fixed":
        raise ValueError(
            "own-state games always start from their built-in initial "
            "states; use initial_state='fixed' with fixed_state=None"
        )
    if config.fixed_state is not None:
        raise ValueError("own-state games do not take fixed_state overrides")
    m = game.n_agents
    horizon = config.horizon if config.horizon is not None else game.horizon
    horizon = int(horizon)
    n_decisions = horizon + 1
    stages = _policy_stack(policies_by_time, n_decisions, m)

    rewards = np.zeros((config.episodes, m))
    events, trajectories = [], []
    for ep in range(int(config.episodes)):
        rng = _episode_rng(config.seed, ep)
        cells = [int(s) for s in game.initial_states]
        states = np.empty((n_decisions + 1, m), dtype=int)
        actions = np.empty((n_decisions, m), dtype=int)
        for tau in range(n_decisions):
            states[tau] = cells
            for i in range(m):
                a = _select_action(
                    stages[tau][i][cells[i]], config.execution, rng
                )
                actions[tau, i] = a
                rewards[ep, i] += game.rewards[i][cells[i], a]
                row = game.kernels[i][cells[i], a]
                cells[i] = int(rng.choice(game.n_states, p=row))
        states[n_decisions] = cells
        for i in range(m):
            rewards[ep, i] += game.final_rewards[i][cells[i]]
        events.append({} if detector is None else detector(states, actions))
        trajectories.append((states, actions))
    return RolloutReport(
        n_agents=m, episode_rewards=rewards, event_counts=events,
        trajectories=trajectories, execution=config.execution,
        seed=int(config.seed),
    )


def score_summary(report: RolloutReport) -> dict:
    """Means and sample deviations per agent, plus event totals and rates."""
    if report.n_episodes < 1:
        raise ValueError("empty report")
    rewards = report.episode_rewards
    n = report.n_episodes
    agents = []
    for i in range(report.n_agents):
        col = rewards[:, i]
        std = float(col.std(ddof=1)) if n > 1 else 0.0
        agents.append({
            "agent": i,
            "mean_reward": float(col.mean()),
            "std_reward": std,
        })
    names = sorted({k for ev in report.event_counts for k in ev})
    events = {}
    for name in names:
        counts = [ev.get(name, 0) for ev in report.event_counts]
        events[name] = {
            "total": int(np.sum(counts)),
            "mean_per_episode": float(np.mean(counts)),
        }
    return {"episodes": n, "agents": agents, "events": events}
