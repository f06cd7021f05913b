"""Occupancy forward-backward solver tests against loop oracles."""

from __future__ import annotations

import warnings

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from boltzgames import (
    ForwardBackwardSolver,
    GameValidationError,
    LinearPenalty,
    SimplifiedGame,
    boltzmann_policy,
    forward_backward_convergence_bound,
    interaction_penalty,
    occupancy_backward_step,
    occupancy_forward_step,
    soft_value,
    validate_simplified_game,
)
from boltzgames.envs import generate_random_simplified_game

import oracles
from conftest import own_kernel_lists


def small_game(seed, *, n_agents=2, n_states=3, n_actions=2, horizon=3,
               mu_scale=0.01, reward_scale=0.1, beta=1.0):
    return generate_random_simplified_game(
        n_agents, n_states, n_actions, horizon, seed,
        mu_scale=mu_scale, reward_scale=reward_scale, beta=beta,
    )


def sup(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


# ---------------------------------------------------------------------------
# the linear penalty
# ---------------------------------------------------------------------------

def test_linear_penalty_matches_direct_sum():
    rng = np.random.default_rng(0)
    pen = LinearPenalty((0.5, 2.0, 0.25))
    for _ in range(50):
        occs = [rng.dirichlet(np.ones(4)) for _ in range(3)]
        got = pen.penalty(occs)
        want = -(0.5 * occs[0] + 2.0 * occs[1] + 0.25 * occs[2])
        assert sup(got, want) < 1e-15
        assert sup(interaction_penalty(pen, occs), want) < 1e-15


def test_linear_penalty_lipschitz_and_sup_bounds_hold():
    rng = np.random.default_rng(1)
    pen = LinearPenalty((0.3, 1.2))
    lip = pen.lipschitz_constant()
    assert lip == pytest.approx(1.5)
    assert pen.sup_bound() == pytest.approx(1.5)
    for _ in range(200):
        a = [rng.dirichlet(np.ones(5)) for _ in range(2)]
        b = [rng.dirichlet(np.ones(5)) for _ in range(2)]
        gap = np.max(np.abs(pen.penalty(a) - pen.penalty(b)))
        worst = max(np.max(np.abs(x - y)) for x, y in zip(a, b))
        assert gap <= lip * worst + 1e-12
        assert np.max(np.abs(pen.penalty(a))) <= pen.sup_bound() + 1e-12


def test_linear_penalty_rejects_bad_weights_and_counts():
    with pytest.raises(ValueError):
        LinearPenalty((0.5, -0.1))
    with pytest.raises(ValueError):
        LinearPenalty((np.inf,))
    pen = LinearPenalty((1.0, 1.0))
    with pytest.raises(ValueError):
        pen.penalty([np.ones(3)])
    assert LinearPenalty(()).penalty([]).shape == (0,)


def test_penalty_for_excludes_own_weight():
    game = small_game(2, n_agents=3)
    for i in range(3):
        pen = game.penalty_for(i)
        others = [game.mu[j] for j in range(3) if j != i]
        assert pen.weights == tuple(others)
        assert game.opponent_indices(i) == [j for j in range(3) if j != i]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def test_validation_rejects_malformed_games():
    good = small_game(3)

    def remade(**changes):
        fields = dict(
            n_agents=good.n_agents, n_states=good.n_states,
            n_actions=good.n_actions, kernels=good.kernels,
            rewards=good.rewards, final_rewards=good.final_rewards,
            horizon=good.horizon, mu=good.mu,
            initial_states=good.initial_states, beta=good.beta,
        )
        fields.update(changes)
        return validate_simplified_game(SimplifiedGame(**fields))

    bad_kernel = np.array(good.kernels[0])
    bad_kernel[0, 0] *= 2.0
    with pytest.raises(GameValidationError):
        remade(kernels=(bad_kernel, good.kernels[1]))
    with pytest.raises(GameValidationError):
        remade(kernels=(good.kernels[0][:, :1, :], good.kernels[1]))
    with pytest.raises(GameValidationError):
        remade(rewards=(good.rewards[0][:, :1], good.rewards[1]))
    with pytest.raises(GameValidationError):
        remade(final_rewards=(good.final_rewards[0][:-1],
                              good.final_rewards[1]))
    with pytest.raises(GameValidationError):
        remade(mu=(-0.5, 0.5))
    with pytest.raises(GameValidationError):
        remade(initial_states=(0, good.n_states))
    with pytest.raises(GameValidationError):
        remade(horizon=-1)
    with pytest.raises(GameValidationError):
        remade(beta=0.0)
    finals = (np.full(good.n_states, np.nan), good.final_rewards[1])
    with pytest.raises(GameValidationError):
        remade(final_rewards=finals)


def test_validation_freezes_arrays():
    game = small_game(4)
    for arr in (*game.kernels, *game.rewards, *game.final_rewards):
        assert not arr.flags.writeable


# ---------------------------------------------------------------------------
# the two passes
# ---------------------------------------------------------------------------

def test_forward_step_conserves_mass_and_matches_oracle():
    game = small_game(5, n_states=4, horizon=4)
    rng = np.random.default_rng(5)
    for agent in range(game.n_agents):
        qs = [rng.normal(size=(game.n_states, game.n_actions))
              for _ in range(game.horizon)]
        policies = [boltzmann_policy(q, game.beta).tolist() for q in qs]
        want = oracles.occupancy_forward(
            game.n_states, game.n_actions, own_kernel_lists(game, agent),
            policies, game.initial_states[agent], game.horizon,
        )
        occ = np.zeros(game.n_states)
        occ[game.initial_states[agent]] = 1.0
        for tau in range(game.horizon):
            occ = occupancy_forward_step(game, agent, occ, qs[tau])
            assert abs(occ.sum() - 1.0) < 1e-12
            assert np.all(occ >= -1e-15)
            assert sup(occ, want[tau + 1]) < 1e-12


def test_backward_step_matches_explicit_loops():
    game = small_game(6, n_agents=3, n_states=3)
    rng = np.random.default_rng(6)
    agent = 1
    occs = [rng.dirichlet(np.ones(game.n_states)) for _ in range(3)]
    q_next = rng.normal(size=(game.n_states, game.n_actions))
    got = occupancy_backward_step(game, agent, occs, q_next)
    pol = boltzmann_policy(q_next, game.beta)
    v_next = soft_value(q_next, pol)
    for x in range(game.n_states):
        psi = -sum(game.mu[j] * occs[j][x] for j in range(3) if j != agent)
        for a in range(game.n_actions):
            cont = sum(game.kernels[agent][x, a, y] * v_next[y]
                       for y in range(game.n_states))
            want = game.rewards[agent][x, a] + psi + cont
            assert abs(got[x, a] - want) < 1e-12


def test_backward_step_rejects_bad_agent():
    game = small_game(7)
    occs = [np.ones(game.n_states) / game.n_states] * 2
    q = np.zeros((game.n_states, game.n_actions))
    with pytest.raises(ValueError):
        occupancy_backward_step(game, 2, occs, q)
    with pytest.raises(ValueError):
        occupancy_backward_step(game, -1, occs, q)


# ---------------------------------------------------------------------------
# the sufficient condition
# ---------------------------------------------------------------------------

def test_convergence_bound_arithmetic():
    game = small_game(8, n_agents=3)
    rep = forward_backward_convergence_bound(game)
    omega = max(
        max(np.max(np.abs(r)) for r in game.rewards),
        max(np.max(np.abs(f)) for f in game.final_rewards),
    )
    big_l = max(
        sum(game.mu[j] for j in range(3) if j != i) for i in range(3)
    )
    xi = (game.horizon + 1) * (omega + big_l)
    rhs = xi * np.exp(-game.beta * (game.horizon + 1) * xi)
    assert rep["omega"] == pytest.approx(omega)
    assert rep["L"] == pytest.approx(big_l)
    assert rep["phi"] == pytest.approx(big_l)
    assert rep["xi"] == pytest.approx(xi)
    assert rep["rhs"] == pytest.approx(rhs)
    assert rep["lhs"] == pytest.approx(2.0 * big_l * game.horizon)
    assert rep["satisfied"] == (rep["lhs"] <= rep["rhs"])


def test_single_agent_has_no_coupling_term():
    game = small_game(9, n_agents=1)
    rep = forward_backward_convergence_bound(game)
    assert rep["L"] == 0.0
    assert rep["lhs"] == 0.0
    assert rep["satisfied"]


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

def test_solver_deltas_shrink_inside_the_condition():
    game = small_game(10)
    assert forward_backward_convergence_bound(game)["satisfied"]
    fb = ForwardBackwardSolver(n_iterations=60).fit(game)
    deltas = fb.trace_.deltas
    assert len(deltas) == 60
    assert deltas[-1] < 1e-10
    # eventually monotone decay
    tail = deltas[5:]
    assert all(a >= b or b < 1e-14 for a, b in zip(tail, tail[1:]))
    assert not fb.converged_  # epsilon = 0 never declares convergence


def test_solver_matches_one_manual_alternation_at_the_fixed_point():
    game = small_game(11)
    fb = ForwardBackwardSolver(n_iterations=80).fit(game)
    m, t = game.n_agents, game.horizon
    # forward pass from the fitted tables
    occ = [np.zeros((t + 1, game.n_states)) for _ in range(m)]
    for i in range(m):
        occ[i][0, game.initial_states[i]] = 1.0
        for tau in range(t):
            occ[i][tau + 1] = occupancy_forward_step(
                game, i, occ[i][tau], fb.q_by_time_[i][tau]
            )
        assert sup(occ[i], fb.occupancies_[i]) < 1e-10
    # backward pass against those occupancies reproduces the tables
    boundary = [np.repeat(f[:, None], game.n_actions, axis=1)
                for f in game.final_rewards]
    for i in range(m):
        new_i = np.empty_like(fb.q_by_time_[i])
        for tau in range(t, -1, -1):
            q_next = boundary[i] if tau == t else new_i[tau + 1]
            new_i[tau] = occupancy_backward_step(
                game, i, [occ[j][tau] for j in range(m)], q_next
            )
        assert sup(new_i, fb.q_by_time_[i]) < 1e-9


def test_solver_occupancies_match_oracle_forward():
    game = small_game(12, n_states=4, horizon=4, mu_scale=0.002)
    fb = ForwardBackwardSolver(n_iterations=60).fit(game)
    for i in range(game.n_agents):
        policies = [
            boltzmann_policy(fb.q_by_time_[i][tau], game.beta).tolist()
            for tau in range(game.horizon)
        ]
        want = oracles.occupancy_forward(
            game.n_states, game.n_actions, own_kernel_lists(game, i),
            policies, game.initial_states[i], game.horizon,
        )
        assert sup(fb.occupancies_[i], want) < 1e-10


def test_solver_init_independence_inside_the_condition():
    game = small_game(13)
    ref = ForwardBackwardSolver(n_iterations=80).fit(game)
    for seed in range(3):
        fb = ForwardBackwardSolver(
            n_iterations=200, init="random", init_scale=0.5, seed=seed,
        ).fit(game)
        for i in range(game.n_agents):
            assert sup(fb.q_by_time_[i], ref.q_by_time_[i]) < 1e-8


def test_solver_occupancy_sums_stay_one():
    game = small_game(14, n_agents=3, mu_scale=0.001)
    fb = ForwardBackwardSolver(n_iterations=40).fit(game)
    assert max(abs(v - 1.0) for v in fb.trace_.occupancy_sum_min) < 1e-12
    assert max(abs(v - 1.0) for v in fb.trace_.occupancy_sum_max) < 1e-12
    assert len(fb.trace_.wall_ms) == fb.trace_.iterations == 40


def test_solver_epsilon_stops_early():
    game = small_game(15)
    fb = ForwardBackwardSolver(n_iterations=500, epsilon=1e-8).fit(game)
    assert fb.converged_
    assert fb.trace_.iterations < 500
    assert fb.trace_.deltas[-1] < 1e-8


def test_solver_zero_iterations_keeps_the_init():
    game = small_game(16)
    fb = ForwardBackwardSolver(n_iterations=0).fit(game)
    for i in range(game.n_agents):
        assert np.all(fb.q_by_time_[i] == 0.0)
        # occupancy never propagated beyond the delta at tau = 0
        assert fb.occupancies_[i][0, game.initial_states[i]] == 1.0
    assert fb.trace_.iterations == 0


def test_solver_shapes_and_policies():
    game = small_game(17, n_agents=3, n_states=4, horizon=5, mu_scale=0.001)
    fb = ForwardBackwardSolver(n_iterations=30).fit(game)
    t, n, a = game.horizon, game.n_states, game.n_actions
    assert len(fb.q_by_time_) == 3
    for i in range(3):
        assert fb.q_by_time_[i].shape == (t + 1, n, a)
        assert fb.occupancies_[i].shape == (t + 1, n)
    assert len(fb.policies_by_time_) == t + 1
    for tau in range(t + 1):
        for i in range(3):
            want = boltzmann_policy(fb.q_by_time_[i][tau], game.beta)
            assert sup(fb.policies_by_time_[tau][i], want) < 1e-15


def test_solver_predict_argmax_per_agent():
    game = small_game(18)
    fb = ForwardBackwardSolver(n_iterations=40).fit(game)
    states = np.array([[0, 1], [2, 0], [1, 1]])
    acts = fb.predict(states, time_step=1)
    assert acts.shape == (3, 2)
    for r, (x0, x1) in enumerate(states):
        assert acts[r, 0] == np.argmax(fb.policies_by_time_[1][0][x0])
        assert acts[r, 1] == np.argmax(fb.policies_by_time_[1][1][x1])


def test_solver_rejections_and_warnings():
    game = small_game(19)
    with pytest.raises(NotFittedError):
        ForwardBackwardSolver().predict([[0, 0]])
    with pytest.raises(ValueError):
        ForwardBackwardSolver(n_iterations=-1).fit(game)
    with pytest.raises(ValueError):
        ForwardBackwardSolver(init="ones").fit(game)
    strong = small_game(19, mu_scale=5.0)
    assert not forward_backward_convergence_bound(strong)["satisfied"]
    with pytest.warns(RuntimeWarning):
        ForwardBackwardSolver(n_iterations=5).fit(strong)


def test_solver_get_params_round_trip():
    fb = ForwardBackwardSolver(n_iterations=7, epsilon=1e-6, init="random",
                               init_scale=0.2, seed=3)
    params = fb.get_params()
    assert params == {
        "n_iterations": 7, "epsilon": 1e-6, "init": "random",
        "init_scale": 0.2, "seed": 3,
    }
    other = ForwardBackwardSolver().set_params(**params)
    assert other.get_params() == params
