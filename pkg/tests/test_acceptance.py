"""End-to-end acceptance checks, one test per advertised guarantee.

Each test exercises the full library surface the way a user would and pins
the guarantee at its stated tolerance: fixed-point uniqueness and contraction
on a random game suite, agreement with brute-force oracles, the published
equilibria of the pursuit and driving scenes, damping and occupancy behavior,
the Lipschitz lemmas behind the convergence conditions, gradient correctness
of the reward-learning dual, feature matching of the projected-gradient
learner, and the hand arithmetic of every sufficient-condition report.
"""

from __future__ import annotations

import contextlib
import dataclasses
import math
import time
import warnings

import numpy as np
import pytest

from boltzgames import (
    ForwardBackwardSolver,
    InfiniteHorizonSolver,
    MarkovGame,
    RolloutConfig,
    SimplifiedGame,
    TransitionKernel,
    boltzmann_policy,
    build_driving_scene,
    build_pursuit_3p,
    damping_convergence_condition,
    finite_contraction_bound,
    forward_backward_convergence_bound,
    generate_random_game,
    generate_random_simplified_game,
    infinite_contraction_bound,
    joint_index,
    model_feature_expectation,
    online_irl_step,
    policy_l1_distance,
    run_simplified_rollouts,
    scale_rewards_to_contraction,
    soft_value,
    solve_finite_horizon,
    validate_game,
    validate_simplified_game,
)
from boltzgames.envs import (
    ACTION_NAMES,
    DRIVING_CROSSING_CELLS,
    DRIVING_GOALS,
    DRIVING_JUNCTION_CELLS,
)
from boltzgames.irl import causal_entropy_backward, dual_gradient, dual_objective

import oracles
from conftest import dense_transition, finals_lists, rewards_lists


@contextlib.contextmanager
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


# ---------------------------------------------------------------------------
# random infinite-horizon suite: 50 games, rewards scaled onto the
# contraction bound, solved from 5 random initializations each
# ---------------------------------------------------------------------------

N_SUITE_GAMES = 50
N_INITS = 5


@pytest.fixture(scope="module")
def random_infinite_suite():
    rng = np.random.default_rng(2026)
    entries = []
    t0 = time.perf_counter()
    for g in range(N_SUITE_GAMES):
        n_agents = int(rng.choice([2, 3]))
        states = int(rng.integers(2, 5))
        actions = int(rng.integers(2, 4))
        game = generate_random_game(
            n_agents, states, actions, "infinite", 1.0, 1000 + g, gamma=0.9
        )
        game = scale_rewards_to_contraction(game, safety=1.0)
        solvers = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for init_seed in range(N_INITS):
                solvers.append(
                    InfiniteHorizonSolver(
                        epsilon=1e-9, init="random", seed=init_seed
                    ).fit(game)
                )
        entries.append(solvers)
    return {"entries": entries, "elapsed": time.perf_counter() - t0}


def test_random_suite_unique_fixed_point_across_inits(random_infinite_suite):
    assert random_infinite_suite["elapsed"] < 60.0
    for solvers in random_infinite_suite["entries"]:
        assert all(s.converged_ for s in solvers)
        for a in range(N_INITS):
            for b in range(a + 1, N_INITS):
                spread = max(
                    float(np.max(np.abs(qa - qb)))
                    for qa, qb in zip(solvers[a].q_, solvers[b].q_)
                )
                assert spread < 1e-6


def test_random_suite_residuals_contract_monotonically(random_infinite_suite):
    for solvers in random_infinite_suite["entries"]:
        for solver in solvers:
            r = np.asarray(solver.trace_.residuals)
            positive = r[r > 0]
            slope = np.polyfit(np.arange(positive.size), np.log(positive), 1)[0]
            assert math.exp(slope) < 1.0
            tail = r[1:]  # from the second sweep on
            assert np.all(tail[1:] <= tail[:-1])


# ---------------------------------------------------------------------------
# solver fixed points against the brute-force loop oracles
# ---------------------------------------------------------------------------

def test_solver_fixed_points_match_bruteforce_oracles():
    for seed in range(20):
        discounted = scale_rewards_to_contraction(
            generate_random_game(2, 2, 2, "infinite", 1.0, seed, gamma=0.9),
            safety=0.9,
        )
        solver = InfiniteHorizonSolver(epsilon=1e-12).fit(discounted)
        oracle_q, ok = oracles.infinite_fixed_point(
            2, discounted.n_joint_states, 2, dense_transition(discounted),
            rewards_lists(discounted), discounted.gamma, discounted.beta,
            tol=1e-12,
        )
        assert ok and solver.converged_
        for i in range(2):
            assert np.max(np.abs(solver.q_[i] - oracle_q[i])) < 1e-8

        staged = generate_random_game(
            2, 2, 2, "finite", 0.04, seed, horizon=3, final_scale=0.04
        )
        solution = solve_finite_horizon(staged, epsilon=1e-12)
        oracle_by_time, ok = oracles.finite_backward(
            2, staged.n_joint_states, 2, dense_transition(staged),
            rewards_lists(staged), finals_lists(staged), 3, staged.beta,
            tol=1e-12,
        )
        assert ok and solution.converged
        for tau in range(3):
            for i in range(2):
                diff = np.abs(
                    solution.q_by_time[tau][i] - np.asarray(oracle_by_time[tau][i])
                )
                assert np.max(diff) < 1e-8


# ---------------------------------------------------------------------------
# three-player pursuit equilibria
# ---------------------------------------------------------------------------

def test_three_player_pursuit_stays_put_with_one_step_left():
    # both hunters adjacent to the prey, one decision left: step rewards are
    # functions of the current placement only, so the last decision changes
    # nothing, every mixed strategy is exactly uniform, and deterministic
    # execution falls back to the lowest action index, which is "stay"
    game = build_pursuit_3p(initial=(1, 5, 2), horizon=1)
    with quiet():
        solution = solve_finite_horizon(game, epsilon=1e-10)
    assert solution.converged
    x = joint_index((1, 5, 2), (9, 9, 9))
    assert ACTION_NAMES[0] == "stay"
    for i in range(3):
        row = solution.policies_by_time[0][i][x]
        assert float(np.ptp(row)) == 0.0
        assert int(np.argmax(row)) == 0


def test_damping_grid_reaches_one_equilibrium_with_fewer_iterations():
    # the damping factor only reshapes the path: every setting reaches the
    # same argmax equilibrium, and stronger damping pays more inner iterations
    game = build_pursuit_3p()
    alphas = (0.05, 0.2, 0.4, 0.6)
    t0 = time.perf_counter()
    solutions = {}
    with quiet():
        for alpha in alphas:
            solutions[alpha] = solve_finite_horizon(
                game, epsilon=1e-6, alpha=alpha
            )
    assert time.perf_counter() - t0 < 120.0
    assert all(s.converged for s in solutions.values())

    totals = [
        sum(t.iterations for t in solutions[alpha].traces) for alpha in alphas
    ]
    assert all(a >= b for a, b in zip(totals, totals[1:]))

    # argmax sets per state: actions within 1e-9 of the row maximum (states
    # that are symmetric under relabeling hold exact ties, where the winner
    # is numerical noise; the tie sets themselves must agree)
    def optimal_sets(solution):
        masks = []
        for tau in range(game.horizon):
            for i in range(3):
                q = solution.q_by_time[tau][i]
                masks.append(q >= q.max(axis=-1, keepdims=True) - 1e-9)
        return masks

    sets_by_alpha = {alpha: optimal_sets(solutions[alpha]) for alpha in alphas}
    base = sets_by_alpha[alphas[0]]
    for alpha in alphas[1:]:
        for got, want in zip(sets_by_alpha[alpha], base):
            assert np.array_equal(got, want)
    argmaxes = {
        alpha: [
            np.argmax(solutions[alpha].q_by_time[tau][i], axis=-1)
            for tau in range(game.horizon) for i in range(3)
        ]
        for alpha in alphas
    }
    for mask_index, mask in enumerate(base):
        untied = mask.sum(axis=-1) == 1
        for alpha in alphas[1:]:
            assert np.array_equal(
                argmaxes[alphas[0]][mask_index][untied],
                argmaxes[alpha][mask_index][untied],
            )


# ---------------------------------------------------------------------------
# the driving scene: occupancy health and the argmax story
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def driving_solution():
    game = build_driving_scene()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        solver = ForwardBackwardSolver(n_iterations=60, epsilon=0.0).fit(game)
    return game, solver


def test_driving_occupancies_stay_normalized_every_iteration(driving_solution):
    game, solver = driving_solution
    trace = solver.trace_
    assert trace.iterations == 60
    assert all(abs(v - 1.0) <= 1e-10 for v in trace.occupancy_sum_min)
    assert all(abs(v - 1.0) <= 1e-10 for v in trace.occupancy_sum_max)
    for occ in solver.occupancies_:
        assert occ.shape == (game.horizon + 1, game.n_states)
        assert np.max(np.abs(occ.sum(axis=1) - 1.0)) <= 1e-10


def test_driving_argmax_rollout_yields_polite_intersection_order(
        driving_solution):
    game, solver = driving_solution
    report = run_simplified_rollouts(
        game, solver.policies_by_time_,
        RolloutConfig(execution="argmax", episodes=1, seed=0,
                      initial_state="fixed"),
    )
    states, _ = report.trajectories[0]
    assert states.shape == (game.horizon + 2, 4)

    crossing = set(DRIVING_CROSSING_CELLS)
    junction = set(DRIVING_JUNCTION_CELLS)
    ped = states[:, 3]
    ped_crossing = [t for t, c in enumerate(ped) if c in crossing]
    assert ped_crossing == [1, 2]

    car_junction = {}
    for car in range(3):
        taus = [t for t, c in enumerate(states[:, car]) if c in junction]
        car_junction[car] = taus
        on_crossing = [t for t, c in enumerate(states[:, car]) if c in crossing]
        assert all(t > max(ped_crossing) for t in on_crossing)

    # pinned regression: cars take the junction one at a time, in the order
    # car2, car1, car3, over disjoint two-step windows
    assert car_junction == {0: [8, 9], 1: [3, 4], 2: [10, 11]}
    for tau in range(states.shape[0]):
        inside = [car for car in range(3) if tau in car_junction[car]]
        assert len(inside) <= 1

    # everyone ends at its goal and no two agents ever share a cell
    assert states[-1].tolist() == list(DRIVING_GOALS)
    for row in states:
        assert len(set(row.tolist())) == 4


# ---------------------------------------------------------------------------
# random own-state suite inside the sufficient convergence condition
# ---------------------------------------------------------------------------

def test_simplified_random_suite_contracts_from_any_initialization():
    for seed in range(20):
        game = generate_random_simplified_game(
            2, 3, 2, 3, seed, mu_scale=0.002, reward_scale=0.05,
            final_scale=0.05,
        )
        assert forward_backward_convergence_bound(game)["satisfied"]

        zeros = ForwardBackwardSolver(n_iterations=50, epsilon=0.0).fit(game)
        deltas = np.asarray(zeros.trace_.deltas)
        live = deltas[deltas > 1e-13]
        assert live.size >= 2
        assert np.all(live[1:] <= 0.5 * live[:-1])

        other = ForwardBackwardSolver(
            n_iterations=50, epsilon=0.0, init="random", seed=seed + 1
        ).fit(game)
        agreement = max(
            float(np.max(np.abs(qa - qb)))
            for qa, qb in zip(zeros.q_by_time_, other.q_by_time_)
        )
        assert agreement < 1e-6


# ---------------------------------------------------------------------------
# the Lipschitz lemmas behind the conditions
# ---------------------------------------------------------------------------

def test_policy_and_soft_value_changes_bounded_by_lipschitz_constants():
    rng = np.random.default_rng(8)
    policy_violations = 0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        beta = float(rng.uniform(0.1, 8.0))
        q1 = rng.uniform(-5.0, 5.0, (100, n))
        q2 = rng.uniform(-5.0, 5.0, (100, n))
        lhs = policy_l1_distance(q1, q2, beta)
        rhs = 2.0 * beta * np.max(np.abs(q1 - q2), axis=-1)
        policy_violations += int(np.sum(lhs > rhs + 1e-12))
    assert policy_violations == 0

    value_violations = 0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        beta = float(rng.uniform(0.1, 8.0))
        xi = float(rng.uniform(0.5, 5.0))
        q1 = rng.uniform(-xi, xi, (100, n))
        q2 = rng.uniform(-xi, xi, (100, n))
        g1 = soft_value(q1, boltzmann_policy(q1, beta))
        g2 = soft_value(q2, boltzmann_policy(q2, beta))
        lhs = np.abs(g1 - g2)
        rhs = (1.0 + xi * beta) * np.max(np.abs(q1 - q2), axis=-1)
        value_violations += int(np.sum(lhs > rhs + 1e-12))
    assert value_violations == 0


# ---------------------------------------------------------------------------
# reward learning: the dual's gradient and feature matching
# ---------------------------------------------------------------------------

def test_dual_gradient_matches_central_finite_differences():
    # one decision epoch: the opponent coupling drops out and the analytic
    # gap must equal the numerical derivative of the dual up to truncation
    for seed in range(5):
        game = generate_random_game(
            2, 2, 2, "finite", 0.3, 100 + seed, horizon=1, beta=1.0
        )
        rng = np.random.default_rng(seed)
        feats = [
            rng.normal(size=(game.n_joint_states, game.n_actions, 3)) * 0.5
            for _ in range(2)
        ]
        thetas = [rng.normal(size=3) * 0.4 for _ in range(2)]
        empirical = rng.normal(size=3)

        def objective(t):
            return dual_objective(game, feats, [thetas[0], t], 1, empirical)

        fd = oracles.central_difference(objective, thetas[1].tolist(), h=1e-4)
        res = causal_entropy_backward(
            game, [f @ t for f, t in zip(feats, thetas)]
        )
        model = model_feature_expectation(game, res.policies_by_time, feats, 1)
        grad = dual_gradient(empirical, model)
        assert np.max(np.abs(np.asarray(fd) - grad)) < 1e-5


def test_projected_gradient_matches_demonstrated_feature_expectations():
    # demonstrations summarized by their exact feature expectations (the
    # infinite-sample limit of logged episodes); the projected gradient must
    # close the per-coordinate relative gap to under 5% within 500 steps
    t0 = time.perf_counter()
    game = generate_random_game(2, 2, 2, "finite", 0.3, 424, horizon=2, beta=1.0)
    rng = np.random.default_rng(424)
    feats = [
        rng.normal(size=(game.n_joint_states, game.n_actions, 3)) * 0.5
        for _ in range(2)
    ]
    theta_star = rng.normal(size=3)
    theta_star *= 2.0 / np.linalg.norm(theta_star)
    shell = dataclasses.replace(
        game,
        rewards=(game.rewards[0], feats[1] @ theta_star),
        final_rewards=tuple(np.zeros(game.n_joint_states) for _ in range(2)),
        beta=1.0,
    )
    demo_solution = solve_finite_horizon(shell, epsilon=1e-10)
    demo = {
        1: model_feature_expectation(
            shell, demo_solution.policies_by_time, feats, 1
        )
    }

    thetas = [None, np.zeros(3)]
    first_met = None
    for step in range(500):
        thetas, info = online_irl_step(
            game, feats, thetas, 0, None,
            step_size=0.05, ball_radius=10.0, empirical_cache=demo,
        )
        relative = np.abs(info.gaps[1]) / (
            1.0 + np.abs(info.empirical_expectations[1])
        )
        if first_met is None and np.all(relative < 0.05):
            first_met = step + 1
    assert first_met is not None and first_met <= 500
    assert np.all(relative < 0.05)
    assert time.perf_counter() - t0 < 300.0


# ---------------------------------------------------------------------------
# sufficient-condition reports against hand arithmetic
# ---------------------------------------------------------------------------

def _uniform_joint_game():
    table = np.full((4, 4, 4), 0.25)
    game = MarkovGame(
        n_agents=2, state_sizes=(2, 2), n_actions=2,
        transition=TransitionKernel.from_dense(table, 4, 4),
        rewards=(np.full((4, 2), 0.05), np.full((4, 2), 0.05)),
        beta=1.0, horizon=3,
        final_rewards=(np.full(4, 0.02), np.full(4, 0.02)),
        p0=np.full(4, 0.25), name="hand-arithmetic",
    )
    return validate_game(game)


def _uniform_own_state_game():
    kernel = np.full((3, 2, 3), 1.0 / 3.0)
    game = SimplifiedGame(
        n_agents=2, n_states=3, n_actions=2, kernels=(kernel, kernel.copy()),
        rewards=(np.full((3, 2), 0.05), np.full((3, 2), 0.05)),
        final_rewards=(np.full(3, 0.02), np.full(3, 0.02)),
        horizon=2, mu=(0.01, 0.02), initial_states=(0, 1), beta=1.0,
    )
    return validate_simplified_game(game)


def test_bound_reports_reproduce_hand_arithmetic():
    # discounted coupling: rhs = (1 - gamma)^2 / (2 gamma M beta)
    discounted = generate_random_game(
        2, 2, 2, "infinite", 0.7, 5, gamma=0.5, beta=1.0
    )
    report = infinite_contraction_bound(discounted)
    assert abs(report["rhs"] - 0.125) < 1e-12
    direct = max(float(np.max(np.abs(r))) for r in discounted.rewards)
    assert abs(report["lhs"] - direct) < 1e-12
    assert report["satisfied"] == (report["lhs"] <= report["rhs"])

    # stage recursion: rhs = 1 / (2 beta (M - 1) (1 + T)) = 0.125 at
    # beta = 1, two agents, horizon 3; a single agent has no coupling
    staged = _uniform_joint_game()
    report = finite_contraction_bound(staged)
    assert abs(report["rhs"] - 0.125) < 1e-12
    assert abs(report["lhs"] - 0.05) < 1e-12
    assert report["satisfied"]
    solo = generate_random_game(1, 2, 2, "finite", 0.5, 7, horizon=2)
    assert np.isinf(finite_contraction_bound(solo)["rhs"])

    # damped stage recursion: gamma_ab = 2 beta (M - 1) (1 + T) alpha b
    report = damping_convergence_condition(staged, 0.5)
    assert abs(report["b"] - 0.025) < 1e-12
    assert abs(report["gamma_ab"] - 0.2) < 1e-12
    assert report["satisfied"]
    report = damping_convergence_condition(staged, 1.0)
    assert abs(report["gamma_ab"] - 0.4) < 1e-12
    assert report["satisfied"]

    # occupancy alternation: 2 L T <= xi exp(-beta (T + 1) xi) with
    # xi = (T + 1)(omega + phi) and L = phi = max_i sum_{j != i} mu_j
    own = _uniform_own_state_game()
    report = forward_backward_convergence_bound(own)
    assert abs(report["omega"] - 0.05) < 1e-12
    assert abs(report["L"] - 0.02) < 1e-12
    assert abs(report["phi"] - 0.02) < 1e-12
    assert abs(report["xi"] - 0.21) < 1e-12
    assert abs(report["lhs"] - 0.08) < 1e-12
    assert abs(report["rhs"] - 0.21 * math.exp(-0.63)) < 1e-12
    assert report["satisfied"]
