"""Game container, kernel, indexing, and file-format tests."""

from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest
import scipy.sparse as sp

from boltzgames import (
    GameFormatError,
    GameValidationError,
    JointState,
    MarkovGame,
    TransitionKernel,
    action_profile_components,
    action_profile_index,
    game_from_dict,
    game_to_dict,
    joint_components,
    joint_index,
    joint_transition_row,
    load_game,
    save_game,
    validate_game,
)

from conftest import dense_transition


def tiny_game(gamma=0.9, horizon=None, seed=0, beta=1.0):
    """A 2-agent game with 2 own states and 2 actions, random dynamics."""
    rng = np.random.default_rng(seed)
    n, k = 4, 4
    table = rng.uniform(0.1, 1.0, (n, k, n))
    table /= table.sum(axis=2, keepdims=True)
    kwargs = {}
    if horizon is not None:
        kwargs["horizon"] = horizon
        kwargs["final_rewards"] = tuple(rng.uniform(-1, 1, n) for _ in range(2))
    else:
        kwargs["gamma"] = gamma
    game = MarkovGame(
        n_agents=2,
        state_sizes=(2, 2),
        n_actions=2,
        transition=TransitionKernel.from_dense(table, n, k),
        rewards=tuple(rng.uniform(-1, 1, (n, 2)) for _ in range(2)),
        beta=beta,
        p0=np.full(n, 0.25),
        name="tiny",
        **kwargs,
    )
    return validate_game(game)


# ---------------------------------------------------------------------------
# indexing
# ---------------------------------------------------------------------------

def test_joint_index_row_major_agent0_outermost():
    sizes = (3, 4, 2)
    assert joint_index((0, 0, 0), sizes) == 0
    assert joint_index((0, 0, 1), sizes) == 1
    assert joint_index((0, 1, 0), sizes) == 2
    assert joint_index((1, 0, 0), sizes) == 8
    assert joint_index((2, 3, 1), sizes) == 23


def test_joint_index_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(200):
        sizes = tuple(rng.integers(1, 5, size=rng.integers(1, 4)))
        comps = tuple(int(rng.integers(0, s)) for s in sizes)
        flat = joint_index(comps, sizes)
        assert joint_components(flat, sizes) == comps


def test_joint_index_range_errors():
    with pytest.raises(ValueError):
        joint_index((2, 0), (2, 2))
    with pytest.raises(ValueError):
        joint_components(4, (2, 2))
    with pytest.raises(ValueError):
        joint_index((0, 0, 0), (2, 2))


def test_action_profile_index_matches_joint_index():
    for k in range(8):
        comps = action_profile_components(k, 3, 2)
        assert action_profile_index(comps, 3, 2) == k
        assert comps == joint_components(k, (2, 2, 2))


def test_joint_state_holds_both_views():
    js = JointState.from_components((1, 2), (2, 3))
    assert js.flat_index == 5
    assert JointState.from_flat(5, (2, 3)).components == (1, 2)


# ---------------------------------------------------------------------------
# transition kernel
# ---------------------------------------------------------------------------

def test_kernel_row_and_expected_values_dense():
    game = tiny_game()
    kern = game.transition
    table = np.asarray(dense_transition(game))
    v = np.arange(4, dtype=float)
    ev = kern.expected_values(v)
    assert ev.shape == (4, 4)
    for x in range(4):
        for k in range(4):
            assert np.allclose(kern.row(x, k), table[x, k])
            assert abs(ev[x, k] - table[x, k] @ v) < 1e-12


def test_kernel_propagate_conserves_mass():
    game = tiny_game(seed=3)
    rng = np.random.default_rng(4)
    for _ in range(20):
        w = rng.uniform(0, 1, 16)
        out = game.transition.propagate(w)
        assert out.shape == (4,)
        assert abs(out.sum() - w.sum()) < 1e-10


def test_kernel_sparse_backend_matches_dense():
    game = tiny_game(seed=5)
    dense = game.transition
    sparse = TransitionKernel(
        sp.csr_matrix(dense.matrix), dense.n_states, dense.n_action_profiles
    )
    assert sparse.is_sparse and not dense.is_sparse
    v = np.linspace(-1, 1, 4)
    assert np.allclose(sparse.expected_values(v), dense.expected_values(v))
    w = np.linspace(0, 1, 16)
    assert np.allclose(sparse.propagate(w), dense.propagate(w))
    assert np.allclose(sparse.row_sums(), 1.0)
    got = {(x, k, y): p for x, k, y, p in sparse.iter_entries()}
    want = {(x, k, y): p for x, k, y, p in dense.iter_entries() if p}
    assert got.keys() == want.keys()
    for key in want:
        assert abs(got[key] - want[key]) < 1e-15


def test_kernel_from_entries_matches_from_dense():
    rng = np.random.default_rng(6)
    table = rng.uniform(0.5, 1.0, (3, 2, 3))
    table /= table.sum(axis=2, keepdims=True)
    entries = [
        (x, k, y, table[x, k, y])
        for x in range(3) for k in range(2) for y in range(3)
    ]
    a = TransitionKernel.from_dense(table, 3, 2)
    b = TransitionKernel.from_entries(entries, 3, 2)
    mat = b.matrix.toarray() if b.is_sparse else b.matrix
    assert np.allclose(mat, a.matrix)


def test_kernel_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        TransitionKernel(np.ones((3, 4)), 2, 2)


def test_joint_transition_row_accepts_tuples():
    game = tiny_game(seed=7)
    by_flat = joint_transition_row(game, 3, 2)
    by_tuple = joint_transition_row(game, (1, 1), (1, 0))
    assert np.allclose(by_flat, by_tuple)
    with pytest.raises(ValueError):
        joint_transition_row(game, 99, 0)


# ---------------------------------------------------------------------------
# game validation
# ---------------------------------------------------------------------------

def test_game_is_frozen():
    game = tiny_game()
    with pytest.raises(dataclasses.FrozenInstanceError):
        game.beta = 2.0
    assert not game.rewards[0].flags.writeable


def test_validate_rejects_bad_reward_shape():
    game = tiny_game()
    broken = dataclasses.replace(game, rewards=(np.zeros((4, 3)),) * 2)
    with pytest.raises(GameValidationError):
        validate_game(broken)


def test_validate_rejects_nonstochastic_kernel():
    game = tiny_game()
    table = np.asarray(dense_transition(game))
    table[0, 0, 0] += 0.5
    broken = dataclasses.replace(
        game, transition=TransitionKernel.from_dense(table, 4, 4)
    )
    with pytest.raises(GameValidationError):
        validate_game(broken)


def test_validate_rejects_both_horizon_modes():
    game = tiny_game()
    broken = dataclasses.replace(game, horizon=3)
    with pytest.raises(GameValidationError):
        validate_game(broken)


def test_validate_rejects_final_rewards_without_horizon():
    game = tiny_game()
    broken = dataclasses.replace(game, final_rewards=(np.zeros(4),) * 2)
    with pytest.raises(GameValidationError):
        validate_game(broken)


def test_validate_rejects_bad_p0():
    game = tiny_game()
    broken = dataclasses.replace(game, p0=np.array([0.5, 0.5, 0.5, -0.5]))
    with pytest.raises(GameValidationError):
        validate_game(broken)


def test_with_beta_returns_new_game():
    game = tiny_game()
    hot = game.with_beta(4.0)
    assert hot.beta == 4.0 and game.beta == 1.0
    assert hot.n_joint_states == game.n_joint_states


def test_helper_properties():
    game = tiny_game(horizon=3, gamma=None)
    assert game.is_finite_horizon
    assert game.n_joint_states == 4
    assert game.n_action_profiles == 4
    assert list(game.agent_range()) == [0, 1]
    assert game.state_components(3) == (1, 1)
    assert game.state_index((1, 1)) == 3


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def test_dict_round_trip_exact_infinite():
    game = tiny_game(seed=11)
    back = game_from_dict(game_to_dict(game))
    assert back.n_agents == game.n_agents
    assert back.state_sizes == game.state_sizes
    assert back.gamma == game.gamma and back.horizon is None
    for a, b in zip(back.rewards, game.rewards):
        assert np.array_equal(a, b)
    assert np.array_equal(
        np.asarray(dense_transition(back)), np.asarray(dense_transition(game))
    )
    assert np.array_equal(back.p0, game.p0)


def test_dict_round_trip_exact_finite():
    game = tiny_game(horizon=4, gamma=None, seed=12)
    back = game_from_dict(game_to_dict(game))
    assert back.horizon == 4 and back.gamma is None
    for a, b in zip(back.final_rewards, game.final_rewards):
        assert np.array_equal(a, b)


def test_save_load_round_trip(tmp_path):
    game = tiny_game(seed=13)
    path = tmp_path / "game.json"
    save_game(game, path)
    back = load_game(path)
    assert back.name == "tiny"
    for a, b in zip(back.rewards, game.rewards):
        assert np.array_equal(a, b)


def test_load_game_resolves_builtin_names():
    game = load_game("pursuit-3p")
    assert game.n_agents == 3
    assert game.name == "pursuit-3p"


def test_game_from_dict_rejects_malformed_docs():
    game = tiny_game()
    doc = game_to_dict(game)
    for mutate in (
        lambda d: d.pop("transition"),
        lambda d: d.update(gamma=0.9, horizon=3),
        lambda d: d.update(unexpected=1),
    ):
        bad = json.loads(json.dumps(doc))
        mutate(bad)
        with pytest.raises(GameFormatError):
            game_from_dict(bad)


def test_load_game_rejects_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(GameFormatError):
        load_game(path)
