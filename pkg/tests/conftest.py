"""Shared fixtures and converters between package objects and oracle input.

The oracles work on nested Python lists; these helpers pull dense tables out
of a game in the documented layout (transition[x][profile][y], rewards
R_i(x, own action)).
"""

from __future__ import annotations

import numpy as np


def dense_transition(game):
    """Full transition table as nested lists, transition[x][profile][y]."""
    kernel = game.transition
    mat = kernel.matrix
    if kernel.is_sparse:
        mat = mat.toarray()
    n = kernel.n_states
    k = kernel.n_action_profiles
    return np.asarray(mat, dtype=float).reshape(n, k, n).tolist()


def rewards_lists(game):
    """Per-agent reward tables as nested lists, rewards[i][x][own action]."""
    return [np.asarray(r, dtype=float).tolist() for r in game.rewards]


def finals_lists(game):
    """Final reward vectors as nested lists, or None."""
    if game.final_rewards is None:
        return None
    return [np.asarray(f, dtype=float).tolist() for f in game.final_rewards]


def own_kernel_lists(game, agent):
    """One agent's own-state kernel as nested lists, kernel[x][a][y]."""
    return np.asarray(game.kernels[agent], dtype=float).tolist()
