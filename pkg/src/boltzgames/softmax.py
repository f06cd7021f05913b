"""Boltzmann policies, soft values, and log-partition numerics.

Throughout, a Q table has one row per state and one column per action, and a
policy table is row-stochastic with matching shape. The exploration policy is
the Gibbs/Boltzmann distribution pi(a | x) proportional to exp(beta * Q(x, a));
its soft value is the plain expectation of Q under pi, not the log-partition.
All exponentials are computed with per-row max subtraction so arbitrarily
large Q values do not overflow.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def _check_q(q, name="q"):
    arr = np.asarray(q, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise ValueError(f"{name} needs a non-empty action axis")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def boltzmann_policy(q, beta: float) -> np.ndarray:
    """Row-wise Boltzmann distribution exp(beta * q) / sum exp(beta * q).

    The action axis is the last one; any leading axes (states, time) pass
    through. Rows are exact distributions up to float rounding and the result
    is invariant to shifting any row by a constant.
    """
    arr = _check_q(q)
    if not (np.isfinite(beta) and beta >= 0):
        raise ValueError(f"beta must be finite and >= 0, got {beta!r}")
    z = beta * arr
    z -= z.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def soft_value(q, policy) -> np.ndarray:
    """Expected Q under a policy, row by row: sum_a policy(x, a) * q(x, a)."""
    arr = np.asarray(q, dtype=float)
    pol = np.asarray(policy, dtype=float)
    if arr.shape != pol.shape:
        raise ValueError(
            f"q shape {arr.shape} and policy shape {pol.shape} differ"
        )
    return (arr * pol).sum(axis=-1)


def softmax_log(values, axis=-1) -> np.ndarray:
    """log sum_k exp(values_k) along an axis, max-subtracted for stability."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("softmax_log of an empty vector is undefined")
    if not np.all(np.isfinite(arr)):
        raise ValueError("softmax_log input contains non-finite values")
    return logsumexp(arr, axis=axis)


def policy_l1_distance(q1, q2, beta: float) -> np.ndarray:
    """Per-row L1 distance between the Boltzmann policies of two Q tables."""
    p1 = boltzmann_policy(q1, beta)
    p2 = boltzmann_policy(q2, beta)
    if p1.shape != p2.shape:
        raise ValueError(f"q shapes {p1.shape} and {p2.shape} differ")
    return np.abs(p1 - p2).sum(axis=-1)


def policies_from_q(q_tables, beta: float) -> list:
    """Boltzmann policy for each agent's Q table."""
    return [boltzmann_policy(q, beta) for q in q_tables]


def sup_distance(q_new, q_old) -> float:
    """Largest absolute entry difference across two stacks of tables."""
    return max(
        float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        for a, b in zip(q_new, q_old)
    )
