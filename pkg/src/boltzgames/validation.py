"""Input validation helpers shared across the package.

Small check functions in the spirit of sklearn's ``check_array``: each one
validates a single property and raises ``ValueError`` (or a subclass) with a
message that names the offending field.
"""

from __future__ import annotations

import numpy as np

PROB_TOL = 1e-12


class GameValidationError(ValueError):
    """A game definition violates a structural or stochastic constraint."""


class GameFormatError(ValueError):
    """A game file cannot be parsed or is missing/misusing a field."""


def as_float_array(value, name, shape=None):
    """Coerce to a float64 ndarray, checking finiteness and optionally shape."""
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_positive(value, name, strict=True):
    if strict and not value > 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    if not strict and not value >= 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return value


def check_in_interval(value, name, low, high, *, low_open=False, high_open=False):
    ok_low = value > low if low_open else value >= low
    ok_high = value < high if high_open else value <= high
    if not (ok_low and ok_high):
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise ValueError(f"{name} must lie in {lo}{low}, {high}{hi}, got {value!r}")
    return value


def check_index(value, name, size):
    if not isinstance(value, (int, np.integer)) or not 0 <= value < size:
        raise ValueError(f"{name} must be an integer in [0, {size}), got {value!r}")
    return int(value)


def check_choice(value, name, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def check_probability_vector(vec, name, tol=PROB_TOL):
    """Validate a single distribution: nonnegative entries summing to 1 +- tol."""
    arr = as_float_array(vec, name)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if np.any(arr < -tol):
        raise ValueError(f"{name} has negative entries (min {arr.min():.3e})")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"{name} sums to {total!r}, expected 1 within {tol}")
    return arr


def check_stochastic_rows(matrix, name, tol=PROB_TOL):
    """Validate that every row of a 2-D array is a distribution within tol."""
    arr = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(arr < -tol):
        bad = np.argwhere(arr < -tol)[0]
        raise ValueError(f"{name} has a negative entry at {tuple(bad)}")
    sums = arr.sum(axis=-1)
    off = np.abs(sums - 1.0)
    if np.any(off > tol):
        row = int(np.argmax(off))
        raise ValueError(
            f"{name} row {row} sums to {sums.ravel()[row]!r}, expected 1 within {tol}"
        )
    return arr
