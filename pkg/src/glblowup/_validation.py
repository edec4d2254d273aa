"""Input checks shared by the estimators and the functional evaluators."""

import math

import numpy as np


class ValidationError(ValueError):
    """Raised when user input violates a documented precondition."""


def check_positive(value, name):
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_theta(theta):
    theta = float(theta)
    if not (0.0 <= theta <= math.pi / 2 + 1e-15):
        raise ValidationError(f"theta must lie in [0, pi/2], got {theta!r}")
    return min(theta, math.pi / 2)


def check_samples(grid, samples, name="samples", dtype=float):
    """Coerce ``samples`` to a 1-D array matching ``grid``."""
    arr = np.asarray(samples, dtype=dtype)
    if arr.ndim != 1 or arr.shape[0] != grid.n:
        raise ValidationError(
            f"{name} must have shape ({grid.n},), got {arr.shape}"
        )
    return arr


def check_state(state):
    """Reject states whose samples are not finite."""
    values = state.values
    if not np.all(np.isfinite(values)):
        raise ValidationError("state contains non-finite samples")
    return state


def check_nonnegative_real(state, atol=0.0):
    values = state.values
    if np.max(np.abs(values.imag), initial=0.0) > atol:
        return False
    return bool(np.all(values.real >= -atol))
