"""Small input-checking helpers shared by the estimators and the harness."""
from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigError, ContractViolation


def check_alpha(alpha, name="alpha"):
    if not isinstance(alpha, numbers.Real) or not 0.0 < float(alpha) < 1.0:
        raise ConfigError(f"{name} must lie in (0, 1), got {alpha!r}")
    return float(alpha)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_probability(value, name):
    if not isinstance(value, numbers.Real) or not 0.0 <= float(value) <= 1.0:
        raise ConfigError(f"{name} must be a probability in [0, 1], got {value!r}")
    return float(value)


def check_probability_vector(values, name, atol=1e-9):
    p = np.asarray(values, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ConfigError(f"{name} must be a non-empty list of probabilities")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > atol:
        raise ConfigError(f"{name} must be nonnegative and sum to 1, got {list(values)!r}")
    return p


def check_unit_interval(v, name="v"):
    """Betting increments must lie in [-1, 1]."""
    arr = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) > 1.0 + 1e-12):
        raise ContractViolation(f"{name} must lie in [-1, 1], got {v!r}")
    return v


def check_bet(lam, bound=0.5, name="lambda"):
    arr = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) > bound + 1e-12):
        raise ContractViolation(f"{name} must lie in [-{bound}, {bound}], got {lam!r}")
    return lam
