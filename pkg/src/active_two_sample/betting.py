"""Online Newton Step bettor and the log-domain wealth process."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_bet, check_unit_interval
from .exceptions import ConfigError

BET_BOUND = 0.5
ONS_GAIN = 2.0 / (2.0 - math.log(3.0))
ONS_SIGNS = {"ascent": 1.0, "paper-literal": -1.0}


def ons_sign_value(ons_sign: str) -> float:
    try:
        return ONS_SIGNS[ons_sign]
    except KeyError:
        raise ConfigError(f"ons_sign must be one of {sorted(ONS_SIGNS)}, got {ons_sign!r}") from None


def clip_bet(lam):
    return np.clip(lam, -BET_BOUND, BET_BOUND)


def ons_arrays(lam, a, v, sign=1.0):
    """Vectorised ONS update. Returns ``(lam_next, a_next)``.

    ``a`` is refreshed with ``z**2`` before the step on ``lam`` uses it.
    """
    z = v / (1.0 + v * lam)
    a_next = a + z * z
    return clip_bet(lam + sign * ONS_GAIN * z / a_next), a_next


@dataclass
class BettorState:
    lam: float = 0.0
    a: float = 1.0
    t: int = 0
    ons_sign: str = "ascent"

    def __post_init__(self):
        ons_sign_value(self.ons_sign)


def ons_step(state: BettorState, v: float) -> BettorState:
    """Feed one realised payoff ``v`` and return the bettor for the next slot."""
    check_unit_interval(v)
    lam, a = ons_arrays(state.lam, state.a, float(v), ons_sign_value(state.ons_sign))
    return BettorState(float(lam), float(a), state.t + 1, state.ons_sign)


@dataclass
class WealthState:
    """Wealth ``W_t`` kept as ``log W_t``. ``history`` holds ``(v, lam)`` pairs when not ``None``."""

    log_wealth: float = 0.0
    t: int = 0
    history: list | None = field(default=None, repr=False)

    @classmethod
    def start(cls, keep_history=False):
        return cls(0.0, 0, [] if keep_history else None)

    @property
    def wealth(self) -> float:
        return math.exp(self.log_wealth)


def wealth_update(w: WealthState, lam: float, v: float) -> WealthState:
    check_bet(lam)
    check_unit_interval(v)
    history = None if w.history is None else w.history + [(float(v), float(lam))]
    return WealthState(w.log_wealth + math.log1p(lam * v), w.t + 1, history)


@dataclass(frozen=True)
class WealthBound:
    """Growth-rate lower bounds on ``W_t`` for a payoff history.

    ``defined`` is False when a bound cannot be evaluated (``sum v^2 = 0``, or a
    non-positive denominator); the corresponding log value is then ``nan``.
    """

    log_first: float
    log_second: float
    defined: bool

    @property
    def first(self) -> float:
        return math.exp(self.log_first)

    @property
    def second(self) -> float:
        return math.exp(self.log_second)


def wealth_lower_bound(v_history) -> WealthBound:
    """Both growth bounds for the ONS wealth, computed in log space.

    first:  ``exp((sum v)^2 / (4 (sum v^2 + sum v))) / sum v^2``
    second: ``exp(t/8 * mean(v)^2 - log t)``
    """
    v = np.asarray(v_history, dtype=float)
    if v.size == 0:
        return WealthBound(math.nan, math.nan, False)
    t = v.size
    s1 = float(v.sum())
    s2 = float(v @ v)
    log_second = t / 8.0 * (s1 / t) ** 2 - math.log(t)
    denom = 4.0 * (s2 + s1)
    if s2 == 0.0 or denom <= 0.0:
        return WealthBound(math.nan, log_second, False)
    return WealthBound(s1 * s1 / denom - math.log(s2), log_second, True)


def running_wealth_lower_bound(v_path):
    """``log`` of the first bound at every prefix of ``v_path`` (``nan`` where undefined)."""
    v = np.asarray(v_path, dtype=float)
    s1 = np.cumsum(v)
    s2 = np.cumsum(v * v)
    denom = 4.0 * (s2 + s1)
    ok = (s2 > 0) & (denom > 0)
    out = np.full(v.shape, np.nan)
    out[ok] = s1[ok] ** 2 / denom[ok] - np.log(s2[ok])
    return out
