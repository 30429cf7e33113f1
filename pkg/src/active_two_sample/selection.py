"""Vanishing epsilon-greedy source selection.

With probability ``1 - eps(t)`` the source with the largest running average
payoff is exploited (ties split uniformly; unvisited sources never win
unless every source is unvisited), otherwise a source is drawn uniformly.
The two-stage draw is collapsed into one categorical draw from the mixture
``p``, which is distributionally identical and lets ``p`` be audited.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive, check_positive_int
from .exceptions import ConfigError


def compute_C(K: int, L: float):
    """Exploration constant ``C`` and ``c1 = 2560 / L^2``.

    Returns ``(C, c1)``.
    """
    K = check_positive_int(K, "K")
    if not isinstance(L, (int, float)) or not L > 0 or not math.isfinite(L):
        raise ConfigError(f"L must be a positive finite number, got {L!r}")
    c1 = 2560.0 / (L * L)
    C = K * (c1 + 40.0 * K) + 4.0 * K * math.sqrt(5.0 * K * (c1 + 20.0 * K))
    return C, c1


def epsilon_schedule(t, C):
    return np.minimum(1.0, C / np.asarray(t, dtype=float)) if np.ndim(t) else min(1.0, C / t)


def selection_probabilities(sums, counts, eps):
    """Mixture ``p`` over sources; broadcasts over a leading batch axis.

    ``sums`` and ``counts`` are the per-source payoff sums and visit counts.
    """
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts)
    visited = counts > 0
    mu = np.divide(sums, counts, out=np.zeros_like(sums), where=visited)
    masked = np.where(visited, mu, -np.inf)
    best = masked.max(axis=-1, keepdims=True)
    leaders = np.where(visited.any(axis=-1, keepdims=True), visited & (masked == best), True)
    K = sums.shape[-1]
    eps = np.asarray(eps, dtype=float)[..., None] if np.ndim(eps) else eps
    return (1.0 - eps) * leaders / leaders.sum(axis=-1, keepdims=True) + eps / K


def draw_index(p, u):
    """Inverse-CDF draw from the rows of ``p`` using uniforms ``u``."""
    cdf = np.cumsum(p, axis=-1)
    idx = (np.asarray(u)[..., None] >= cdf).sum(axis=-1)
    return np.minimum(idx, np.shape(p)[-1] - 1)


def leader_index(sums, counts):
    """Index of the unique largest running average, ``-1`` if tied or all unvisited."""
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts)
    visited = counts > 0
    mu = np.divide(sums, counts, out=np.zeros_like(sums), where=visited)
    masked = np.where(visited, mu, -np.inf)
    best = masked.max(axis=-1, keepdims=True)
    leaders = visited & (masked == best)
    return np.where(leaders.sum(axis=-1) == 1, leaders.argmax(axis=-1), -1)


@dataclass
class SelectorState:
    """Running payoff sums and counts per source.

    The running average of an unvisited source is reported as ``None``;
    it ranks below every real value.
    """

    K: int
    C: float
    L: float | None = None
    sums: np.ndarray = None
    counts: np.ndarray = None
    t: int = 0

    def __post_init__(self):
        check_positive_int(self.K, "K")
        check_positive(self.C, "C")
        self.sums = np.zeros(self.K) if self.sums is None else np.asarray(self.sums, dtype=float)
        self.counts = np.zeros(self.K, dtype=np.int64) if self.counts is None else np.asarray(self.counts)

    @classmethod
    def from_gap_bound(cls, K, L, C_override=None):
        C = compute_C(K, L)[0] if C_override is None else C_override
        return cls(K, C, L)

    @property
    def means(self) -> list:
        return [None if n == 0 else s / n for s, n in zip(self.sums, self.counts)]


def select_source(state: SelectorState, t: int, rng: np.random.Generator):
    """Draw the source for slot ``t``. Returns ``(index, p)``."""
    if t != state.t + 1:
        raise ConfigError(f"slot index {t} does not follow selector slot {state.t}")
    p = selection_probabilities(state.sums, state.counts, epsilon_schedule(t, state.C))
    return int(draw_index(p, rng.random())), p


def record_outcome(state: SelectorState, k: int, v: float) -> SelectorState:
    sums = state.sums.copy()
    counts = state.counts.copy()
    sums[k] += v
    counts[k] += 1
    return SelectorState(state.K, state.C, state.L, sums, counts, state.t + 1)
