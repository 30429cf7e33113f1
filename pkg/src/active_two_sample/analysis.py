"""Population quantities of a scenario, computed from exact or quadrature moments.

For the linear ball class every supremum has a closed form:

* distance ``D = ||dmu|| / 2`` with witness weights ``dmu / (2 ||dmu||)``,
* ``sigma~^2 = lambda_max(E[dphi dphi^T]) / 4`` and
  ``sigma^2 = lambda_max(Cov(dphi)) / 4``.

The Kelly bet and the ``t0`` bound are found numerically.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .features import WITNESS_RADIUS, Witness, feature_maps_for
from .sources import feature_moments, true_mean_embedding

KELLY_GUARD = 1e-6


class AssumptionWarning(UserWarning):
    """A scenario violates one of the standing assumptions on the distances."""


def distance(source, fmap):
    """Return ``(D, g_star)`` for one source."""
    dmu = true_mean_embedding(source, fmap)
    norm = float(np.linalg.norm(dmu))
    if norm == 0.0:
        return 0.0, Witness.zero(fmap)
    return WITNESS_RADIUS * norm, Witness(dmu * (WITNESS_RADIUS / norm), fmap)


def gap(distances):
    """``(r, a_star)`` from per-source distances.

    Ties for the best source resolve to the lowest index. With one source the
    gap is that source's distance.
    """
    D = np.asarray(distances, dtype=float)
    if D.size == 0:
        raise ConfigError("gap needs at least one distance")
    a_star = int(np.argmax(D))
    if D[a_star] <= 0.0:
        warnings.warn("Assumption 2 (Global Distinguishability) violated: no source has D > 0",
                      AssumptionWarning, stacklevel=2)
    if D.size == 1:
        return float(D[0]), a_star
    r = float(D[a_star] - np.max(np.delete(D, a_star)))
    if r <= 0.0 and D[a_star] > 0.0:
        warnings.warn("Assumption 1 (Positive sub-optimality gap) violated: best sources are tied",
                      AssumptionWarning, stacklevel=2)
    return r, a_star


def scenario_gap(scenario, fmaps):
    return gap([distance(s, f)[0] for s, f in zip(scenario.sources, fmaps)])


def increment_distribution(source, g: Witness):
    """Support and probabilities of ``g(X_1) - g(X_2)``.

    Exact for discrete sources; quadrature product grid for gaussian ones.
    """
    g.fmap.check_source(source)
    a1, w1 = source.marginal_support(1)
    a2, w2 = source.marginal_support(2)
    g1 = g.fmap.transform(a1) @ g.weights
    g2 = g.fmap.transform(a2) @ g.weights
    values = (g1[:, None] - g2[None, :]).ravel()
    probs = (w1[:, None] * w2[None, :]).ravel()
    keep = probs > 0
    values, inverse = np.unique(np.round(values[keep], 15), return_inverse=True)
    return values, np.bincount(inverse, weights=probs[keep])


def expected_log_growth(values, probs, lam):
    """``E[log(1 + lam v)]``, ``-inf`` where some atom makes the factor non-positive."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    factor = 1.0 + lam[:, None] * values[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(factor > 0, np.log(np.where(factor > 0, factor, 1.0)), -np.inf)
    logs = np.where(probs[None, :] > 0, logs, 0.0)
    out = logs @ probs
    return out if out.size > 1 else float(out[0])


def kelly_bet(values, probs, resolution=1e-4, guard=KELLY_GUARD):
    """Constant bet in ``[-1, 1]`` maximising expected log growth.

    Grid search at ``resolution`` refined by a ternary search on the
    neighbouring cells. Solutions on the boundary are pulled inward by
    ``guard`` so that the wealth stays finite. A payoff that is identically
    zero gives 0.
    """
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if np.all(values[probs > 0] == 0.0):
        return 0.0
    grid = np.linspace(-1.0, 1.0, int(round(2.0 / resolution)) + 1)
    best_val, best_lam = -np.inf, 0.0
    for start in range(0, grid.size, 512):
        chunk = grid[start:start + 512]
        obj = expected_log_growth(values, probs, chunk)
        i = int(np.argmax(obj))
        if obj[i] > best_val:
            best_val, best_lam = obj[i], chunk[i]
    lo, hi = max(-1.0, best_lam - resolution), min(1.0, best_lam + resolution)
    for _ in range(100):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if expected_log_growth(values, probs, m1) < expected_log_growth(values, probs, m2):
            lo = m1
        else:
            hi = m2
    lam = 0.5 * (lo + hi)
    if expected_log_growth(values, probs, lam) < best_val:
        lam = best_lam
    return float(np.clip(lam, -1.0 + guard, 1.0 - guard))


def lambda_star(source, g: Witness):
    return kelly_bet(*increment_distribution(source, g))


def power_iteration(matrix, rtol=1e-8, max_iter=10_000):
    """Largest eigenvalue of a symmetric positive semi-definite matrix."""
    A = np.asarray(matrix, dtype=float)
    d = A.shape[0]
    if not np.any(A):
        return 0.0
    x = np.random.default_rng(12345).normal(size=d)
    x /= np.linalg.norm(x)
    value = 0.0
    for _ in range(max_iter):
        y = A @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        new = float(x @ y)
        x = y / norm
        if abs(new - value) <= rtol * abs(new):
            return new
        value = new
    return value


def sigma_k(source, fmap):
    """``(sigma, sigma_tilde)``: sup over the class of the std and RMS of the payoff."""
    mean, second = feature_moments(source, fmap)
    cov = second - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    s2_tilde = WITNESS_RADIUS ** 2 * power_iteration(second)
    s2 = WITNESS_RADIUS ** 2 * power_iteration(cov)
    return math.sqrt(max(s2, 0.0)), math.sqrt(max(s2_tilde, 0.0))


def default_regret_rate(t):
    return 3.0 / np.sqrt(t)


def t0_condition(t, D, sigma, alpha, regret_rate=default_regret_rate):
    log_term = np.log(np.asarray(t, dtype=float) / alpha)
    return D >= regret_rate(t) + sigma * np.sqrt(log_term / t) + log_term / t


def t0_bound(D, sigma, alpha, regret_rate=default_regret_rate, cap=10**9):
    """Smallest ``t`` with ``D >= r_t + sigma sqrt(log(t/alpha)/t) + log(t/alpha)/t``.

    Doubling then bisection, which relies on the right side being
    nonincreasing in ``t``. Returns ``None`` if the condition is not met by
    ``cap``.
    """
    if not D > 0:
        raise ConfigError(f"t0_bound needs D > 0, got {D!r}")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha!r}")

    def ok(t):
        return bool(t0_condition(t, D, sigma, alpha, regret_rate))

    if ok(1):
        return 1
    hi = 2
    while not ok(hi):
        if hi >= cap:
            return None
        hi = min(2 * hi, cap)
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class PopulationSummary:
    distances: list
    a_star: int
    gap: float
    witnesses: list = field(repr=False)
    lambda_star: float
    sigma: list
    sigma_tilde: list
    t0: int | None = None
    exploration_slots: int | None = None

    def to_dict(self) -> dict:
        return {
            "distances": list(self.distances),
            "a_star": self.a_star,
            "gap": self.gap,
            "witnesses": [g.weights.tolist() for g in self.witnesses],
            "lambda_star": self.lambda_star,
            "sigma": list(self.sigma),
            "sigma_tilde": list(self.sigma_tilde),
            "t0": self.t0,
            "exploration_slots": self.exploration_slots,
        }


def population_summary(scenario, features=None, alpha=None, C=None, fmaps=None):
    """All population quantities for a scenario under its per-kind feature maps."""
    fmaps = fmaps if fmaps is not None else feature_maps_for(scenario, features)
    pairs = [distance(s, f) for s, f in zip(scenario.sources, fmaps)]
    D = [d for d, _ in pairs]
    witnesses = [g for _, g in pairs]
    with warnings.catch_warnings():
        if scenario.truth_label == "null":
            warnings.simplefilter("ignore", AssumptionWarning)
        r, a_star = gap(D)
    sig = [sigma_k(s, f) for s, f in zip(scenario.sources, fmaps)]
    lam = lambda_star(scenario.sources[a_star], witnesses[a_star])
    t0 = None
    if alpha is not None and D[a_star] > 0:
        t0 = t0_bound(D[a_star], sig[a_star][0], alpha)
    explore = None if C is None else int(math.floor(C))
    return PopulationSummary(D, a_star, r, witnesses, lam, [s for s, _ in sig],
                             [st for _, st in sig], t0, explore)
