"""Linear test functions over bounded feature maps, and the OGA witness predictor.

The class of test functions is ``{x -> <w, phi(x)> : ||w||_2 <= 1/2}`` with
``||phi(x)||_2 <= 1``, so every test function maps into ``[-1/2, 1/2]`` and
is closed under negation. Suprema over the class have closed forms, which is
what makes the regret and the population distance exactly computable.

Feature maps follow the scikit-learn transformer API: ``fit`` fixes any
random quantities (before any data arrives) and ``transform`` maps an array
of points of shape ``(n,)`` to features of shape ``(n, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import CapabilityError, ConfigError, ContractViolation

WITNESS_RADIUS = 0.5
FEATURE_KINDS = ("centered-binary", "tanh-scalar", "one-hot-categorical", "random-fourier")


class FeatureMap(TransformerMixin, BaseEstimator):
    """Base class. Subclasses set ``kind`` and ``supported_sources``."""

    kind = None
    supported_sources = ()

    def fit(self, X=None, y=None):
        self.n_features_out_ = self._output_dim()
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        x = np.asarray(X, dtype=float)
        scalar = x.ndim == 0
        phi = self._features(np.atleast_1d(x).ravel())
        return phi[0] if scalar else phi

    @property
    def dim(self) -> int:
        check_is_fitted(self, "n_features_out_")
        return self.n_features_out_

    def check_source(self, source):
        if source.kind not in self.supported_sources:
            raise CapabilityError(f"feature map {self.kind!r} does not support source kind {source.kind!r}")

    def describe(self) -> dict:
        return {"kind": self.kind, **self.get_params()}


class CenteredBinary(FeatureMap):
    """``x -> x - 1/2`` on ``{0, 1}``."""

    kind = "centered-binary"
    supported_sources = ("bernoulli-pair",)

    def _output_dim(self):
        return 1

    def _features(self, x):
        return (x - 0.5)[:, None]


class TanhScalar(FeatureMap):
    kind = "tanh-scalar"
    supported_sources = ("bernoulli-pair", "gaussian-pair", "categorical-pair")

    def __init__(self, scale=1.0):
        self.scale = scale

    def fit(self, X=None, y=None):
        if not self.scale > 0:
            raise ConfigError(f"tanh-scalar scale must be > 0, got {self.scale!r}")
        return super().fit(X, y)

    def _output_dim(self):
        return 1

    def _features(self, x):
        return np.tanh(x / self.scale)[:, None]


class OneHotCategorical(FeatureMap):
    kind = "one-hot-categorical"
    supported_sources = ("categorical-pair", "bernoulli-pair")

    def __init__(self, n_categories=None):
        self.n_categories = n_categories

    def fit(self, X=None, y=None):
        if self.n_categories is None:
            if X is None:
                raise ConfigError("one-hot-categorical needs n_categories or sample points to fit")
            self.n_categories_ = int(np.max(X)) + 1
        else:
            self.n_categories_ = int(self.n_categories)
        if self.n_categories_ < 1:
            raise ConfigError("one-hot-categorical needs at least one category")
        return super().fit(X, y)

    def _output_dim(self):
        return self.n_categories_

    def _features(self, x):
        idx = x.astype(int)
        if np.any(idx < 0) or np.any(idx >= self.n_categories_):
            raise ContractViolation(f"category index out of range [0, {self.n_categories_})")
        return np.eye(self.n_categories_)[idx]

    def check_source(self, source):
        super().check_source(source)
        n = source.n_categories if source.kind == "categorical-pair" else 2
        if n != self.n_categories_:
            raise CapabilityError(f"one-hot map has {self.n_categories_} categories, source has {n}")


class RandomFourier(FeatureMap):
    """Random Fourier features ``cos(omega x + b) / sqrt(d)`` for scalar inputs.

    Frequencies are drawn once in ``fit`` from ``random_state`` and never
    depend on data. ``omega ~ N(0, 1/bandwidth^2)`` approximates a Gaussian
    kernel of that bandwidth.
    """

    kind = "random-fourier"
    supported_sources = ("bernoulli-pair", "gaussian-pair", "categorical-pair")

    def __init__(self, n_components=16, bandwidth=1.0, random_state=0):
        self.n_components = n_components
        self.bandwidth = bandwidth
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if int(self.n_components) < 1 or not self.bandwidth > 0:
            raise ConfigError("random-fourier needs n_components >= 1 and bandwidth > 0")
        rng = np.random.default_rng(self.random_state)
        self.frequencies_ = rng.normal(0.0, 1.0 / self.bandwidth, size=int(self.n_components))
        self.offsets_ = rng.uniform(0.0, 2.0 * np.pi, size=int(self.n_components))
        return super().fit(X, y)

    def _output_dim(self):
        return int(self.n_components)

    def _features(self, x):
        return np.cos(np.outer(x, self.frequencies_) + self.offsets_) / np.sqrt(self.n_components)


_REGISTRY = {cls.kind: cls for cls in (CenteredBinary, TanhScalar, OneHotCategorical, RandomFourier)}
DEFAULT_FEATURES = {
    "bernoulli-pair": {"kind": "centered-binary"},
    "gaussian-pair": {"kind": "tanh-scalar", "scale": 1.0},
    "categorical-pair": {"kind": "one-hot-categorical"},
}


def make_feature_map(spec: dict, source=None) -> FeatureMap:
    """Construct and fit a feature map from a config entry such as ``{"kind": "tanh-scalar", "scale": 2}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in _REGISTRY:
        raise ConfigError(f"features: unknown feature map kind {kind!r}; expected one of {FEATURE_KINDS}")
    cls = _REGISTRY[kind]
    if cls is OneHotCategorical and "n_categories" not in spec and source is not None:
        spec["n_categories"] = source.n_categories if source.kind == "categorical-pair" else 2
    try:
        fmap = cls(**spec)
    except TypeError as exc:
        raise ConfigError(f"features[{kind}]: {exc}") from None
    fmap.fit()
    if source is not None:
        fmap.check_source(source)
    return fmap


def feature_maps_for(scenario, features: dict | None = None) -> list[FeatureMap]:
    """One fitted feature map per source, chosen by source kind.

    ``features`` maps a source kind to feature map settings and overrides
    :data:`DEFAULT_FEATURES`.
    """
    table = {**DEFAULT_FEATURES, **(features or {})}
    return [make_feature_map(table[s.kind], s) for s in scenario.sources]


def project_ball(w, radius=WITNESS_RADIUS):
    """Euclidean projection of the last axis onto the ball of the given radius."""
    w = np.asarray(w, dtype=float)
    norm = np.linalg.norm(w, axis=-1, keepdims=True)
    scale = np.where(norm > radius, radius / np.maximum(norm, np.finfo(float).tiny), 1.0)
    return w * scale


def oga_step(w, dphi, n):
    """One projected gradient-ascent step with step size ``1 / (2 sqrt(n))``.

    ``n`` is the visit count *after* the current visit. Broadcasts over
    leading axes so the batch engine can update many trials at once.
    """
    eta = 0.5 / np.sqrt(np.asarray(n, dtype=float))
    return project_ball(np.asarray(w) + eta[..., None] * dphi)


@dataclass
class Witness:
    weights: np.ndarray
    fmap: FeatureMap

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.fmap.dim,):
            raise ContractViolation(f"witness has shape {self.weights.shape}, feature map has dim {self.fmap.dim}")

    @classmethod
    def zero(cls, fmap):
        return cls(np.zeros(fmap.dim), fmap)

    def __neg__(self):
        return Witness(-self.weights, self.fmap)


def evaluate(g: Witness, x):
    """``g(x) = <w, phi(x)>``; a float for a scalar point, an array otherwise."""
    phi = g.fmap.transform(x)
    if phi.shape[-1] != g.weights.shape[0]:
        raise ContractViolation("feature dimension does not match witness dimension")
    out = phi @ g.weights
    return float(out) if np.ndim(out) == 0 else out


def increment(g: Witness, x1, x2):
    """Payoff ``g(x1) - g(x2)`` of one paired observation; lies in ``[-1, 1]``."""
    return evaluate(g, x1) - evaluate(g, x2)


@dataclass
class PredictorState:
    """Per-source OGA witness plus the sums needed to evaluate its regret exactly."""

    fmap: FeatureMap
    w: np.ndarray = None
    n: int = 0
    s: np.ndarray = None
    e: float = 0.0
    history: list | None = field(default=None, repr=False)

    def __post_init__(self):
        d = self.fmap.dim
        self.w = np.zeros(d) if self.w is None else np.asarray(self.w, dtype=float)
        self.s = np.zeros(d) if self.s is None else np.asarray(self.s, dtype=float)

    @property
    def witness(self) -> Witness:
        return Witness(self.w.copy(), self.fmap)


def oga_update(state: PredictorState, x1, x2, v_earned: float) -> PredictorState:
    """Fold one visit into the predictor.

    ``v_earned`` must be the increment of the witness held *before* this call.
    """
    dphi = state.fmap.transform(x1) - state.fmap.transform(x2)
    n = state.n + 1
    w = oga_step(state.w, dphi, n)
    history = None
    if state.history is not None:
        history = state.history + [(state.w.copy(), dphi, float(v_earned))]
    return PredictorState(state.fmap, w, n, state.s + dphi, state.e + float(v_earned), history)


def best_in_hindsight(state: PredictorState):
    """Closed-form ``sup_{||w|| <= 1/2} <w, s>`` and its maximiser."""
    norm = float(np.linalg.norm(state.s))
    if norm == 0.0:
        return 0.0, Witness.zero(state.fmap)
    return WITNESS_RADIUS * norm, Witness(state.s * (WITNESS_RADIUS / norm), state.fmap)


def regret(state: PredictorState) -> float:
    return best_in_hindsight(state)[0] - state.e


def regret_from_sums(s, e):
    """Vectorised regret from displacement sums ``s`` (..., d) and earned sums ``e`` (...)."""
    return WITNESS_RADIUS * np.linalg.norm(s, axis=-1) - e
