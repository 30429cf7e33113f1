"""Paired data sources: built-in distribution pairs, sampling, and scenario files.

A scenario document is JSON with this layout::

    {
      "truth_label": "alternative",
      "sources": [
        {"kind": "bernoulli-pair", "params_1": {"p": 0.9}, "params_2": {"p": 0.1}},
        {"kind": "gaussian-pair",
         "params_1": {"mean": 0.0, "std": 1.0}, "params_2": {"mean": 0.0, "std": 1.0}},
        {"kind": "categorical-pair",
         "params_1": {"probs": [0.2, 0.8]}, "params_2": {"probs": [0.5, 0.5]}}
      ]
    }

Other top-level sections (``features``, ``run``) may sit next to ``sources``;
:func:`parse_scenario` ignores them.

Sampling is driven by uniforms so that one stream of U(0, 1) draws per slot
fully determines a trial, whatever code path consumes it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import ndtri

from ._validation import check_probability, check_probability_vector
from .exceptions import ConfigError

SOURCE_KINDS = ("bernoulli-pair", "gaussian-pair", "categorical-pair")
TRUTH_LABELS = ("null", "alternative")

_QUADRATURE_POINTS = 64
_TINY = 2.0 ** -54


def _validate_marginal(kind: str, params: Any, where: str) -> dict:
    if not isinstance(params, dict):
        raise ConfigError(f"{where}: parameters must be an object, got {params!r}")
    if kind == "bernoulli-pair":
        _require_keys(params, {"p"}, where)
        return {"p": check_probability(params["p"], f"{where}.p")}
    if kind == "gaussian-pair":
        _require_keys(params, {"mean", "std"}, where)
        mean, std = params["mean"], params["std"]
        if not isinstance(mean, (int, float)) or not np.isfinite(mean):
            raise ConfigError(f"{where}.mean must be a finite number, got {mean!r}")
        if not isinstance(std, (int, float)) or not np.isfinite(std) or std <= 0:
            raise ConfigError(f"{where}.std must be > 0, got {std!r}")
        return {"mean": float(mean), "std": float(std)}
    if kind == "categorical-pair":
        _require_keys(params, {"probs"}, where)
        probs = check_probability_vector(params["probs"], f"{where}.probs")
        return {"probs": [float(q) for q in probs]}
    raise ConfigError(f"{where}: unknown source kind {kind!r}; expected one of {SOURCE_KINDS}")


def _require_keys(params, keys, where):
    missing = keys - params.keys()
    extra = params.keys() - keys
    if missing:
        raise ConfigError(f"{where}: missing parameter(s) {sorted(missing)}")
    if extra:
        raise ConfigError(f"{where}: unknown parameter(s) {sorted(extra)}")


@dataclass(frozen=True)
class SourceModel:
    """One data source: a pair of distributions on a shared space."""

    kind: str
    params_1: dict
    params_2: dict

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"kind: unknown source kind {self.kind!r}; expected one of {SOURCE_KINDS}")
        p1 = _validate_marginal(self.kind, self.params_1, "params_1")
        p2 = _validate_marginal(self.kind, self.params_2, "params_2")
        if self.kind == "categorical-pair" and len(p1["probs"]) != len(p2["probs"]):
            raise ConfigError("params_2.probs: both marginals must share one alphabet (same length)")
        object.__setattr__(self, "params_1", p1)
        object.__setattr__(self, "params_2", p2)

    @classmethod
    def bernoulli(cls, p1: float, p2: float) -> "SourceModel":
        return cls("bernoulli-pair", {"p": p1}, {"p": p2})

    @classmethod
    def gaussian(cls, mean1: float, std1: float, mean2: float, std2: float) -> "SourceModel":
        return cls("gaussian-pair", {"mean": mean1, "std": std1}, {"mean": mean2, "std": std2})

    @classmethod
    def categorical(cls, probs1, probs2) -> "SourceModel":
        return cls("categorical-pair", {"probs": list(probs1)}, {"probs": list(probs2)})

    @property
    def is_null(self) -> bool:
        return self.params_1 == self.params_2

    @property
    def n_categories(self) -> int | None:
        if self.kind == "categorical-pair":
            return len(self.params_1["probs"])
        return None

    def from_uniform(self, u1, u2):
        """Map uniforms to a draw from ``P_1 x P_2`` by inverse CDFs."""
        return _inverse_cdf(self.kind, self.params_1, u1), _inverse_cdf(self.kind, self.params_2, u2)

    def marginal_support(self, which: int):
        """Atoms and weights of one marginal.

        Exact for the discrete kinds; for the gaussian kind these are the
        64-point Gauss-Hermite nodes, which integrate smooth bounded maps to
        near machine precision.
        """
        params = self.params_1 if which == 1 else self.params_2
        if self.kind == "bernoulli-pair":
            return np.array([0.0, 1.0]), np.array([1.0 - params["p"], params["p"]])
        if self.kind == "categorical-pair":
            probs = np.asarray(params["probs"])
            return np.arange(probs.size, dtype=float), probs
        nodes, weights = np.polynomial.hermite.hermgauss(_QUADRATURE_POINTS)
        return params["mean"] + np.sqrt(2.0) * params["std"] * nodes, weights / np.sqrt(np.pi)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params_1": dict(self.params_1), "params_2": dict(self.params_2)}


def _inverse_cdf(kind, params, u):
    u = np.asarray(u, dtype=float)
    if kind == "bernoulli-pair":
        return (u < params["p"]).astype(float)
    if kind == "gaussian-pair":
        return params["mean"] + params["std"] * ndtri(np.clip(u, _TINY, 1.0 - _TINY))
    cdf = np.cumsum(params["probs"])
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(params["probs"]) - 1).astype(float)


@dataclass(frozen=True)
class Scenario:
    """An ordered list of sources plus the declared ground truth."""

    sources: tuple[SourceModel, ...]
    truth_label: str = "alternative"
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(self.sources) == 0:
            raise ConfigError("sources: at least one source is required (K >= 1)")
        if self.truth_label not in TRUTH_LABELS:
            raise ConfigError(f"truth_label: expected one of {TRUTH_LABELS}, got {self.truth_label!r}")
        nulls = [s.is_null for s in self.sources]
        if self.truth_label == "null" and not all(nulls):
            bad = [k for k, n in enumerate(nulls) if not n]
            raise ConfigError(f"truth_label inconsistent: declared null but source(s) {bad} have params_1 != params_2")
        if self.truth_label == "alternative" and all(nulls):
            raise ConfigError("truth_label inconsistent: declared alternative but every source has params_1 == params_2")

    @property
    def K(self) -> int:
        return len(self.sources)

    def to_dict(self) -> dict:
        out = {"truth_label": self.truth_label, "sources": [s.to_dict() for s in self.sources]}
        if self.name is not None:
            out["name"] = self.name
        return out


def sample_pair(source: SourceModel, rng: np.random.Generator):
    """Draw one independent pair ``(x1, x2)`` from ``P_1 x P_2``."""
    u = rng.random(2)
    x1, x2 = source.from_uniform(u[0], u[1])
    return float(x1), float(x2)


def parse_scenario(text) -> Scenario:
    """Build a validated :class:`Scenario` from a JSON string or an already-decoded dict."""
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario document is not valid JSON: {exc}") from exc
    else:
        doc = text
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be an object with a 'sources' list")
    if "sources" not in doc:
        raise ConfigError("sources: missing required field")
    raw = doc["sources"]
    if not isinstance(raw, list):
        raise ConfigError("sources: must be a list")
    if len(raw) == 0:
        raise ConfigError("sources: at least one source is required (K >= 1)")
    sources = []
    for k, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ConfigError(f"sources[{k}]: must be an object")
        extra = entry.keys() - {"kind", "params_1", "params_2"}
        if extra:
            raise ConfigError(f"sources[{k}]: unknown field(s) {sorted(extra)}")
        for key in ("kind", "params_1", "params_2"):
            if key not in entry:
                raise ConfigError(f"sources[{k}].{key}: missing required field")
        try:
            sources.append(SourceModel(entry["kind"], entry["params_1"], entry["params_2"]))
        except ConfigError as exc:
            raise ConfigError(f"sources[{k}].{exc}") from None
    label = doc.get("truth_label", "alternative")
    return Scenario(tuple(sources), label, name=doc.get("name"))


def dump_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2)


def true_mean_embedding(source: SourceModel, fmap) -> np.ndarray:
    """Exact (or quadrature) ``E[phi(X_1)] - E[phi(X_2)]``."""
    fmap.check_source(source)
    m1 = _feature_moment(source, fmap, 1)
    m2 = _feature_moment(source, fmap, 2)
    if source.is_null:
        return np.zeros_like(m1)
    return m1 - m2


def _feature_moment(source, fmap, which):
    atoms, weights = source.marginal_support(which)
    return weights @ fmap.transform(atoms)


def monte_carlo_mean_embedding(source: SourceModel, fmap, n_samples=1_000_000, seed=0):
    """Sample estimate of the mean embedding and its per-coordinate standard error.

    Fallback for feature maps where quadrature is not trusted.
    """
    fmap.check_source(source)
    rng = np.random.default_rng(seed)
    u = rng.random((n_samples, 2))
    x1, x2 = source.from_uniform(u[:, 0], u[:, 1])
    diff = fmap.transform(x1) - fmap.transform(x2)
    return diff.mean(axis=0), diff.std(axis=0, ddof=1) / np.sqrt(n_samples)


def feature_moments(source: SourceModel, fmap):
    """First and second moments of the feature displacement ``phi(X_1) - phi(X_2)``.

    Returns ``(mean, second_moment_matrix)``.
    """
    fmap.check_source(source)
    out = []
    for which in (1, 2):
        atoms, weights = source.marginal_support(which)
        phi = fmap.transform(atoms)
        out.append((weights @ phi, (phi * weights[:, None]).T @ phi))
    (m1, s1), (m2, s2) = out
    second = s1 + s2 - np.outer(m1, m2) - np.outer(m2, m1)
    mean = np.zeros_like(m1) if source.is_null else m1 - m2
    return mean, second

