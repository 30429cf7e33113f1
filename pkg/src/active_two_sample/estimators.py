"""scikit-learn style wrappers around the sequential tests.

``fit`` runs one sequential trial on a scenario and stores the outcome in
trailing-underscore attributes; ``predict`` returns 1 when the null was
rejected. Hyperparameters round-trip through ``get_params``/``set_params``
and ``sklearn.base.clone``, so the tests slot into parameter sweeps::

    >>> from active_two_sample import ActiveTwoSampleTest, SourceModel, Scenario
    >>> sc = Scenario([SourceModel.bernoulli(0.9, 0.1), SourceModel.bernoulli(0.5, 0.5)])
    >>> test = ActiveTwoSampleTest(alpha=0.05, C_override=20, random_state=0).fit(sc)
    >>> test.predict()
    1
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .engine import RunConfig, run_active, run_oracle, run_passive
from .exceptions import ConfigError
from .sources import Scenario, parse_scenario


def check_scenario(X) -> Scenario:
    """Accept a Scenario, a decoded scenario dict, a JSON string or a path to a JSON file."""
    if isinstance(X, Scenario):
        return X
    if isinstance(X, dict):
        return parse_scenario(X)
    if isinstance(X, Path) or (isinstance(X, str) and not X.lstrip().startswith("{")):
        path = Path(X)
        if not path.exists():
            raise ConfigError(f"scenario file not found: {path}")
        return parse_scenario(path.read_text())
    if isinstance(X, (str, bytes)):
        return parse_scenario(X)
    raise ConfigError(f"cannot interpret {type(X).__name__} as a scenario")


def _seed_from(random_state):
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1)[0])
    if isinstance(random_state, np.random.Generator):
        return random_state
    return int(random_state)


class ActiveTwoSampleTest(BaseEstimator):
    """Epsilon-greedy active test by betting.

    Parameters
    ----------
    alpha : float
        Level; the test rejects once wealth reaches ``1/alpha``.
    horizon : int
        Censoring cap on the number of slots.
    L : float, optional
        Known lower bound on the sub-optimality gap; sets the exploration constant.
    C_override : float, optional
        Exploration constant used instead of the one derived from ``L``.
    ons_sign : {"ascent", "paper-literal"}
    features : dict, optional
        Feature map settings per source kind.
    keep_history : bool
        Retain the per-slot trace in ``result_.trace``.
    random_state : int, Generator or None
    """

    def __init__(self, alpha=0.05, horizon=10_000, L=None, C_override=None, ons_sign="ascent",
                 features=None, keep_history=False, random_state=None):
        self.alpha = alpha
        self.horizon = horizon
        self.L = L
        self.C_override = C_override
        self.ons_sign = ons_sign
        self.features = features
        self.keep_history = keep_history
        self.random_state = random_state

    def _config(self):
        return RunConfig(alpha=self.alpha, horizon=self.horizon, features=self.features, L=self.L,
                         C_override=self.C_override, ons_sign=self.ons_sign, keep_history=self.keep_history)

    def _run(self, scenario, cfg, rng):
        return run_active(scenario, cfg, rng)

    def fit(self, X, y=None):
        """Run one sequential trial on scenario ``X``."""
        scenario = check_scenario(X)
        cfg = self._config()
        self.result_ = self._run(scenario, cfg, _seed_from(self.random_state))
        self.n_sources_ = scenario.K
        self.threshold_ = cfg.threshold
        self.stopped_ = self.result_.stopped
        self.stopping_time_ = self.result_.tau
        self.log_wealth_ = self.result_.log_wealth
        self.counts_ = np.asarray(self.result_.counts)
        return self

    def decision_function(self, X=None):
        """Final log-wealth minus the rejection threshold (nonnegative iff rejected)."""
        check_is_fitted(self, "result_")
        return self.log_wealth_ - self.threshold_

    def predict(self, X=None):
        check_is_fitted(self, "result_")
        return int(self.stopped_)

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()


class PassiveTwoSampleTest(ActiveTwoSampleTest):
    """The betting test run on one fixed source (0-based index ``source``)."""

    def __init__(self, source=0, alpha=0.05, horizon=10_000, ons_sign="ascent", features=None,
                 keep_history=False, random_state=None):
        self.source = source
        super().__init__(alpha=alpha, horizon=horizon, ons_sign=ons_sign, features=features,
                         keep_history=keep_history, random_state=random_state)

    def _run(self, scenario, cfg, rng):
        return run_passive(scenario, self.source, cfg, rng)


class OracleTwoSampleTest(ActiveTwoSampleTest):
    """Constant Kelly bet on the best source with the population witness."""

    def __init__(self, alpha=0.05, horizon=10_000, features=None, keep_history=False, random_state=None):
        super().__init__(alpha=alpha, horizon=horizon, features=features, keep_history=keep_history,
                         random_state=random_state)

    def _run(self, scenario, cfg, rng):
        return run_oracle(scenario, cfg, rng)

