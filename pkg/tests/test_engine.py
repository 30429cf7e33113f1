import math

import numpy as np
import pytest

from active_two_sample.betting import BettorState, ons_step
from active_two_sample.engine import (RunConfig, oracle_wealth_path, run_active, run_oracle, run_passive,
                                      simulate, trial_seed)
from active_two_sample.exceptions import ConfigError
from active_two_sample.features import PredictorState, feature_maps_for, increment, oga_update
from active_two_sample.selection import SelectorState, draw_index, epsilon_schedule, selection_probabilities
from active_two_sample.sources import Scenario, SourceModel


def _same(a, b):
    assert (a.stopped, a.tau, a.log_wealth, a.counts, a.means, a.regrets) == \
           (b.stopped, b.tau, b.log_wealth, b.counts, b.means, b.regrets)


def _replay(scenario, cfg, seed, T):
    """Scalar re-implementation of one active trial, slot by slot."""
    fmaps = feature_maps_for(scenario, cfg.features)
    gen = np.random.default_rng(seed)
    C = cfg.exploration_constant(scenario.K)
    preds = [PredictorState(f) for f in fmaps]
    sel = SelectorState(scenario.K, C)
    bet = BettorState(ons_sign=cfg.ons_sign)
    ell = 0.0
    out = {"source": [], "v": [], "lam": [], "log_wealth": []}
    t = 0
    while t < T:
        U = gen.random((min(256, T - t), 3))
        for u in U:
            t += 1
            p = selection_probabilities(sel.sums, sel.counts, epsilon_schedule(t, C))
            k = int(draw_index(p, u[0]))
            x1, x2 = scenario.sources[k].from_uniform(u[1], u[2])
            v = increment(preds[k].witness, x1, x2)
            lam = bet.lam
            ell = ell + np.log1p(lam * v)
            bet = ons_step(bet, v)
            preds[k] = oga_update(preds[k], x1, x2, v)
            sel.sums[k] += v
            sel.counts[k] += 1
            sel.t += 1
            for key, val in (("source", k), ("v", v), ("lam", lam), ("log_wealth", ell)):
                out[key].append(val)
    return {k: np.array(v) for k, v in out.items()}


@pytest.fixture
def cfg20():
    return RunConfig(alpha=0.05, horizon=600, C_override=20.0, seed=5)


class TestRunConfig:
    def test_threshold(self):
        assert RunConfig(alpha=0.05).threshold == pytest.approx(math.log(20))

    def test_round_trip(self):
        cfg = RunConfig(alpha=0.01, horizon=50, L=0.2, seed=3)
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 1.0}, {"horizon": 0}, {"seed": -1},
                                    {"ons_sign": "up"}, {"L": -1.0}, {"C_override": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw)

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="unknown"):
            RunConfig.from_dict({"alpah": 0.1})

    def test_exploration_constant(self):
        assert RunConfig(L=4.0).exploration_constant(2) == pytest.approx(837.7708763999664)
        assert RunConfig(L=4.0, C_override=9.0).exploration_constant(2) == 9.0
        assert RunConfig().exploration_constant(1) == 1.0
        with pytest.raises(ConfigError):
            RunConfig().exploration_constant(3)


class TestSeeds:
    def test_stable_and_distinct(self):
        seeds = [trial_seed(7, i) for i in range(1000)]
        assert seeds == [trial_seed(7, i) for i in range(1000)]
        assert len(set(seeds)) == 1000
        assert trial_seed(7, 0) != trial_seed(8, 0)
        assert all(0 <= s < 2 ** 63 for s in seeds)


class TestDeterminism:
    def test_same_seed_same_result(self, one_informative, cfg20):
        _same(run_active(one_informative, cfg20), run_active(one_informative, cfg20))

    def test_rng_defaults_to_config_seed(self, one_informative, cfg20):
        _same(run_active(one_informative, cfg20), run_active(one_informative, cfg20, 5))

    def test_batch_independence(self, one_informative, cfg20):
        seeds = [trial_seed(1, i) for i in range(12)]
        batch = simulate(one_informative, cfg20, seeds, trace=True).results
        for s, res in zip(seeds, batch):
            solo = simulate(one_informative, cfg20, [s], trace=True).results[0]
            _same(res, solo)
            assert np.array_equal(res.trace.v, solo.trace.v)

    def test_generators_and_seeds_agree(self, strong_weak, cfg20):
        a = simulate(strong_weak, cfg20, [11, 12]).results
        b = simulate(strong_weak, cfg20, [np.random.default_rng(11), np.random.default_rng(12)]).results
        for x, y in zip(a, b):
            _same(x, y)


class TestScalarReplay:
    @pytest.mark.parametrize("scenario_name", ["one_informative", "strong_weak", "null3"])
    def test_engine_matches_scalar_reference(self, request, scenario_name):
        scenario = request.getfixturevalue(scenario_name)
        cfg = RunConfig(horizon=400, C_override=20.0, stop_at_rejection=False, keep_history=True)
        res = run_active(scenario, cfg, 99)
        ref = _replay(scenario, cfg, 99, 400)
        tr = res.trace
        assert np.array_equal(tr.source, ref["source"])
        assert np.array_equal(tr.v, ref["v"])
        assert np.array_equal(tr.lam, ref["lam"])
        assert np.array_equal(tr.log_wealth, ref["log_wealth"])


class TestTrace:
    @pytest.fixture
    def traced(self, one_informative):
        cfg = RunConfig(horizon=500, C_override=20.0, stop_at_rejection=False, keep_history=True)
        return run_active(one_informative, cfg, 3), feature_maps_for(one_informative)

    def test_payoff_uses_pre_update_witness(self, traced, one_informative):
        res, fmaps = traced
        tr = res.trace
        for i in range(len(tr)):
            k = tr.source[i]
            dphi = fmaps[k].transform(tr.x1[i]) - fmaps[k].transform(tr.x2[i])
            d = fmaps[k].dim
            assert tr.witness[i, :d] @ dphi == tr.v[i]

    def test_first_visit_pays_nothing(self, traced):
        tr = traced[0].trace
        for k in range(3):
            first = np.flatnonzero(tr.source == k)[0]
            assert tr.v[first] == 0.0

    def test_wealth_replays_from_bets(self, traced):
        tr = traced[0].trace
        assert np.allclose(np.cumsum(np.log1p(tr.lam * tr.v)), tr.log_wealth, rtol=0, atol=1e-12)
        assert tr.lam[0] == 0.0

    def test_epsilon_column(self, traced):
        tr = traced[0].trace
        t = np.arange(1, len(tr) + 1)
        assert np.array_equal(tr.eps, np.minimum(1.0, 20.0 / t))

    def test_counts_and_means(self, traced):
        res = traced[0]
        tr = res.trace
        assert res.counts == np.bincount(tr.source, minlength=3).tolist()
        assert sum(res.counts) == 500
        for k in range(3):
            assert res.means[k] == pytest.approx(tr.v[tr.source == k].mean())

    def test_regrets_bounded(self, traced):
        res = traced[0]
        for R, n in zip(res.regrets, res.counts):
            assert -1e-9 <= R <= 3 * math.sqrt(max(n, 1))


class TestStopping:
    def test_first_passage(self, strong_weak):
        cfg = RunConfig(horizon=2000, C_override=20.0, keep_history=True)
        for seed in range(10):
            res = run_active(strong_weak, cfg, seed)
            assert res.stopped
            lw = res.trace.log_wealth
            assert len(lw) == res.tau
            assert lw[-1] >= cfg.threshold
            assert np.all(lw[:-1] < cfg.threshold)

    def test_censored(self, null3):
        res = run_active(null3, RunConfig(horizon=50, C_override=20.0), 0)
        assert res.tau is None or res.stopped
        if not res.stopped:
            assert res.slots == 50 and sum(res.counts) == 50

    def test_degenerate_alternative_stops_fast(self):
        sc = Scenario([SourceModel.bernoulli(1.0, 0.0)])
        res = run_active(sc, RunConfig(horizon=1000), 0)
        assert res.stopped and res.tau <= 30

    def test_no_stop_runs_to_horizon(self, one_informative):
        res = run_active(one_informative, RunConfig(horizon=300, C_override=20.0, stop_at_rejection=False), 0)
        assert not res.stopped and sum(res.counts) == 300 and res.log_wealth > math.log(20)


class TestModes:
    def test_single_source_active_equals_passive(self):
        sc = Scenario([SourceModel.bernoulli(0.7, 0.4)])
        cfg = RunConfig(horizon=3000)
        for seed in range(5):
            _same(run_active(sc, cfg, seed), run_passive(sc, 0, cfg, seed))

    def test_passive_pins_source(self, one_informative, cfg20):
        res = run_passive(one_informative, 1, cfg20)
        assert res.counts[0] == res.counts[2] == 0

    def test_passive_bad_index(self, one_informative, cfg20):
        with pytest.raises(ConfigError):
            run_passive(one_informative, 3, cfg20)

    def test_bad_mode(self, one_informative, cfg20):
        with pytest.raises(ConfigError):
            simulate(one_informative, cfg20, [0], mode="greedy")

    def test_missing_exploration_constant(self, one_informative):
        with pytest.raises(ConfigError):
            run_active(one_informative, RunConfig())

    def test_oracle_null_never_stops(self, null3):
        res = run_oracle(null3, RunConfig(horizon=2000), 0)
        assert not res.stopped and res.log_wealth == 0.0

    def test_oracle_constant_bet(self, one_informative):
        cfg = RunConfig(horizon=200, keep_history=True, stop_at_rejection=False)
        res = run_oracle(one_informative, cfg, 4)
        tr = res.trace
        assert np.all(tr.source == 0)
        assert np.all(tr.lam == tr.lam[0]) and tr.lam[0] == pytest.approx(1 - 1e-6)
        assert np.all(tr.witness[:, 0] == 0.5)
        ell, _ = oracle_wealth_path(tr.v, tr.lam[0], 0.05)
        assert np.allclose(ell, tr.log_wealth)

    def test_mixed_kinds(self):
        sc = Scenario([SourceModel.gaussian(0.8, 1.0, 0.0, 1.0), SourceModel.categorical([0.5, 0.5], [0.5, 0.5])])
        cfg = RunConfig(horizon=3000, C_override=20.0,
                        features={"gaussian-pair": {"kind": "random-fourier", "n_components": 8}})
        res = run_active(sc, cfg, 0)
        assert res.stopped and res.counts[0] > res.counts[1]


class TestBuckets:
    def test_counts_cover_all_slots(self, null3):
        cfg = RunConfig(horizon=150, C_override=20.0, stop_at_rejection=False)
        out = simulate(null3, cfg, [1, 2, 3], bucket_edges=[1, 10, 100])
        assert out.selection_counts.sum() == 450
        assert out.selection_counts[0].sum() == 27
        assert out.selection_counts[1].sum() == 270
