"""End-to-end acceptance checks, each printing one PASS/FAIL line.

Randomised thresholds were fixed by the pilot run stored in ``tests/pilot``;
the checks here use other seeds. Every Monte Carlo check states its
exploration constant through ``C_override``.
"""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from _oracles import grid_distance
from active_two_sample.analysis import distance, kelly_bet
from active_two_sample.engine import RunConfig, run_active, run_passive, simulate, trial_seed
from active_two_sample.features import CenteredBinary, OneHotCategorical, PredictorState, increment, oga_step, oga_update, regret
from active_two_sample.harness import ExperimentSpec, alpha_scaling, mean_ci, monte_carlo, run_trials
from active_two_sample.sources import Scenario, SourceModel, parse_scenario

pytestmark = pytest.mark.slow

ROOT = Path(__file__).resolve().parent.parent
C_ACCEPT = 20.0


def _scenario(name):
    return parse_scenario((ROOT / "scenarios" / name).read_text())


@pytest.fixture(scope="module")
def one_informative_file():
    return _scenario("one_informative_k3.json")


def test_level_alpha_null_stop_fraction(acceptance):
    sc = Scenario([SourceModel.bernoulli(0.5, 0.5)] * 3, "null")
    cfg = RunConfig(alpha=0.05, horizon=10_000, C_override=C_ACCEPT)
    s = monte_carlo(ExperimentSpec(sc, cfg, n_trials=2000, seed=101))
    limit = 0.05 + 3 * math.sqrt(0.05 * 0.95 / 2000)
    acceptance("level-alpha", s.stop_fraction <= limit,
               f"null stop fraction {s.stop_fraction:.4f} <= {limit:.4f} (2000 trials, T=10^4)")


def test_null_wealth_is_a_martingale(acceptance):
    sc = Scenario([SourceModel.bernoulli(0.5, 0.5)] * 3, "null")
    cfg = RunConfig(alpha=0.05, horizon=200, C_override=C_ACCEPT, stop_at_rejection=False)
    res = run_trials(sc, cfg, 5000, 202)[0]
    W = np.exp([r.log_wealth for r in res])
    se = W.std(ddof=1) / math.sqrt(W.size)
    ok = abs(W.mean() - 1.0) <= 5 * se
    acceptance("null martingale", ok, f"mean W_200 = {W.mean():.4f}, |mean - 1| <= 5 SE = {5 * se:.4f}")


def test_power_one_at_finite_horizon(acceptance, one_informative_file):
    pilot = json.loads((ROOT / "tests" / "pilot" / "power" / "report.json").read_text())
    assert pilot["config"]["seed"] != 303
    cfg = RunConfig(alpha=0.05, horizon=3000, C_override=C_ACCEPT)
    s = monte_carlo(ExperimentSpec(one_informative_file, cfg, n_trials=500, seed=303))
    acceptance("power one", s.stop_fraction >= 0.995,
               f"stop fraction {s.stop_fraction:.4f} >= 0.995 (pilot {pilot['stop_fraction']:.4f}), "
               f"censoring {s.censoring_rate:.4f}")


def test_ons_wealth_lower_bound(acceptance, one_informative_file):
    cfg = RunConfig(alpha=0.05, horizon=3000, C_override=C_ACCEPT, ons_sign="ascent")
    s = monte_carlo(ExperimentSpec(one_informative_file, cfg, n_trials=500, seed=404, diagnostics=True))
    d = s.diagnostics
    checked = round(d["wealth_bound_rate"] * d["n_trials"]) + d["wealth_bound_failures"]
    acceptance("ONS wealth bound", d["wealth_bound_failures"] == 0 and checked == 500,
               f"{d['wealth_bound_failures']} failures over {checked} traces (checked at the end of each trace)")


def test_kelly_oracle_matches_coin_closed_form(acceptance):
    errs = {p: abs(kelly_bet([-1.0, 1.0], [1 - p, p]) - (2 * p - 1)) for p in (0.6, 0.75, 0.9)}
    worst = max(errs.values())
    acceptance("Kelly oracle", worst <= 1e-3, f"max |lambda* - (2p-1)| = {worst:.2e} over p in {{0.6, 0.75, 0.9}}")


def test_regret_oracle(acceptance):
    n_streams, N = 100, 10_000
    checkpoints = (100, 1000, 10_000)
    rng = np.random.default_rng(606)
    fmap = OneHotCategorical(3).fit()
    probs = rng.dirichlet(np.ones(3), size=(n_streams, 2))
    u = rng.random((N, n_streams, 2))
    cdf = np.cumsum(probs, axis=-1)
    x = (u[..., None] >= cdf[None]).sum(axis=-1)
    eye = fmap.transform(np.arange(3.0))
    dphi = eye[x[..., 0]] - eye[x[..., 1]]

    # scalar predictors with the incremental regret() against a recomputation from the logged history
    worst_gap = 0.0
    for i in range(n_streams):
        state = PredictorState(fmap, history=[])
        for t in range(100):
            v = increment(state.witness, float(x[t, i, 0]), float(x[t, i, 1]))
            state = oga_update(state, float(x[t, i, 0]), float(x[t, i, 1]), v)
        s = sum(h[1] for h in state.history)
        e = sum(h[2] for h in state.history)
        worst_gap = max(worst_gap, abs(regret(state) - (np.linalg.norm(s) / 2 - e)))

    # all streams in lockstep to N
    w = np.zeros((n_streams, 3))
    e = np.zeros(n_streams)
    bound_ok = True
    worst_ratio = 0.0
    for t in range(1, N + 1):
        v = np.einsum("ij,ij->i", w, dphi[t - 1])
        e += v
        w = oga_step(w, dphi[t - 1], np.full(n_streams, t))
        if t in checkpoints:
            R = np.linalg.norm(dphi[:t].sum(axis=0), axis=1) / 2 - e
            bound_ok &= bool(np.all(R <= 3 * math.sqrt(t)))
            worst_ratio = max(worst_ratio, float((R / math.sqrt(t)).max()))
    ok = worst_gap <= 1e-9 and bound_ok
    acceptance("regret oracle", ok, f"recomputation gap {worst_gap:.1e} <= 1e-9; max R_N/sqrt(N) = "
                                    f"{worst_ratio:.3f} <= 3 at N in {checkpoints} over {n_streams} streams")


def test_distance_oracle(acceptance):
    rng = np.random.default_rng(707)
    worst = 0.0
    for i in range(20):
        d = 2 + i % 2
        p1, p2 = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
        D, _ = distance(SourceModel.categorical(p1, p2), OneHotCategorical(d).fit())
        worst = max(worst, abs(D - grid_distance(p1, p2, 100_000)))
    acceptance("distance oracle", worst <= 1e-3, f"max |D - grid| = {worst:.2e} over 20 categorical sources")


def test_selection_behaviour(acceptance, one_informative_file):
    cfg = RunConfig(alpha=0.05, horizon=10_000, C_override=C_ACCEPT, stop_at_rejection=False)
    d = monte_carlo(ExperimentSpec(one_informative_file, cfg, n_trials=500, seed=808, diagnostics=True)).diagnostics
    growth = d["log_growth_rate"]["10000"]
    ok = growth >= 0.99 and d["sqrt_bound_rate"] >= 0.95 and d["leader_pass_rate"] >= 0.95
    acceptance("selection behaviour", ok,
               f"min N >= log t in {growth:.3f} of trials (>= 0.99); suboptimal N <= 5 sqrt t in "
               f"{d['sqrt_bound_rate']:.3f} (>= 0.95); leader = a* in >= 90% of final-half slots for "
               f"{d['leader_pass_rate']:.3f} of trials (>= 0.95)")


def test_alpha_scaling(acceptance, one_informative_file):
    cfg = RunConfig(horizon=3000, C_override=C_ACCEPT)
    sc = alpha_scaling(ExperimentSpec(one_informative_file, cfg, n_trials=500, seed=909))
    taus = [r["mean_tau"] for r in sc["rows"]]
    ok = taus[0] < taus[1] < taus[2] and sc["r_squared"] >= 0.9
    acceptance("alpha scaling", ok, "mean tau " + ", ".join(f"{t:.1f}" for t in taus)
               + f" for alpha 0.1, 0.01, 0.001; R^2 = {sc['r_squared']:.4f} >= 0.9")


def test_gain_of_adaptivity(acceptance):
    sc = _scenario("strong_weak_k2.json")
    D = [distance(s, CenteredBinary().fit())[0] for s in sc.sources]
    assert D == pytest.approx([0.4, 0.05])
    cfg = RunConfig(alpha=0.05, horizon=20_000, C_override=C_ACCEPT)
    active = run_trials(sc, cfg, 500, 1010, "active")[0]
    worst = run_trials(sc, cfg, 500, 1010, "passive", 1)[0]
    censored = sum(not r.stopped for r in worst) + sum(not r.stopped for r in active)
    diff, ci = mean_ci([a.slots - b.slots for a, b in zip(active, worst)])

    single = Scenario([SourceModel.bernoulli(0.7, 0.4)])
    seeds = [trial_seed(1011, i) for i in range(200)]
    a1 = simulate(single, cfg, seeds, mode="active").results
    p1 = simulate(single, cfg, seeds, mode="passive", fixed_k=0).results
    identical = all((x.stopped, x.tau, x.log_wealth, x.counts) == (y.stopped, y.tau, y.log_wealth, y.counts)
                    for x, y in zip(a1, p1))
    ok = diff < 0 and ci[1] < 0 and identical
    acceptance("gain of adaptivity", ok,
               f"active - passive-on-worst = {diff:.1f} (95% CI [{ci[0]:.1f}, {ci[1]:.1f}]), "
               f"{censored} censored; K=1 active == passive on 200 matched seeds: {identical}")
