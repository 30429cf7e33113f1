"""Monte Carlo driver: repeated trials, aggregate metrics, comparisons, diagnostics, reports.

Trial ``i`` of an experiment with base seed ``s`` always uses the generator
``default_rng(trial_seed(s, i))``. Trials are split into blocks that may run
in worker processes; since each trial owns its stream, results do not depend
on the block size or the degree of parallelism.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import stats

from ._validation import check_positive_int
from .analysis import population_summary
from .betting import wealth_lower_bound
from .engine import RunConfig, simulate, trial_seed
from .exceptions import ConfigError
from .features import feature_maps_for

SCHEMA_VERSION = "1.0"
ALPHA_GRID = (0.1, 0.01, 0.001)
TAU_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)
MIN_TRIALS_FOR_CI = 30


@dataclass
class ExperimentSpec:
    scenario: object
    config: RunConfig
    n_trials: int = 100
    seed: int = 0
    mode: str = "active"
    diagnostics: bool = False
    parallel: int = 1
    block_size: int | None = None

    def __post_init__(self):
        check_positive_int(self.n_trials, "n_trials")
        check_positive_int(self.seed, "seed", minimum=0)
        check_positive_int(self.parallel, "parallel")
        parse_mode(self.mode, self.scenario.K)

    def echo(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(), "run": self.config.to_dict(),
            "n_trials": self.n_trials, "seed": self.seed, "mode": self.mode,
        }


def parse_mode(mode: str, K: int):
    """``"active"``, ``"oracle"``, ``"compare"`` or ``"passive:k"`` -> ``(name, k)``."""
    if mode in ("active", "oracle", "compare"):
        return mode, None
    if isinstance(mode, str) and mode.startswith("passive:"):
        try:
            k = int(mode.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"mode: bad passive source index in {mode!r}") from None
        if not 0 <= k < K:
            raise ConfigError(f"mode: passive source index {k} out of range [0, {K})")
        return "passive", k
    raise ConfigError(f"mode: expected active, oracle, compare or passive:<k>, got {mode!r}")


def default_bucket_edges(horizon: int) -> list:
    """Decade buckets ``[1, 10), [10, 100), ...`` covering the horizon."""
    edges = [1]
    while edges[-1] * 10 <= horizon:
        edges.append(edges[-1] * 10)
    return edges


# --------------------------------------------------------------------------- trials

def _run_block(args):
    scenario, cfg, seeds, mode, fixed_k, edges, diag = args
    fmaps = feature_maps_for(scenario, cfg.features)
    out = simulate(scenario, cfg, seeds, mode=mode, fixed_k=fixed_k, trace=diag is not None,
                   bucket_edges=edges, fmaps=fmaps)
    checks = None
    if diag is not None:
        checks = [check_trace(r.trace, scenario.K, **diag) for r in out.results]
        for r in out.results:
            r.trace = None
    return out.results, out.selection_counts, checks


def run_trials(scenario, cfg, n_trials, seed, mode="active", fixed_k=None, parallel=1,
               block_size=None, bucket_edges=None, diagnostics=None):
    """Run ``n_trials`` trials; returns ``(results, selection_counts, per_trial_checks)``."""
    seeds = [trial_seed(seed, i) for i in range(n_trials)]
    if block_size is None:
        block_size = 64 if diagnostics is not None else 1000
    blocks = [seeds[i:i + block_size] for i in range(0, n_trials, block_size)]
    jobs = [(scenario, cfg, b, mode, fixed_k, bucket_edges, diagnostics) for b in blocks]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    results = [r for res, _, _ in parts for r in res]
    counts = None
    if bucket_edges is not None:
        counts = sum(c for _, c, _ in parts)
    checks = None
    if diagnostics is not None:
        checks = [c for _, _, ch in parts for c in ch]
    return results, counts, checks


# --------------------------------------------------------------------------- statistics

def proportion_ci(k, n, level=0.95):
    """Normal-approximation CI for a proportion; ``None`` below the sample-size guard."""
    if n < MIN_TRIALS_FOR_CI:
        return None
    p = k / n
    se = math.sqrt(p * (1.0 - p) / n)
    z = stats.norm.ppf(0.5 + level / 2.0)
    return [p - z * se, p + z * se]


def mean_ci(x, level=0.95):
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    if x.size < 2:
        return m, None
    se = float(x.std(ddof=1) / math.sqrt(x.size))
    z = stats.norm.ppf(0.5 + level / 2.0)
    return m, [m - z * se, m + z * se]


def affine_fit(x, y):
    """Least-squares ``y = intercept + slope x``; returns ``(slope, intercept, r_squared)``."""
    res = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)


# --------------------------------------------------------------------------- summaries

@dataclass
class TrialRecord:
    seed: int
    stopped: bool
    tau: int | None
    log_wealth: float
    counts: list


@dataclass
class MetricsSummary:
    n_trials: int
    mode: str
    horizon: int
    stop_fraction: float
    stop_se: float
    stop_ci: list | None
    mean_tau_stopped: float | None
    censoring_rate: float
    restricted_mean_tau: float
    restricted_mean_se: float | None
    tau_quantiles: dict
    mean_final_log_wealth: float
    selection_frequencies: dict | None = None
    population: dict | None = None
    diagnostics: dict | None = None
    config: dict | None = None
    trials: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("trials")
        for key in ("diagnostics", "selection_frequencies", "population", "config"):
            if out[key] is None:
                out.pop(key)
        return out


def summarize(results, mode, horizon, selection_counts=None, bucket_edges=None) -> MetricsSummary:
    n = len(results)
    stopped = np.array([r.stopped for r in results])
    slots = np.array([r.slots for r in results], dtype=float)
    taus = slots[stopped]
    k = int(stopped.sum())
    p = k / n
    quantiles = {}
    if taus.size:
        quantiles = {str(q): float(np.quantile(taus, q)) for q in TAU_QUANTILES}
    freqs = None
    if selection_counts is not None:
        rows = []
        for row in np.asarray(selection_counts):
            total = row.sum()
            rows.append(None if total == 0 else (row / total).tolist())
        freqs = {"bucket_edges": list(bucket_edges), "frequencies": rows}
    return MetricsSummary(
        n_trials=n, mode=mode, horizon=int(horizon),
        stop_fraction=p, stop_se=math.sqrt(p * (1 - p) / n), stop_ci=proportion_ci(k, n),
        mean_tau_stopped=float(taus.mean()) if taus.size else None,
        censoring_rate=1.0 - p,
        restricted_mean_tau=float(slots.mean()),
        restricted_mean_se=float(slots.std(ddof=1) / math.sqrt(n)) if n > 1 else None,
        tau_quantiles=quantiles,
        mean_final_log_wealth=float(np.mean([r.log_wealth for r in results])),
        selection_frequencies=freqs,
        trials=[TrialRecord(r.seed, r.stopped, r.tau, r.log_wealth, list(r.counts)) for r in results],
    )


def _population_or_none(scenario, cfg):
    try:
        K = scenario.K
        C = cfg.exploration_constant(K)
    except ConfigError:
        C = None
    try:
        return population_summary(scenario, cfg.features, alpha=cfg.alpha, C=C)
    except (ConfigError, NotImplementedError):
        return None


def monte_carlo(spec: ExperimentSpec) -> MetricsSummary:
    """Run the experiment and aggregate it. ``mode="compare"`` is not handled here."""
    mode, k = parse_mode(spec.mode, spec.scenario.K)
    if mode == "compare":
        raise ConfigError("use compare_active_passive for mode 'compare'")
    cfg = spec.config
    edges = default_bucket_edges(cfg.horizon)
    pop = _population_or_none(spec.scenario, cfg)
    diag = None
    if spec.diagnostics:
        a_star = pop.a_star if (pop is not None and spec.scenario.truth_label == "alternative") else None
        diag = {"a_star": a_star}
    results, counts, checks = run_trials(spec.scenario, cfg, spec.n_trials, spec.seed, mode, k,
                                         spec.parallel, spec.block_size, edges, diag)
    summary = summarize(results, spec.mode, cfg.horizon, counts, edges)
    summary.population = None if pop is None else pop.to_dict()
    summary.config = spec.echo()
    if checks is not None:
        summary.diagnostics = aggregate_checks(checks).to_dict()
    return summary


# --------------------------------------------------------------------------- comparison

@dataclass
class ComparisonReport:
    cohorts: dict
    differences: dict
    alpha_scaling: dict
    best_source: int
    worst_informative_source: int | None
    population: dict | None = None
    config: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "cohorts": {name: s.to_dict() for name, s in self.cohorts.items()},
            "differences": self.differences,
            "alpha_scaling": self.alpha_scaling,
            "best_source": self.best_source,
            "worst_informative_source": self.worst_informative_source,
        }
        if self.population is not None:
            out["population"] = self.population
        if self.config is not None:
            out["config"] = self.config
        return out


def _paired_difference(a, b):
    x = np.array([r.slots for r in a], dtype=float) - np.array([r.slots for r in b], dtype=float)
    m, ci = mean_ci(x)
    return {"mean": m, "ci95": ci}


def compare_active_passive(spec: ExperimentSpec, alphas=ALPHA_GRID) -> ComparisonReport:
    """Matched-seed cohorts for active, passive on every source, and oracle.

    Differences are paired over trials and use ``min(tau, horizon)``.
    """
    scenario, cfg = spec.scenario, spec.config
    if scenario.truth_label == "null":
        raise ConfigError("compare: refusing a null scenario, there is no stopping time to compare")
    pop = population_summary(scenario, cfg.features, alpha=cfg.alpha,
                             C=cfg.exploration_constant(scenario.K))
    informative = [k for k, D in enumerate(pop.distances) if D > 0]
    worst = min(informative, key=lambda k: (pop.distances[k], -k)) if informative else None
    run = {}
    run["active"] = run_trials(scenario, cfg, spec.n_trials, spec.seed, "active",
                               parallel=spec.parallel, block_size=spec.block_size)[0]
    for k in range(scenario.K):
        run[f"passive:{k}"] = run_trials(scenario, cfg, spec.n_trials, spec.seed, "passive", k,
                                         spec.parallel, spec.block_size)[0]
    run["oracle"] = run_trials(scenario, cfg, spec.n_trials, spec.seed, "oracle",
                               parallel=spec.parallel, block_size=spec.block_size)[0]
    cohorts = {name: summarize(res, name, cfg.horizon) for name, res in run.items()}
    differences = {f"active - passive:{k}": _paired_difference(run["active"], run[f"passive:{k}"])
                   for k in range(scenario.K)}
    differences["oracle - active"] = _paired_difference(run["oracle"], run["active"])
    return ComparisonReport(cohorts, differences, alpha_scaling(spec, alphas), pop.a_star, worst,
                            pop.to_dict(), spec.echo())


def alpha_scaling(spec: ExperimentSpec, alphas=ALPHA_GRID) -> dict:
    """Mean stopping time of the active test against ``log(1/alpha)`` with an affine fit."""
    rows = []
    for alpha in alphas:
        cfg = RunConfig(**{**spec.config.to_dict(), "alpha": alpha})
        res = run_trials(spec.scenario, cfg, spec.n_trials, spec.seed, "active",
                         parallel=spec.parallel, block_size=spec.block_size)[0]
        s = summarize(res, "active", cfg.horizon)
        rows.append({"alpha": alpha, "log_inv_alpha": math.log(1.0 / alpha),
                     "mean_tau": s.restricted_mean_tau, "se": s.restricted_mean_se,
                     "censoring_rate": s.censoring_rate})
    slope, intercept, r2 = affine_fit([r["log_inv_alpha"] for r in rows], [r["mean_tau"] for r in rows])
    return {"rows": rows, "slope": slope, "intercept": intercept, "r_squared": r2}


# --------------------------------------------------------------------------- diagnostics

def check_trace(trace, K, a_star=None, checkpoints=None, sqrt_factor=5.0):
    """Empirical sampling-frequency and wealth checks on one retained trace."""
    T = len(trace)
    if checkpoints is None:
        checkpoints = [c for c in (10, 100, 1000, 10_000, 100_000) if c <= T] or [T]
    onehot = np.zeros((T, K), dtype=np.int64)
    onehot[np.arange(T), trace.source] = 1
    N = np.cumsum(onehot, axis=0)
    out = {"slots": T}
    out["log_growth"] = {str(t): bool(N[t - 1].min() >= math.log(t)) for t in checkpoints}
    if a_star is not None:
        half = trace.leader[T // 2:]
        out["leader_frequency"] = float(np.mean(half == a_star)) if half.size else None
        others = [k for k in range(K) if k != a_star]
        out["sqrt_bound"] = bool(all(N[-1, k] <= sqrt_factor * math.sqrt(T) for k in others))
    bound = wealth_lower_bound(trace.v)
    out["wealth_bound"] = bool(trace.log_wealth[-1] >= bound.log_first) if bound.defined else None
    return out


@dataclass
class LemmaChecks:
    n_trials: int
    log_growth_rate: dict
    leader_frequency_mean: float | None
    leader_pass_rate: float | None
    sqrt_bound_rate: float | None
    wealth_bound_rate: float | None
    wealth_bound_failures: int
    leader_threshold: float = 0.9
    per_trial: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("per_trial")
        return out


def aggregate_checks(checks, leader_threshold=0.9) -> LemmaChecks:
    if not checks:
        raise ConfigError("diagnostics: no traces to check")
    keys = sorted({k for c in checks for k in c["log_growth"]}, key=int)
    growth = {}
    for key in keys:
        vals = [c["log_growth"][key] for c in checks if key in c["log_growth"]]
        growth[key] = float(np.mean(vals))
    lead = [c["leader_frequency"] for c in checks if c.get("leader_frequency") is not None]
    sq = [c["sqrt_bound"] for c in checks if "sqrt_bound" in c]
    wb = [c["wealth_bound"] for c in checks if c["wealth_bound"] is not None]
    return LemmaChecks(
        n_trials=len(checks), log_growth_rate=growth,
        leader_frequency_mean=float(np.mean(lead)) if lead else None,
        leader_pass_rate=float(np.mean([f >= leader_threshold for f in lead])) if lead else None,
        sqrt_bound_rate=float(np.mean(sq)) if sq else None,
        wealth_bound_rate=float(np.mean(wb)) if wb else None,
        wealth_bound_failures=int(sum(not x for x in wb)),
        leader_threshold=leader_threshold, per_trial=list(checks),
    )


def diagnostics(traces, K, a_star=None, checkpoints=None, sqrt_factor=5.0, leader_threshold=0.9) -> LemmaChecks:
    """Sampling-frequency and wealth checks over retained traces (``None`` entries are rejected)."""
    if any(tr is None for tr in traces):
        raise NotImplementedError("diagnostics need retained traces (run with history retention)")
    checks = [check_trace(tr, K, a_star, checkpoints, sqrt_factor) for tr in traces]
    return aggregate_checks(checks, leader_threshold)


# --------------------------------------------------------------------------- reports

_TRIAL_FIELDS = ("seed", "stopped", "tau", "log_wealth")


def _write_trials_csv(path, trials, K):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(_TRIAL_FIELDS) + [f"N{k}" for k in range(K)])
        for t in trials:
            writer.writerow([t.seed, int(t.stopped), "" if t.tau is None else t.tau, repr(t.log_wealth)]
                            + list(t.counts))


def _read_trials_csv(path):
    trials = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        K = len(header) - len(_TRIAL_FIELDS)
        for row in reader:
            seed = None if row[0] in ("", "None") else int(row[0])
            trials.append(TrialRecord(seed, bool(int(row[1])), None if row[2] == "" else int(row[2]),
                                      float(row[3]), [int(x) for x in row[4:4 + K]]))
    return trials


def _write_alpha_csv(path, scaling):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "log_inv_alpha", "mean_tau", "se", "censoring_rate"])
        for r in scaling["rows"]:
            writer.writerow([repr(r["alpha"]), repr(r["log_inv_alpha"]), repr(r["mean_tau"]),
                             "" if r["se"] is None else repr(r["se"]), repr(r["censoring_rate"])])


def emit_report(report, destination, fmt="both", timestamp=True) -> list:
    """Write ``report.json`` and CSV files into ``destination``; returns the written paths.

    ``fmt`` is ``json``, ``csv`` or ``both``.
    """
    if fmt not in ("json", "csv", "both"):
        raise ConfigError(f"format must be json, csv or both, got {fmt!r}")
    out = Path(destination)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    is_cmp = isinstance(report, ComparisonReport)
    if fmt in ("json", "both"):
        doc = {"schema_version": SCHEMA_VERSION, "kind": "comparison" if is_cmp else "metrics"}
        if timestamp:
            doc["generated_at"] = datetime.now(timezone.utc).isoformat()
        doc.update(report.to_dict())
        path = out / "report.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written.append(path)
    if fmt in ("csv", "both"):
        if is_cmp:
            for name, s in report.cohorts.items():
                path = out / f"trials_{name.replace(':', '_')}.csv"
                _write_trials_csv(path, s.trials, _k_of(s))
                written.append(path)
            path = out / "alpha_scaling.csv"
            _write_alpha_csv(path, report.alpha_scaling)
            written.append(path)
        else:
            path = out / "trials.csv"
            _write_trials_csv(path, report.trials, _k_of(report))
            written.append(path)
    return written


def _k_of(summary):
    if summary.trials:
        return len(summary.trials[0].counts)
    if summary.config:
        return len(summary.config["scenario"]["sources"])
    return 0


def _summary_from_dict(doc, trials):
    fields = MetricsSummary.__dataclass_fields__
    kw = {k: doc.get(k) for k in fields if k != "trials"}
    return MetricsSummary(**kw, trials=trials)


def load_report(destination):
    """Inverse of :func:`emit_report` (JSON plus the trial CSVs when present)."""
    out = Path(destination)
    doc = json.loads((out / "report.json").read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported report schema {doc.get('schema_version')!r}")
    if doc["kind"] == "metrics":
        path = out / "trials.csv"
        return _summary_from_dict(doc, _read_trials_csv(path) if path.exists() else [])
    cohorts = {}
    for name, sdoc in doc["cohorts"].items():
        path = out / f"trials_{name.replace(':', '_')}.csv"
        cohorts[name] = _summary_from_dict(sdoc, _read_trials_csv(path) if path.exists() else [])
    return ComparisonReport(cohorts, doc["differences"], doc["alpha_scaling"], doc["best_source"],
                            doc["worst_informative_source"], doc.get("population"), doc.get("config"))
