"""Command line entry point: ``active-two-sample <command> --scenario FILE [options]``.

Commands: ``run`` (one trial with a per-slot trace), ``mc`` (Monte Carlo),
``compare`` (active vs passive vs oracle, with the alpha-scaling table),
``diagnose`` (sampling-frequency and wealth-bound checks) and
``population`` (analytic quantities only).

The scenario file may carry ``features`` and ``run`` sections; command line
flags override the ``run`` section. Exit codes: 0 success, 2 configuration
error, 3 contract violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .analysis import population_summary
from .engine import RunConfig, simulate
from .exceptions import CapabilityError, ConfigError, ContractViolation
from .harness import (ExperimentSpec, compare_active_passive, emit_report, monte_carlo, parse_mode,
                      summarize)
from .sources import parse_scenario

EXIT_CONFIG = 2
EXIT_CONTRACT = 3

_FLAG_TO_FIELD = {
    "alpha": "alpha", "horizon": "horizon", "seed": "seed", "c_override": "C_override",
    "L": "L", "ons_sign": "ons_sign",
}


def _common(parser):
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--horizon", type=int, help="censoring cap T_max")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--c-override", dest="c_override", type=float)
    parser.add_argument("--L", dest="L", type=float, help="lower bound on the sub-optimality gap")
    parser.add_argument("--ons-sign", dest="ons_sign", choices=["ascent", "paper-literal"])
    parser.add_argument("--out", help="output directory for reports")
    parser.add_argument("--format", dest="fmt", choices=["json", "csv", "both"], default="both")
    parser.add_argument("--no-timestamp", action="store_true", help="omit generated_at for byte-stable reports")
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--mode", default="active", help="active | oracle | passive:<k>")
    parser.add_argument("--parallel", type=int, default=1, help="worker processes; results do not depend on it")


def build_parser():
    parser = argparse.ArgumentParser(prog="active-two-sample", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one trial with a per-slot trace")
    _common(p)
    p.add_argument("--show", type=int, default=10, help="slots of the trace to print")

    for name, helptext in (("mc", "Monte Carlo estimate of stop rate and stopping time"),
                           ("diagnose", "sampling-frequency and wealth-bound checks")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name == "diagnose":
            p.add_argument("--no-stop", action="store_true", help="keep sampling past rejection")

    p = sub.add_parser("compare", help="active vs passive vs oracle with matched seeds")
    _common(p)

    p = sub.add_parser("population", help="analytic population quantities")
    _common(p)
    return parser


def load_inputs(args, **overrides):
    try:
        doc = json.loads(Path(args.scenario).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.scenario}: not valid JSON: {exc}") from None
    scenario = parse_scenario(doc)
    run = dict(doc.get("run", {}))
    if "features" in doc:
        run["features"] = doc["features"]
    for flag, fieldname in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            run[fieldname] = value
    run.update(overrides)
    return scenario, RunConfig.from_dict(run)


def _print_summary(s, stream):
    ci = "n/a" if s.stop_ci is None else f"[{s.stop_ci[0]:.4f}, {s.stop_ci[1]:.4f}]"
    mean_tau = "n/a" if s.mean_tau_stopped is None else f"{s.mean_tau_stopped:.2f}"
    print(f"{s.mode}: trials={s.n_trials} stop_fraction={s.stop_fraction:.4f} (95% CI {ci}) "
          f"mean_tau_stopped={mean_tau} censoring={s.censoring_rate:.4f} "
          f"restricted_mean_tau={s.restricted_mean_tau:.2f}", file=stream)


def cmd_run(args, out):
    scenario, cfg = load_inputs(args, keep_history=True)
    mode, k = parse_mode(args.mode, scenario.K)
    res = simulate(scenario, cfg, [cfg.seed], mode=mode, fixed_k=k, trace=True).results[0]
    tr = res.trace
    print(f"stopped={res.stopped} tau={res.tau} log_wealth={res.log_wealth:.6f} counts={res.counts}", file=out)
    print("t\tsource\tv\tlambda\teps\tlog_wealth", file=out)
    for i in range(min(args.show, len(tr))):
        print(f"{i + 1}\t{tr.source[i]}\t{tr.v[i]:+.6f}\t{tr.lam[i]:+.6f}\t{tr.eps[i]:.4f}\t{tr.log_wealth[i]:.6f}",
              file=out)
    if args.out:
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        with open(dest / "trace.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "source", "x1", "x2", "v", "lambda", "eps", "log_wealth"])
            for i in range(len(tr)):
                writer.writerow([i + 1, tr.source[i], repr(tr.x1[i]), repr(tr.x2[i]), repr(tr.v[i]),
                                 repr(tr.lam[i]), repr(tr.eps[i]), repr(tr.log_wealth[i])])
        summary = summarize([res], args.mode, cfg.horizon)
        summary.config = {"scenario": scenario.to_dict(), "run": cfg.to_dict(), "n_trials": 1,
                          "seed": cfg.seed, "mode": args.mode}
        emit_report(summary, dest, args.fmt, timestamp=not args.no_timestamp)


def _spec(args, scenario, cfg, diagnostics=False):
    return ExperimentSpec(scenario, cfg, n_trials=args.trials, seed=cfg.seed, mode=args.mode,
                          diagnostics=diagnostics, parallel=args.parallel)


def cmd_mc(args, out):
    scenario, cfg = load_inputs(args)
    summary = monte_carlo(_spec(args, scenario, cfg))
    _print_summary(summary, out)
    if args.out:
        emit_report(summary, args.out, args.fmt, timestamp=not args.no_timestamp)


def cmd_diagnose(args, out):
    extra = {"stop_at_rejection": False} if args.no_stop else {}
    scenario, cfg = load_inputs(args, **extra)
    summary = monte_carlo(_spec(args, scenario, cfg, diagnostics=True))
    _print_summary(summary, out)
    print(json.dumps(summary.diagnostics, indent=2), file=out)
    if args.out:
        emit_report(summary, args.out, args.fmt, timestamp=not args.no_timestamp)


def cmd_compare(args, out):
    scenario, cfg = load_inputs(args)
    args.mode = "compare"
    report = compare_active_passive(_spec(args, scenario, cfg))
    for s in report.cohorts.values():
        _print_summary(s, out)
    for name, diff in report.differences.items():
        ci = diff["ci95"]
        ci_text = "n/a" if ci is None else f"[{ci[0]:.2f}, {ci[1]:.2f}]"
        print(f"{name}: mean {diff['mean']:.2f} (95% CI {ci_text})", file=out)
    sc = report.alpha_scaling
    for row in sc["rows"]:
        print(f"alpha={row['alpha']}: mean_tau={row['mean_tau']:.2f}", file=out)
    print(f"affine fit in log(1/alpha): slope={sc['slope']:.3f} R^2={sc['r_squared']:.4f}", file=out)
    if args.out:
        emit_report(report, args.out, args.fmt, timestamp=not args.no_timestamp)


def cmd_population(args, out):
    scenario, cfg = load_inputs(args)
    try:
        C = cfg.exploration_constant(scenario.K)
    except ConfigError:
        C = None
    pop = population_summary(scenario, cfg.features, alpha=cfg.alpha, C=C)
    print(json.dumps(pop.to_dict(), indent=2), file=out)
    if args.out:
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        (dest / "population.json").write_text(json.dumps({"population": pop.to_dict()}, indent=2) + "\n")


COMMANDS = {"run": cmd_run, "mc": cmd_mc, "diagnose": cmd_diagnose, "compare": cmd_compare,
            "population": cmd_population}


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args, out)
    except (ConfigError, CapabilityError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
