"""Command-line entry point.

Subcommands:

    gen-trace   write a synthetic Zipf trace file
    simulate    replay a trace file under one policy, emit result files
    sweep       run a policies x cache-percentages x seeds grid
    check       run the built-in oracle/invariant suites

Every flag has a YAML config-file equivalent (--config); flags override file
values, unknown config keys are rejected, and the effective config is echoed
into the output directory. Exit codes: 0 success, 1 usage/config error,
2 runtime failure, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import yaml

from . import checks, report
from .simulator import InvariantViolation, SimConfig, run_simulation
from .trace import (SyntheticTraceConfig, TraceError, generate_zipf_trace,
                    parse_trace, write_trace)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _load_config(path, allowed):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    return data


def _merge(args, config, defaults):
    """Flag > config file > default, per key."""
    effective = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            effective[key] = flag
        elif key in config:
            effective[key] = config[key]
        else:
            effective[key] = default
    return effective


def _echo_config(effective, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    # the destination and parallelism degree are omitted: neither affects the
    # results, and reruns must stay byte-comparable across both
    echoed = {k: v for k, v in effective.items() if k not in ("out", "jobs")}
    with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
        yaml.safe_dump(echoed, fh, sort_keys=True)


# --- gen-trace -----------------------------------------------------------


GEN_DEFAULTS = {
    "contents": 10_000,
    "requests": 100_000,
    "zipf_alpha": 0.8,
    "reshuffle_hours": 0.0,
    "mean_interarrival": 3.0,
    "seed": 0,
    "out": "trace.txt",
}


def cmd_gen_trace(args):
    eff = _merge(args, _load_config(args.config, GEN_DEFAULTS), GEN_DEFAULTS)
    try:
        cfg = SyntheticTraceConfig(
            n_contents=int(eff["contents"]),
            n_requests=int(eff["requests"]),
            zipf_alpha=float(eff["zipf_alpha"]),
            reshuffle_period=float(eff["reshuffle_hours"]),
            mean_interarrival=float(eff["mean_interarrival"]),
            rng_seed=int(eff["seed"]),
        )
        cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    catalog, requests = generate_zipf_trace(cfg)
    with open(eff["out"], "w") as fh:
        write_trace(catalog, requests, fh)
    span_h = requests[-1].timestamp / 3600.0
    print(f"wrote {eff['out']}: C={len(catalog)} K={len(requests)} span={span_h:.1f}h")
    return EXIT_OK


# --- simulate ------------------------------------------------------------


SIM_DEFAULTS = {
    "trace": None,
    "policy": "lru",
    "cache_percentage": 1.0,
    "cache_size": None,
    "phi_hours": 1.0,
    "warmup_hours": 168.0,
    "seed": 0,
    "depth": 3,
    "first_width": 64,
    "last_width": 16,
    "batch_size": 128,
    "epochs_per_retrain": 1,
    "beta": 0.99,
    "kappa": 100.0,
    "zeta": 0.1,
    "eta": 10.0,
    "cold_start_fraction": 0.0,
    "oracle_predictor": False,
    "out": "results",
}


def _sim_config(eff) -> SimConfig:
    try:
        cfg = SimConfig(
            policy=str(eff["policy"]),
            cache_percentage=float(eff["cache_percentage"]),
            cache_size=None if eff["cache_size"] is None else int(eff["cache_size"]),
            phi_hours=float(eff["phi_hours"]),
            warmup_hours=float(eff["warmup_hours"]),
            depth=int(eff["depth"]),
            first_width=int(eff["first_width"]),
            last_width=int(eff["last_width"]),
            batch_size=int(eff["batch_size"]),
            epochs_per_retrain=int(eff["epochs_per_retrain"]),
            beta=float(eff["beta"]),
            kappa=float(eff["kappa"]),
            zeta=float(eff["zeta"]),
            eta=float(eff["eta"]),
            cold_start_fraction=float(eff["cold_start_fraction"]),
            oracle_predictor=bool(eff["oracle_predictor"]),
            seed=int(eff["seed"]),
        )
        cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    return cfg


def _read_trace(path):
    if path is None:
        raise UsageError("a trace file is required (--trace)")
    try:
        with open(path) as fh:
            return parse_trace(fh)
    except OSError as e:
        raise UsageError(f"cannot read trace {path}: {e}") from e


def cmd_simulate(args):
    eff = _merge(args, _load_config(args.config, SIM_DEFAULTS), SIM_DEFAULTS)
    config = _sim_config(eff)
    catalog, requests = _read_trace(eff["trace"])
    result = run_simulation(catalog, requests, config)

    out = eff["out"]
    _echo_config(eff, out)
    with open(os.path.join(out, "result.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for key, value in [
            ("policy", result.policy),
            ("capacity", result.capacity),
            ("test_requests", result.test_requests),
            ("test_hits", result.test_hits),
            ("hit_rate", repr(result.hit_rate)),
            ("warmup_requests", result.warmup_requests),
            ("warmup_hits", result.warmup_hits),
            ("warmup_hit_rate", repr(result.warmup_hit_rate)),
            ("overall_hit_rate", repr(result.overall_hit_rate)),
            ("cold_misses", result.cold_misses),
            ("capacity_misses", result.capacity_misses),
            ("evictions", result.evictions),
        ]:
            w.writerow([key, value])
    report.emit_series({result.policy: result}, out)
    report.emit_alpha(result, out)
    print(f"{result.policy}: hit rate {result.hit_rate:.4f} "
          f"({result.test_hits}/{result.test_requests} test requests), results in {out}/")
    return EXIT_OK


# --- sweep ---------------------------------------------------------------


SWEEP_DEFAULTS = {
    "policies": ["lru", "lfu", "belady"],
    "cache_percentages": [0.1, 1.0],
    "seeds": list(range(9)),
    "jobs": 1,
    "out": "sweep_results",
    # trace generation knobs
    "contents": 2000,
    "requests": 50_000,
    "zipf_alpha": 0.8,
    "reshuffle_hours": 24.0,
    "mean_interarrival": 3.0,
    # simulation knobs shared with `simulate`
    **{k: v for k, v in SIM_DEFAULTS.items()
       if k not in ("trace", "policy", "cache_percentage", "seed", "out")},
}


def cmd_sweep(args):
    eff = _merge(args, _load_config(args.config, SWEEP_DEFAULTS), SWEEP_DEFAULTS)
    trace_cfg = SyntheticTraceConfig(
        n_contents=int(eff["contents"]),
        n_requests=int(eff["requests"]),
        zipf_alpha=float(eff["zipf_alpha"]),
        reshuffle_period=float(eff["reshuffle_hours"]),
        mean_interarrival=float(eff["mean_interarrival"]),
    )
    try:
        trace_cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    sim_cfg = _sim_config({**SIM_DEFAULTS, **{k: eff[k] for k in eff if k in SIM_DEFAULTS}})
    grid = report.SweepGrid(
        policies=list(eff["policies"]),
        cache_percentages=[float(p) for p in eff["cache_percentages"]],
        seeds=[int(s) for s in eff["seeds"]],
        trace=trace_cfg,
        sim=sim_cfg,
    )
    table = report.run_sweep(grid, jobs=int(eff["jobs"]))
    out = eff["out"]
    _echo_config(eff, out)
    report.emit_sweep(table, out)
    failures = [r for r in table.rows if r["error"]]
    print(f"sweep: {len(table.rows)} cells ({len(failures)} failed), results in {out}/")
    for r in failures:
        print(f"  FAILED {r['policy']} p={r['cache_percentage']} seed={r['seed']}: {r['error']}")
    return EXIT_OK


# --- check ---------------------------------------------------------------


def cmd_check(args):
    try:
        results = checks.run_suites(args.suite or None)
    except ValueError as e:
        raise UsageError(str(e)) from e
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: {r.detail}")
        ok &= r.passed
    return EXIT_OK if ok else EXIT_INVARIANT


# --- parser --------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="evocache",
                                     description="Trace-driven cache replacement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-trace", help="generate a synthetic Zipf trace file")
    g.add_argument("--config")
    g.add_argument("--contents", type=int)
    g.add_argument("--requests", type=int)
    g.add_argument("--zipf-alpha", dest="zipf_alpha", type=float)
    g.add_argument("--reshuffle-hours", dest="reshuffle_hours", type=float)
    g.add_argument("--mean-interarrival", dest="mean_interarrival", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_trace)

    s = sub.add_parser("simulate", help="replay a trace under one policy")
    s.add_argument("--config")
    s.add_argument("--trace")
    s.add_argument("--policy", choices=["lru", "lfu", "lecar", "belady", "pa", "pa-fnn"])
    s.add_argument("--cache-percentage", dest="cache_percentage", type=float)
    s.add_argument("--cache-size", dest="cache_size", type=int)
    s.add_argument("--phi-hours", dest="phi_hours", type=float)
    s.add_argument("--warmup-hours", dest="warmup_hours", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--depth", type=int)
    s.add_argument("--first-width", dest="first_width", type=int)
    s.add_argument("--last-width", dest="last_width", type=int)
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--epochs-per-retrain", dest="epochs_per_retrain", type=int)
    s.add_argument("--beta", type=float)
    s.add_argument("--kappa", type=float)
    s.add_argument("--zeta", type=float)
    s.add_argument("--eta", type=float)
    s.add_argument("--cold-start-fraction", dest="cold_start_fraction", type=float)
    s.add_argument("--oracle-predictor", dest="oracle_predictor",
                   action="store_const", const=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="run a policy/cache-percentage/seed grid")
    w.add_argument("--config")
    w.add_argument("--policies", nargs="+")
    w.add_argument("--cache-percentages", dest="cache_percentages", nargs="+", type=float)
    w.add_argument("--seeds", nargs="+", type=int)
    w.add_argument("--jobs", type=int)
    w.add_argument("--contents", type=int)
    w.add_argument("--requests", type=int)
    w.add_argument("--zipf-alpha", dest="zipf_alpha", type=float)
    w.add_argument("--reshuffle-hours", dest="reshuffle_hours", type=float)
    w.add_argument("--mean-interarrival", dest="mean_interarrival", type=float)
    w.add_argument("--phi-hours", dest="phi_hours", type=float)
    w.add_argument("--warmup-hours", dest="warmup_hours", type=float)
    w.add_argument("--depth", type=int)
    w.add_argument("--batch-size", dest="batch_size", type=int)
    w.add_argument("--epochs-per-retrain", dest="epochs_per_retrain", type=int)
    w.add_argument("--beta", type=float)
    w.add_argument("--kappa", type=float)
    w.add_argument("--zeta", type=float)
    w.add_argument("--eta", type=float)
    w.add_argument("--oracle-predictor", dest="oracle_predictor",
                   action="store_const", const=True)
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", help="run the oracle/invariant suites")
    c.add_argument("--suite", nargs="+", choices=sorted(checks.SUITES))
    c.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TraceError as e:
        print(f"trace error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except Exception as e:
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
