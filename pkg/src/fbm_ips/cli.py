"""Command-line entry point ``fbm-ips``.

Subcommands: ``simulate``, ``estimate``, ``mc-table``, ``poc-check``,
``variance``. Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ConfigError, NumericalError
from .estimators import asymptotic_variance_mc
from .fbm import TimeGrid
from .harness import default_threads, emit_results, estimate_all, run_experiment, simulate_replication, summary_table
from .malliavin import poc_rate_report, write_poc_csv
from .models import get_model
from .simulation import ParticleEnsemble, read_ensemble_csv, simulate_shifted_family

log = logging.getLogger("fbm_ips")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI experiment configuration")
    common.add_argument("--out", help="output path (stdout for JSON when omitted)")
    common.add_argument("--seed", type=_u64, help="master seed, overrides experiment.master_seed")
    common.add_argument("--threads", type=int, help="worker processes (default $FBM_IPS_THREADS or 1)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("overrides", nargs="*", metavar="section.key=value")

    parser = argparse.ArgumentParser(prog="fbm-ips", description="Simulation and drift estimation "
                                     "for particle systems driven by fractional Brownian motion.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="simulate one ensemble and export it as CSV")
    p.add_argument("--shifted", action="store_true", help="also write the initial-condition-shifted systems")
    p = sub.add_parser("estimate", parents=[common], help="run estimators on one dataset")
    p.add_argument("--estimator", action="append", help="estimator key (repeatable; default: config list)")
    p.add_argument("--data", help="ensemble CSV (particle,node,time,state) instead of simulating")
    p = sub.add_parser("mc-table", parents=[common], help="Monte Carlo bias/RMSE table")
    p.add_argument("--summary", action="store_true", help="print an 'RMSE (Bias)' table")
    p.add_argument("--timing", action="store_true", help="fill the wall_time_s column")
    sub.add_parser("poc-check", parents=[common], help="propagation-of-chaos rate diagnostics")
    sub.add_parser("variance", parents=[common], help="Monte Carlo asymptotic variance constants")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg = cfg.with_overrides(master_seed=args.seed)
    if getattr(args, "timing", False):
        cfg = cfg.with_overrides(timing=True)
    return cfg


def _write_json(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, default=_json_default) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _cmd_simulate(args, cfg: ExperimentConfig) -> int:
    ens = simulate_replication(cfg, cfg.hurst[0], cfg.particles[0], 0)
    out = args.out or "ensemble.csv"
    if args.shifted:
        stem = out[:-4] if out.endswith(".csv") else out
        paths = simulate_shifted_family(ens, cfg.epsilon, cfg.shift_mode).to_csv(stem)
        log.info("wrote %d files", len(paths))
    else:
        ens.to_csv(out)
        log.info("wrote %s", out)
    return EXIT_OK


def _cmd_estimate(args, cfg: ExperimentConfig) -> int:
    names = tuple(args.estimator) if args.estimator else cfg.estimators
    cfg = cfg.with_overrides(estimators=names)  # re-validates (p = 1 restriction etc.)
    h = cfg.hurst[0]
    if args.data:
        if "ratio" in names:
            raise ConfigError("the ratio estimator needs shifted systems and cannot run on --data")
        grid, states = read_ensemble_csv(args.data)
        ens = ParticleEnsemble(get_model(cfg.model), np.asarray(cfg.theta0), cfg.sigma, grid, states, None)
    else:
        ens = simulate_replication(cfg, h, cfg.particles[0], 0)
    results = estimate_all(cfg, ens, names, h)
    failed = [(k, v) for k, v in results.items() if isinstance(v, Exception)]
    if failed:
        for k, v in failed:
            log.error("%s: %s", k, v)
        raise failed[0][1]
    _write_json([r.to_dict() for r in results.values()], args.out)
    return EXIT_OK


def _cmd_mc_table(args, cfg: ExperimentConfig) -> int:
    threads = args.threads if args.threads is not None else default_threads()
    rows = run_experiment(cfg, threads, progress=lambda h, n: log.info("cell H=%g N=%d done", h, n))
    out = args.out or ("results.json" if args.format == "json" else "results.csv")
    emit_results(rows, out, args.format)
    log.info("wrote %s", out)
    if args.summary:
        print(summary_table(rows))
    return EXIT_OK


def _cmd_poc(args, cfg: ExperimentConfig) -> int:
    rows = poc_rate_report(get_model(cfg.model), cfg.theta0, cfg.sigma, cfg.hurst[0], cfg.grid,
                           cfg.particles, cfg.mc_reps, cfg.master_seed, cfg.poc_s_index,
                           cfg.poc_s_grid, cfg.poc_n_ref, cfg.initial)
    out = args.out or "poc_rates.csv"
    if args.format == "json":
        _write_json([r.__dict__ for r in rows], out)
    else:
        write_poc_csv(rows, out)
    log.info("wrote %s", out)
    return EXIT_OK


def _cmd_variance(args, cfg: ExperimentConfig) -> int:
    res = asymptotic_variance_mc(get_model(cfg.model), cfg.theta0, cfg.sigma, cfg.hurst[0], cfg.grid,
                                 cfg.var_n_mc, cfg.master_seed, cfg.var_n_ref, cfg.initial)
    res = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in res.items()}
    _write_json(res, args.out)
    return EXIT_OK


COMMANDS = {"simulate": _cmd_simulate, "estimate": _cmd_estimate, "mc-table": _cmd_mc_table,
            "poc-check": _cmd_poc, "variance": _cmd_variance}


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be positive, got {args.threads}")
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
