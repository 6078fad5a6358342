"""Monte Carlo driver for bias/RMSE tables.

Every replication draws its noise and initial conditions from streams keyed
by ``(H, N, rep, particle)``, so results do not depend on scheduling or on
which estimators are requested. All estimators in a replication see the same
simulated data.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, FbmIpsError, NumericalError
from .estimators import (
    ContrastGrid,
    EstimationResult,
    FixedPointMap,
    check_contraction,
    contrast_estimator,
    fixed_point_estimator,
    iterative_estimator,
    ratio_estimator,
)
from .fbm import sample_fbm
from .models import get_model
from .rng import hurst_key
from .simulation import ParticleEnsemble, euler_simulate, simulate_shifted_family

INVALID_FAILURE_RATE = 0.2

CSV_FIELDS = ["estimator", "model", "theta_index", "H", "N", "rmse", "bias", "stderr_rmse",
              "stderr_bias", "reps", "failures", "wall_time_s"]


@dataclass(frozen=True)
class ResultRow:
    estimator: str
    model: str
    theta_index: int
    H: float
    N: int
    rmse: float
    bias: float
    stderr_rmse: float
    stderr_bias: float
    reps: int
    failures: int
    wall_time_s: Optional[float] = None

    @property
    def valid(self) -> bool:
        return not math.isnan(self.rmse)


def simulate_replication(cfg: ExperimentConfig, h: float, n_part: int, rep: int) -> ParticleEnsemble:
    """The observed ensemble of one replication."""
    key = (hurst_key(h), n_part, rep)
    grid = cfg.grid
    noise = sample_fbm(h, grid, n_part, cfg.master_seed, key)
    return euler_simulate(get_model(cfg.model), cfg.theta0, cfg.sigma, grid, cfg.initial, noise,
                          cfg.master_seed, key)


def fixed_point_horizon(cfg: ExperimentConfig, h: float) -> int:
    """Number of grid steps the fixed-point estimators use for Hurst index ``h``."""
    grid = cfg.grid
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = check_contraction(get_model(cfg.model), h, cfg.sigma, grid.horizon)
    if report.ok is not False or cfg.fp_horizon == "full":
        return grid.n_steps
    if cfg.fp_horizon == "auto":
        t = report.T_max
    else:
        t = float(cfg.fp_horizon)
    steps = int(math.floor(t / grid.dt + 1e-9))
    if steps < 2:
        raise ConfigError(f"fixed-point horizon {t} leaves fewer than 2 grid steps")
    return min(steps, grid.n_steps)


def estimate_all(cfg: ExperimentConfig, ens: ParticleEnsemble, estimators: Sequence[str],
                 h: float, times: Optional[dict] = None) -> dict:
    """Run the requested estimators on one ensemble.

    Recoverable numerical failures are returned in place of a result.
    ``times``, when given, receives per-estimator wall time in seconds.

    Returns:
        ``{name: EstimationResult | Exception}``.
    """
    out: dict = {}
    fmap = None
    fp_ens = None
    for name in estimators:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if name == "ratio":
                    fam = simulate_shifted_family(ens, cfg.epsilon, cfg.shift_mode)
                    res = ratio_estimator(fam, cfg.scheme, cfg.sigma_power, h)
                elif name in ("fixed_point", "iterative"):
                    if fmap is None:
                        steps = fixed_point_horizon(cfg, h)
                        fp_ens = ens if steps == ens.grid.n_steps else ens.truncate(steps)
                        fmap = FixedPointMap(fp_ens, cfg.scheme, cfg.sigma_power, h)
                    if name == "fixed_point":
                        res = fixed_point_estimator(fp_ens, cfg.fp_tol, cfg.fp_max_iter,
                                                    cfg.fp_theta_init, fmap=fmap)
                    else:
                        res = iterative_estimator(fp_ens, cfg.it_n_iters, cfg.it_theta_init, fmap=fmap)
                elif name == "contrast":
                    lo, hi, mesh = cfg.contrast_bounds()
                    res = contrast_estimator(ens, ContrastGrid(lo, hi, mesh), h)
                else:
                    raise ConfigError(f"unknown estimator {name!r}")
        except ConfigError:
            raise
        except (FbmIpsError, FloatingPointError, np.linalg.LinAlgError) as exc:
            res = exc
        out[name] = res
        if times is not None:
            times[name] = time.perf_counter() - t0
    return out


def _replication(args) -> dict:
    cfg, h, n_part, rep = args
    t0 = time.perf_counter()
    try:
        ens = simulate_replication(cfg, h, n_part, rep)
    except NumericalError as exc:
        return {"errors": {e: None for e in cfg.estimators}, "failed": str(exc), "time": {}}
    t_sim = time.perf_counter() - t0
    times: dict = {}
    results = estimate_all(cfg, ens, cfg.estimators, h, times)
    theta0 = np.asarray(cfg.theta0)
    return {
        "errors": {k: (np.asarray(v.theta_hat) - theta0 if isinstance(v, EstimationResult) else None)
                   for k, v in results.items()},
        "failed": None,
        "time": {k: t + t_sim for k, t in times.items()},
    }


def _summarise(errs: list, reps: int, failures: int, p: int):
    """Per-coordinate (rmse, bias, se_rmse, se_bias)."""
    if not errs or failures > INVALID_FAILURE_RATE * reps:
        nan = float("nan")
        return [(nan, nan, nan, nan)] * p
    e = np.asarray(errs)  # (R, p)
    r = e.shape[0]
    out = []
    for m in range(p):
        x = e[:, m]
        mse = float(np.mean(x**2))
        rmse = math.sqrt(mse)
        bias = float(np.mean(x))
        if r > 1:
            se_bias = float(np.std(x, ddof=1) / math.sqrt(r))
            se_mse = float(np.std(x**2, ddof=1) / math.sqrt(r))
            se_rmse = se_mse / (2 * rmse) if rmse > 0 else 0.0
        else:
            se_bias = se_rmse = float("nan")
        out.append((rmse, bias, se_rmse, se_bias))
    return out


def default_threads() -> int:
    v = os.environ.get("FBM_IPS_THREADS")
    if v is None:
        return 1
    try:
        k = int(v)
    except ValueError:
        raise ConfigError(f"FBM_IPS_THREADS must be a positive integer, got {v!r}") from None
    if k < 1:
        raise ConfigError(f"FBM_IPS_THREADS must be a positive integer, got {v!r}")
    return k


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None,
                   progress=None) -> list[ResultRow]:
    """Monte Carlo bias and RMSE for every (estimator, H, N, theta coordinate).

    Args:
        cfg: Validated configuration.
        threads: Worker processes; replications are aggregated in index order
            so the output is identical for any value.
        progress: Optional callable receiving ``(H, N)`` after each cell.

    Returns:
        Rows ordered by estimator (config order), H, N, then coordinate.
        Cells with more than 20% failed replications report ``nan`` errors.
    """
    if not cfg.estimators:
        raise ConfigError("experiment.estimators is empty")
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ConfigError(f"--threads must be positive, got {threads}")
    p = len(cfg.theta0)
    cells = [(h, n) for h in cfg.hurst for n in cfg.particles]
    tasks = [(cfg, h, n, r) for h, n in cells for r in range(cfg.mc_reps)]
    if threads == 1:
        results = []
        for t in tasks:
            results.append(_replication(t))
            if progress and t[3] == cfg.mc_reps - 1:
                progress(t[1], t[2])
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replication, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    by_cell: dict = {}
    for (_, h, n, _r), res in zip(tasks, results):
        by_cell.setdefault((h, n), []).append(res)
    rows = []
    for name in cfg.estimators:
        for h, n in cells:
            reps = by_cell[(h, n)]
            errs = [r["errors"][name] for r in reps if r["errors"].get(name) is not None]
            failures = len(reps) - len(errs)
            wall = sum(r["time"].get(name, 0.0) for r in reps) if cfg.timing else None
            for m, (rmse, bias, se_r, se_b) in enumerate(_summarise(errs, len(reps), failures, p)):
                rows.append(ResultRow(name, cfg.model, m, float(h), int(n), rmse, bias, se_r, se_b,
                                      len(reps), failures, wall))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_results(rows: Sequence[ResultRow], path, fmt: str = "csv") -> None:
    """Write rows as CSV (fixed header) or a JSON array; byte-stable for equal rows."""
    if not rows:
        raise ValueError("no result rows to emit")
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_FIELDS)
                for r in rows:
                    w.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])
        elif fmt == "json":
            data = [{k: (None if isinstance(v, float) and math.isnan(v) else v)
                     for k, v in asdict(r).items()} for r in rows]
            with open(path, "w") as fh:
                json.dump(data, fh, indent=2)
                fh.write("\n")
        else:
            raise ConfigError(f"unknown output format {fmt!r}; use csv or json")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != CSV_FIELDS:
            raise ConfigError(f"{path}: unexpected header {r.fieldnames}")
        out = []
        for d in r:
            out.append(ResultRow(
                d["estimator"], d["model"], int(d["theta_index"]), float(d["H"]), int(d["N"]),
                float(d["rmse"]), float(d["bias"]), float(d["stderr_rmse"]), float(d["stderr_bias"]),
                int(d["reps"]), int(d["failures"]),
                float(d["wall_time_s"]) if d["wall_time_s"] else None,
            ))
    return out


def _num(v: float) -> str:
    if math.isnan(v):
        return "n/a"
    if v == 0:
        return "0"
    if abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.3f}"


def summary_table(rows: Sequence[ResultRow]) -> str:
    """Text table with one line per (estimator, coordinate) and columns per (H, N), cells 'RMSE (Bias)'."""
    cols = sorted({(r.H, r.N) for r in rows})
    lines = {}
    for r in rows:
        label = r.estimator if max(x.theta_index for x in rows) == 0 else f"{r.estimator}, theta_{r.theta_index + 1}"
        lines.setdefault(label, {})[(r.H, r.N)] = f"{_num(r.rmse)} ({_num(r.bias)})"
    head = [""] + [f"H={h:g}, N={n}" for h, n in cols]
    body = [[label] + [cells.get(c, "") for c in cols] for label, cells in lines.items()]
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    fmt = " | ".join("{:<%d}" % w for w in widths)
    out = [fmt.format(*head), "-+-".join("-" * w for w in widths)]
    out.extend(fmt.format(*row) for row in body)
    return "\n".join(out)
