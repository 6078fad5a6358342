"""INI experiment configuration.

Sections and keys (all optional except ``experiment.model``)::

    [experiment]  model, theta0, hurst, particles, horizon, n_steps | dt, sigma,
                  estimators, mc_reps, master_seed, initial, shift_mode, scheme,
                  sigma_power
    [ratio]       epsilon
    [contrast]    lo, hi, mesh            (one value or one per coordinate)
    [fixed_point] tol, max_iter, theta_init, horizon
    [iterative]   n_iters, theta_init
    [poc]         s_index, s_grid, n_ref
    [variance]    n_mc, n_ref

Lists are comma separated. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .errors import ConfigError
from .fbm import TimeGrid
from .models import available_models, get_model

ESTIMATORS = ("ratio", "fixed_point", "iterative", "contrast")

DEFAULT_DT = {"linear": 0.001}
FALLBACK_DT = 0.005

SCHEMA = {
    "experiment": {"model", "theta0", "hurst", "particles", "horizon", "n_steps", "dt", "sigma",
                   "estimators", "mc_reps", "master_seed", "initial", "shift_mode", "scheme",
                   "sigma_power"},
    "ratio": {"epsilon"},
    "contrast": {"lo", "hi", "mesh"},
    "fixed_point": {"tol", "max_iter", "theta_init", "horizon"},
    "iterative": {"n_iters", "theta_init"},
    "poc": {"s_index", "s_grid", "n_ref"},
    "variance": {"n_mc", "n_ref"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run a Monte Carlo table or a single estimation.

    ``fp_horizon`` is used by the fixed-point and iterative estimators only
    when the full horizon violates the contraction condition: ``"auto"``
    picks the last grid node at or below ``T_max``, ``"full"`` keeps the
    whole path, a number truncates there.
    """

    model: str
    theta0: tuple
    hurst: tuple = (0.6,)
    particles: tuple = (30,)
    horizon: float = 1.0
    n_steps: Optional[int] = None
    sigma: float = 1.0
    estimators: tuple = ("ratio",)
    mc_reps: int = 100
    master_seed: int = 0
    initial: object = "normal"
    shift_mode: str = "exact"
    scheme: str = "forward"
    sigma_power: int = 2
    epsilon: float = 0.15
    contrast_lo: tuple = (0.0,)
    contrast_hi: tuple = (20.0,)
    contrast_mesh: tuple = (0.05,)
    fp_tol: float = 1e-8
    fp_max_iter: int = 50
    fp_theta_init: object = "least_squares"
    fp_horizon: object = "auto"
    it_n_iters: object = "log"
    it_theta_init: object = "least_squares"
    poc_s_index: int = 0
    poc_s_grid: Optional[tuple] = None
    poc_n_ref: Optional[int] = None
    var_n_mc: int = 400
    var_n_ref: Optional[int] = None
    timing: bool = field(default=False, compare=False)

    def __post_init__(self):
        validate(self)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.n_steps)

    @property
    def p(self) -> int:
        return get_model(self.model).p

    def contrast_bounds(self):
        p = self.p
        out = []
        for name, vals in (("lo", self.contrast_lo), ("hi", self.contrast_hi), ("mesh", self.contrast_mesh)):
            if len(vals) == 1:
                vals = vals * p
            if len(vals) != p:
                raise ConfigError(f"contrast.{name} needs 1 or {p} values, got {len(vals)}")
            out.append(tuple(vals))
        return out

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.model not in available_models():
        raise ConfigError(f"experiment.model: unknown model {cfg.model!r}; available: {', '.join(available_models())}")
    p = get_model(cfg.model).p
    if len(cfg.theta0) != p:
        raise ConfigError(f"experiment.theta0: model {cfg.model!r} needs {p} values, got {len(cfg.theta0)}")
    for h in cfg.hurst:
        if not 0 < h < 1:
            raise ConfigError(f"experiment.hurst: H={h} is outside the open interval (0, 1)")
    if not cfg.hurst or not cfg.particles:
        raise ConfigError("experiment.hurst and experiment.particles must be non-empty")
    for n in cfg.particles:
        if n < 1:
            raise ConfigError(f"experiment.particles: need at least one particle, got {n}")
    if not cfg.horizon > 0:
        raise ConfigError(f"experiment.horizon must be positive, got {cfg.horizon}")
    if cfg.n_steps is None or cfg.n_steps < 2:
        raise ConfigError(f"experiment.n_steps must be at least 2, got {cfg.n_steps}")
    if not cfg.sigma > 0:
        raise ConfigError(f"experiment.sigma must be positive, got {cfg.sigma}")
    if cfg.mc_reps < 1:
        raise ConfigError(f"experiment.mc_reps must be at least 1, got {cfg.mc_reps}")
    if not 0 <= cfg.master_seed < 2**64:
        raise ConfigError("experiment.master_seed must be an unsigned 64-bit integer")
    if cfg.shift_mode not in ("exact", "frozen"):
        raise ConfigError(f"experiment.shift_mode must be exact or frozen, got {cfg.shift_mode!r}")
    if cfg.scheme not in ("forward", "trapezoid"):
        raise ConfigError(f"experiment.scheme must be forward or trapezoid, got {cfg.scheme!r}")
    if cfg.sigma_power not in (1, 2):
        raise ConfigError(f"experiment.sigma_power must be 1 or 2, got {cfg.sigma_power}")
    unknown = [e for e in cfg.estimators if e not in ESTIMATORS]
    if unknown:
        raise ConfigError(f"experiment.estimators: unknown {unknown}; choose from {', '.join(ESTIMATORS)}")
    if len(set(cfg.estimators)) != len(cfg.estimators):
        raise ConfigError("experiment.estimators lists an estimator twice")
    if p != 1 and ({"fixed_point", "iterative"} & set(cfg.estimators)):
        raise ConfigError(
            f"fixed_point and iterative estimators are restricted to p = 1; model {cfg.model!r} has p = {p}"
        )
    if cfg.estimators and min(cfg.hurst) < 0.5:
        raise ConfigError("estimators need H >= 1/2; simulation alone supports any H in (0, 1)")
    if not cfg.epsilon > 0:
        raise ConfigError(f"ratio.epsilon must be positive, got {cfg.epsilon}")
    if not cfg.fp_tol > 0 or cfg.fp_max_iter < 1:
        raise ConfigError("fixed_point.tol must be positive and fixed_point.max_iter at least 1")
    if isinstance(cfg.fp_horizon, float) and not 0 < cfg.fp_horizon <= cfg.horizon:
        raise ConfigError(f"fixed_point.horizon must lie in (0, {cfg.horizon}], got {cfg.fp_horizon}")
    if cfg.var_n_mc < 2:
        raise ConfigError("variance.n_mc must be at least 2")
    cfg.contrast_bounds()


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _floats(s: str, key: str) -> tuple:
    try:
        return tuple(float(v) for v in s.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {s!r}") from None


def _ints(s: str, key: str) -> tuple:
    vals = _floats(s, key)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"{key}: expected integers, got {s!r}")
    return tuple(int(v) for v in vals)


def _int(s: str, key: str) -> int:
    (v,) = _ints(s, key) or (None,)
    if v is None:
        raise ConfigError(f"{key}: missing value")
    return v


def _float(s: str, key: str) -> float:
    vals = _floats(s, key)
    if len(vals) != 1:
        raise ConfigError(f"{key}: expected one number, got {s!r}")
    return vals[0]


def _number_or_word(s: str, key: str, words: Sequence[str]):
    s = s.strip()
    if s in words:
        return s
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"{key}: expected a number or one of {', '.join(words)}, got {s!r}") from None


def _initial(s: str):
    s = s.strip()
    if s == "normal":
        return s
    vals = _floats(s, "experiment.initial")
    return vals[0] if len(vals) == 1 else vals


def parse_override(text: str) -> tuple[str, str, str]:
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    lhs, value = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    return section.strip(), key.strip(), value.strip()


def load_config(path=None, overrides: Sequence[str] = (), text: Optional[str] = None) -> ExperimentConfig:
    """Read an INI file (or string), apply ``section.key=value`` overrides and validate."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path) as fh:
                cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for ov in overrides:
        section, key, value = parse_override(ov)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)
    unknown = []
    for section in cp.sections():
        if section not in SCHEMA:
            unknown.append(f"[{section}]")
            continue
        unknown.extend(f"{section}.{k}" for k in cp[section] if k not in SCHEMA[section])
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return _build(cp)


def _build(cp: configparser.ConfigParser) -> ExperimentConfig:
    ex = cp["experiment"] if cp.has_section("experiment") else {}
    if "model" not in ex:
        raise ConfigError("experiment.model is required")
    model = ex["model"].strip()
    if model not in available_models():
        raise ConfigError(f"experiment.model: unknown model {model!r}; available: {', '.join(available_models())}")
    kw: dict = {"model": model}
    kw["theta0"] = _floats(ex["theta0"], "experiment.theta0") if "theta0" in ex else None
    if kw["theta0"] is None:
        raise ConfigError("experiment.theta0 is required")
    if "hurst" in ex:
        kw["hurst"] = _floats(ex["hurst"], "experiment.hurst")
    if "particles" in ex:
        kw["particles"] = _ints(ex["particles"], "experiment.particles")
    horizon = _float(ex["horizon"], "experiment.horizon") if "horizon" in ex else 1.0
    kw["horizon"] = horizon
    if "n_steps" in ex and "dt" in ex:
        raise ConfigError("give experiment.n_steps or experiment.dt, not both")
    if "n_steps" in ex:
        kw["n_steps"] = _int(ex["n_steps"], "experiment.n_steps")
    else:
        dt = _float(ex["dt"], "experiment.dt") if "dt" in ex else DEFAULT_DT.get(model, FALLBACK_DT)
        if not dt > 0:
            raise ConfigError(f"experiment.dt must be positive, got {dt}")
        kw["n_steps"] = max(1, int(round(horizon / dt)))
        if not math.isclose(kw["n_steps"] * dt, horizon, rel_tol=1e-9):
            raise ConfigError(f"experiment.dt={dt} does not divide the horizon {horizon}")
    if "sigma" in ex:
        kw["sigma"] = _float(ex["sigma"], "experiment.sigma")
    if "estimators" in ex:
        kw["estimators"] = tuple(e.strip() for e in ex["estimators"].split(",") if e.strip())
    for key, conv in (("mc_reps", _int), ("master_seed", _int), ("sigma_power", _int)):
        if key in ex:
            kw[key] = conv(ex[key], f"experiment.{key}")
    if "initial" in ex:
        kw["initial"] = _initial(ex["initial"])
    for key in ("shift_mode", "scheme"):
        if key in ex:
            kw[key] = ex[key].strip()

    def sec(name):
        return cp[name] if cp.has_section(name) else {}

    if "epsilon" in sec("ratio"):
        kw["epsilon"] = _float(sec("ratio")["epsilon"], "ratio.epsilon")
    for key in ("lo", "hi", "mesh"):
        if key in sec("contrast"):
            kw[f"contrast_{key}"] = _floats(sec("contrast")[key], f"contrast.{key}")
    fp = sec("fixed_point")
    if "tol" in fp:
        kw["fp_tol"] = _float(fp["tol"], "fixed_point.tol")
    if "max_iter" in fp:
        kw["fp_max_iter"] = _int(fp["max_iter"], "fixed_point.max_iter")
    if "theta_init" in fp:
        kw["fp_theta_init"] = _number_or_word(fp["theta_init"], "fixed_point.theta_init", ("least_squares",))
    if "horizon" in fp:
        kw["fp_horizon"] = _number_or_word(fp["horizon"], "fixed_point.horizon", ("auto", "full"))
    it = sec("iterative")
    if "n_iters" in it:
        v = _number_or_word(it["n_iters"], "iterative.n_iters", ("log",))
        kw["it_n_iters"] = v if v == "log" else int(v)
    if "theta_init" in it:
        kw["it_theta_init"] = _number_or_word(it["theta_init"], "iterative.theta_init", ("least_squares",))
    poc = sec("poc")
    if "s_index" in poc:
        kw["poc_s_index"] = _int(poc["s_index"], "poc.s_index")
    if "s_grid" in poc:
        kw["poc_s_grid"] = _ints(poc["s_grid"], "poc.s_grid")
    if "n_ref" in poc:
        kw["poc_n_ref"] = _int(poc["n_ref"], "poc.n_ref")
    var = sec("variance")
    if "n_mc" in var:
        kw["var_n_mc"] = _int(var["n_mc"], "variance.n_mc")
    if "n_ref" in var:
        kw["var_n_ref"] = _int(var["n_ref"], "variance.n_ref")
    return ExperimentConfig(**kw)
