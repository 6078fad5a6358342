"""Malliavin and initial-condition derivatives along simulated paths.

Both derivatives solve the same linear system along the path,

    dD^k = [<theta, d_x b(X^k)> D^k + (1/N) sum_l <theta, d_mu b(X^k)(X^l)> D^l] dt,

started at node ``s`` from ``sigma * e_j`` (Malliavin, w.r.t. the noise of
particle j) or at node 0 from ``e_j`` (initial condition of particle j). It is
integrated by explicit Euler on the simulation grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError
from .fbm import TimeGrid, sample_fbm
from .models import DriftModel
from .simulation import ParticleEnsemble, euler_simulate, simulate_limit_proxy


def _slopes(ensemble: ParticleEnsemble, theta) -> np.ndarray:
    """``<theta, d_x b(X^k_t, mu_t)>`` with shape ``(N, n+1)``."""
    return np.tensordot(np.atleast_1d(np.asarray(theta, dtype=float)), ensemble.dxb_values(), axes=1)


def _propagate(ensemble: ParticleEnsemble, theta, s_index: int, start: np.ndarray,
               interacting: bool = True) -> np.ndarray:
    """Euler-integrate the derivative system for several starting vectors at once.

    Args:
        start: ``(J, N)``; row ``r`` is the state of system ``r`` at node ``s_index``.
        interacting: Include the measure-derivative coupling.

    Returns:
        ``(J, N, n+1)`` array, zero before ``s_index``.
    """
    n = ensemble.grid.n_steps
    if not 0 <= s_index <= n:
        raise IndexError(f"s_index {s_index} outside 0..{n}")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    model = ensemble.model
    n_part = ensemble.n_particles
    dt = ensemble.grid.dt
    slope = _slopes(ensemble, theta)
    out = np.zeros(start.shape + (n + 1,))
    out[..., s_index] = start
    if not interacting:
        for t in range(s_index, n):
            out[..., t + 1] = out[..., t] * (1.0 + dt * slope[:, t])
        return out
    x = ensemble.states.T
    mu = ensemble.path_measure
    if model.mean_interaction:
        g = model.interaction_vector(theta, x, mu)  # (n+1, N)
        for t in range(s_index, n):
            d = out[..., t]
            coupling = g[t] * d.sum(axis=-1, keepdims=True) / n_part
            out[..., t + 1] = d + dt * (slope[:, t] * d + coupling)
    else:
        gmat = model.interaction_matrix(theta, x, mu)  # (n+1, N, N)
        for t in range(s_index, n):
            d = out[..., t]
            out[..., t + 1] = d + dt * (slope[:, t] * d + d @ gmat[t].T / n_part)
    return out


@dataclass
class DerivativePanel:
    """Malliavin derivatives ``D^j_s X^i_t`` for one ``s`` and a set of columns ``j``."""

    grid: TimeGrid
    s_index: int
    columns: dict = field(default_factory=dict)

    def entries(self, i: int, j: int) -> np.ndarray:
        """``D^j_s X^i_t`` over all t-nodes."""
        return self.columns[j][i]


class MalliavinSolver:
    """Caches derivative columns per ``(s_index, j)`` for one ensemble."""

    def __init__(self, ensemble: ParticleEnsemble, theta=None):
        self.ensemble = ensemble
        self.theta = ensemble.theta if theta is None else np.atleast_1d(np.asarray(theta, float))
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def columns(self, s_index: int, js: Iterable[int]) -> dict[int, np.ndarray]:
        js = sorted(set(int(j) for j in js))
        n = self.ensemble.n_particles
        for j in js:
            if not 0 <= j < n:
                raise IndexError(f"particle index {j} outside 0..{n - 1}")
        missing = [j for j in js if (s_index, j) not in self._cache]
        if missing:
            start = np.zeros((len(missing), n))
            start[np.arange(len(missing)), missing] = self.ensemble.sigma
            cols = _propagate(self.ensemble, self.theta, s_index, start)
            for r, j in enumerate(missing):
                self._cache[(s_index, j)] = cols[r]
        return {j: self._cache[(s_index, j)] for j in js}


def malliavin_interacting(ensemble: ParticleEnsemble, theta, s_index: int,
                          pairs: Sequence[tuple[int, int]],
                          solver: Optional[MalliavinSolver] = None) -> DerivativePanel:
    """Derivatives ``D^j_s X^i`` for the requested ``(i, j)`` pairs.

    Any requested pair forces integration of the whole column ``j`` because
    the dynamics couple all particles.
    """
    if not 0 <= s_index <= ensemble.grid.n_steps:
        raise IndexError(f"s_index {s_index} outside 0..{ensemble.grid.n_steps}")
    solver = solver or MalliavinSolver(ensemble, theta)
    n = ensemble.n_particles
    for i, _ in pairs:
        if not 0 <= i < n:
            raise IndexError(f"particle index {i} outside 0..{n - 1}")
    cols = solver.columns(s_index, [j for _, j in pairs])
    return DerivativePanel(ensemble.grid, s_index, cols)


def malliavin_independent(tracked: ParticleEnsemble, theta, s_index: int,
                          method: Literal["exponential", "euler"] = "exponential") -> np.ndarray:
    """``D^i_s Xbar^i_t`` for limit-proxy particles, shape ``(N, n+1)``.

    Without interaction the derivative is diagonal and equals
    ``sigma * exp(int_s^t <theta, d_x b(Xbar_r, mubar_r)> dr)``. ``euler``
    returns the product form from the same recursion used for the interacting
    system, so the two can be compared without a time-discretisation floor.
    """
    n_part = tracked.n_particles
    if method == "exponential":
        surr = exponential_surrogate(tracked, theta)
        out = np.zeros((n_part, tracked.grid.n_steps + 1))
        out[:, s_index:] = tracked.sigma * np.exp(
            surr.cumulative[:, s_index:] - surr.cumulative[:, s_index : s_index + 1]
        )
        return out
    if method == "euler":
        start = np.full((1, n_part), tracked.sigma)
        return _propagate(tracked, theta, s_index, start, interacting=False)[0]
    raise ConfigError(f"unknown method {method!r}")


@dataclass(frozen=True, eq=False)
class ExponentialSurrogate:
    """``Z^i_{s,t} = sigma * exp(A^i(t) - A^i(s))`` with left-point cumulative slopes."""

    sigma: float
    cumulative: np.ndarray

    def value(self, i: int, s_index: int, t_index: int) -> float:
        if s_index > t_index:
            raise ValueError("surrogate is defined for s <= t only")
        return float(self.sigma * np.exp(self.cumulative[i, t_index] - self.cumulative[i, s_index]))

    def matrix(self, i: int) -> np.ndarray:
        """``Z^i_{s_k, t_j}`` as a ``(t, s)`` array, zero where ``s > t``."""
        a = self.cumulative[i]
        return np.tril(self.sigma * np.exp(a[:, None] - a[None, :]))


def cumulative_slopes(ensemble: ParticleEnsemble) -> np.ndarray:
    """Unit-parameter left-point integrals ``sum_{k<j} dt * d_x b_m``; shape ``(p, N, n+1)``."""
    d = ensemble.dxb_values()
    out = np.zeros_like(d)
    np.cumsum(d[..., :-1] * ensemble.grid.dt, axis=-1, out=out[..., 1:])
    return out


def exponential_surrogate(ensemble: ParticleEnsemble, theta) -> ExponentialSurrogate:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cum = np.tensordot(theta, cumulative_slopes(ensemble), axes=1)
    return ExponentialSurrogate(ensemble.sigma, cum)


def initial_condition_derivative(ensemble: ParticleEnsemble, theta, shift_particle: int) -> np.ndarray:
    """``d X^i_t / d x_0^j`` for ``j = shift_particle``; shape ``(N, n+1)``."""
    n = ensemble.n_particles
    if not 0 <= shift_particle < n:
        raise IndexError(f"particle index {shift_particle} outside 0..{n - 1}")
    start = np.zeros((1, n))
    start[0, shift_particle] = 1.0
    return _propagate(ensemble, theta, 0, start)[0]


# ---------------------------------------------------------------------------
# propagation-of-chaos diagnostics
# ---------------------------------------------------------------------------

POC_QUANTITIES = ("particle_gap", "offdiag_malliavin", "diag_malliavin_gap", "surrogate_gap")


@dataclass(frozen=True)
class PocRow:
    quantity: str
    N: int
    estimate: float
    stderr: float
    slope: float
    slope_stderr: float


def _poc_sample(model, theta, sigma, h, grid, n_part, rep, seed, s_index, s_grid, n_ref, initial):
    key = (n_part, rep)
    noise = sample_fbm(h, grid, n_part, seed, key)
    ens = euler_simulate(model, theta, sigma, grid, initial, noise, seed, key)
    tracked, _ = simulate_limit_proxy(ens, n_ref, seed, key, initial)
    particle_gap = float(np.mean(np.max(np.abs(ens.states - tracked.states), axis=1)))

    solver = MalliavinSolver(ens, theta)
    diag_gap = 0.0
    offdiag = 0.0
    surrogate_gap = 0.0
    surr = exponential_surrogate(ens, theta)
    for s in sorted(set(s_grid) | {s_index}):
        cols = solver.columns(s, range(n_part))
        d = np.stack([cols[j] for j in range(n_part)])  # (j, i, t)
        diag = d[np.arange(n_part), np.arange(n_part)]
        if s == s_index:
            if n_part > 1:
                mask = ~np.eye(n_part, dtype=bool)
                offdiag = float(np.max(np.abs(d[0][mask[0]])))
            bar = malliavin_independent(tracked, theta, s, method="euler")
            diag_gap = float(np.mean(np.max(np.abs(diag - bar), axis=1)))
        if s in s_grid:
            z = sigma * np.exp(surr.cumulative[:, s:] - surr.cumulative[:, s : s + 1])
            surrogate_gap = max(surrogate_gap, float(np.max(np.abs(diag[:, s:] - z))))
    return particle_gap, offdiag, diag_gap, surrogate_gap


def _fit_slope(ns, est):
    ns = np.asarray(ns, float)
    est = np.asarray(est, float)
    if np.any(est <= 0) or len(ns) < 2:
        return float("nan"), float("nan")
    fit = stats.linregress(np.log(ns), np.log(est))
    err = fit.stderr if len(ns) > 2 else float("nan")
    return float(fit.slope), float(err)


def poc_rate_report(model: DriftModel, theta, sigma: float, h: float, grid: TimeGrid,
                    N_list: Sequence[int], reps: int, seed: int, s_index: int = 0,
                    s_grid: Optional[Sequence[int]] = None, n_ref: Optional[int] = None,
                    initial="normal") -> list[PocRow]:
    """Monte Carlo propagation-of-chaos rates against the number of particles.

    Quantities, each averaged over ``reps`` replications:

    * ``particle_gap``: mean over i of ``sup_t |X^{i,N}_t - Xbar^i_t|``;
    * ``offdiag_malliavin``: ``max_{i != 0} sup_t |D^0_s X^{i,N}_t|``;
    * ``diag_malliavin_gap``: mean over i of ``sup_t |D^i_s X^{i,N}_t - D^i_s Xbar^i_t|``;
    * ``surrogate_gap``: ``max_{i, s, t} |D^i_s X^{i,N}_t - Z^i_{s,t}|`` over ``s_grid``.

    The slope columns hold the least-squares fit of log(estimate) on log(N).
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 3:
        raise ConfigError("poc_rate_report needs at least three particle counts")
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    if s_grid is None:
        s_grid = sorted({int(k * grid.n_steps / 4) for k in range(3)})
    samples = {}
    for n_part in N_list:
        samples[n_part] = np.array([
            _poc_sample(model, theta, sigma, h, grid, n_part, r, seed, s_index, s_grid, n_ref, initial)
            for r in range(reps)
        ])
    rows = []
    for q, name in enumerate(POC_QUANTITIES):
        est = [samples[n][:, q].mean() for n in N_list]
        err = [samples[n][:, q].std(ddof=1) / np.sqrt(reps) if reps > 1 else float("nan") for n in N_list]
        slope, slope_err = _fit_slope(N_list, est)
        rows.extend(PocRow(name, n, float(e), float(se), slope, slope_err)
                    for n, e, se in zip(N_list, est, err))
    return rows


def write_poc_csv(rows: Sequence[PocRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "N", "estimate", "stderr", "slope", "slope_stderr"])
        for r in rows:
            w.writerow([r.quantity, r.N, repr(r.estimate), repr(r.stderr), repr(r.slope), repr(r.slope_stderr)])
