"""Computable drift estimators and their building blocks.

All estimators share the least-squares structure

    theta_hat = Psi_N^{-1} [ sum_i int b(X^i) o dX^i  -  correction ],

where the correction replaces the unobservable Malliavin derivative in the
Skorohod-to-pathwise conversion,

    correction_m = sigma * sum_i  iint_{s<t} d_x b_m(X^i_t) K^i(t, s) phi(t, s) ds dt,

by a computable kernel ``K``: a ratio of initial-condition difference
quotients (ratio estimator) or ``exp(theta (A^i_t - A^i_s))`` with the
cumulative drift slope ``A`` (fixed-point and iterative estimators).
For ``H = 1/2`` the correction vanishes and the pathwise sums are forward
(Ito) sums.

Integrands on ``{s < t}`` are evaluated by their formula at every corner of
the grid cells and weighted by the exact phi-masses, which already restrict
each diagonal cell to its lower half.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .errors import ConfigError, DivergenceError, NumericalError, SingularMatrixError
from .fbm import TimeGrid, sample_fbm, validate_hurst
from .kernels import KernelWeights, build_kernel_weights, double_integral, separable_double_integral
from .malliavin import cumulative_slopes
from .models import DriftModel
from .simulation import ParticleEnsemble, ShiftedFamily, euler_simulate, simulate_limit_proxy

Scheme = Literal["forward", "trapezoid"]

COND_LIMIT = 1e12
# above this |theta * A| the separable exp(theta A_t) exp(-theta A_s) split may overflow
_EXP_SPLIT_LIMIT = 600.0


@dataclass
class EstimationResult:
    """Outcome of one estimator run.

    Attributes:
        estimator: ``ratio``, ``fixed_point``, ``iterative`` or ``contrast``.
        theta_hat: Estimated parameter vector.
        iterations: Map applications (fixed-point and iterative only).
        converged: False when an iteration stopped at its cap.
        contraction_C_T: Contraction constant of the fixed-point map, if known.
        diagnostics: Named scalar diagnostics.
        trajectory: Iterates of the fixed-point map, starting at the initial value.
    """

    estimator: str
    theta_hat: np.ndarray
    iterations: int = 0
    converged: bool = True
    contraction_C_T: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)
    trajectory: list = field(default_factory=list)

    def to_dict(self) -> dict:
        diag = {k: _jsonable(v) for k, v in self.diagnostics.items()}
        if self.contraction_C_T is not None:
            diag.setdefault("contraction_C_T", float(self.contraction_C_T))
        return {
            "estimator": self.estimator,
            "theta_hat": [float(v) for v in np.atleast_1d(self.theta_hat)],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "diagnostics": diag,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------


def _hurst(ensemble: ParticleEnsemble, hurst: Optional[float]) -> float:
    h = ensemble.hurst if hurst is None else hurst
    if h is None:
        raise ConfigError("the Hurst index must be given for data without a noise record")
    return validate_hurst(h)


def _time_weights(grid: TimeGrid, scheme: Scheme) -> np.ndarray:
    w = np.full(grid.n_steps + 1, grid.dt)
    if scheme == "forward":
        w[-1] = 0.0
    elif scheme == "trapezoid":
        w[0] = w[-1] = 0.5 * grid.dt
    else:
        raise ConfigError(f"unknown sum scheme {scheme!r}; use 'forward' or 'trapezoid'")
    return w


def compute_psi(ensemble: ParticleEnsemble, scheme: Scheme = "forward") -> np.ndarray:
    """``Psi_N[l, m] = sum_i int_0^T b_l(X^i_t) b_m(X^i_t) dt`` as a p x p matrix.

    ``forward`` uses left-point Riemann sums, which pair exactly with the
    explicit Euler scheme; ``trapezoid`` averages the two endpoints.
    """
    b = ensemble.b_values()
    w = _time_weights(ensemble.grid, scheme)
    psi = np.einsum("lit,mit,t->lm", b, b, w)
    return 0.5 * (psi + psi.T)


def stratonovich_vector(ensemble: ParticleEnsemble, scheme: Scheme = "forward",
                        hurst: Optional[float] = None) -> np.ndarray:
    """``sum_i int_0^T b_m(X^i_t) o dX^i_t`` by Riemann-Stieltjes sums.

    ``trapezoid`` weights each increment by the endpoint average of ``b``;
    ``forward`` by its left value. For ``H = 1/2`` the forward (Ito) sum is
    always used.
    """
    h = _hurst(ensemble, hurst)
    b = ensemble.b_values()
    dx = np.diff(ensemble.states, axis=-1)
    if h == 0.5 or scheme == "forward":
        left = b[..., :-1]
    elif scheme == "trapezoid":
        left = 0.5 * (b[..., :-1] + b[..., 1:])
    else:
        raise ConfigError(f"unknown sum scheme {scheme!r}; use 'forward' or 'trapezoid'")
    return np.einsum("mit,it->m", left, dx)


def condition_number(psi: np.ndarray) -> float:
    psi = np.atleast_2d(psi)
    eig = np.linalg.eigvalsh(psi)
    if not np.all(np.isfinite(eig)) or eig[-1] <= 0:
        return math.inf
    if eig[0] <= 0:
        return math.inf
    return float(eig[-1] / eig[0])


def solve_psi(psi: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Symmetric solve ``Psi^{-1} rhs`` with a conditioning guard."""
    cond = condition_number(psi)
    if cond > COND_LIMIT:
        raise SingularMatrixError(
            f"Psi_N is singular or ill-conditioned (condition number {cond:.3g}); "
            "check that the drift components are identifiable"
        )
    return np.linalg.solve(np.atleast_2d(psi), np.asarray(rhs, dtype=float))


def correction_region(scheme: Scheme) -> str:
    """Mass region matching a Riemann sum rule.

    A left-point sum ``sum_j b(X_j) dB_j`` correlates only with noise in
    strictly earlier cells, so its correction omits the diagonal cells. The
    endpoint-average rule also sees the current cell and takes its lower half.
    """
    if scheme == "forward":
        return "strict_lower"
    if scheme == "trapezoid":
        return "lower_triangle"
    raise ConfigError(f"unknown sum scheme {scheme!r}; use 'forward' or 'trapezoid'")


def _correction(a: np.ndarray, c: np.ndarray, weights: KernelWeights, region: str) -> np.ndarray:
    """``sum_i iint_{s<t} a_i(t) c_i(s) phi`` for node arrays ``(..., N, n+1)``."""
    return separable_double_integral(a, c, weights, region).sum(axis=-1)


def least_squares_theta(ensemble: ParticleEnsemble) -> np.ndarray:
    """Minimiser of the discrete contrast over all of ``R^p``.

    The contrast is quadratic in theta, so this is the forward-sum least
    squares estimate ``(sum b b^T dt)^{-1} sum b dX`` with no correction.
    """
    b = ensemble.b_values()[..., :-1]
    dx = np.diff(ensemble.states, axis=-1)
    gram = np.einsum("lit,mit->lm", b, b) * ensemble.grid.dt
    return solve_psi(gram, np.einsum("mit,it->m", b, dx))


# ---------------------------------------------------------------------------
# ratio estimator
# ---------------------------------------------------------------------------


def ratio_correction(family: ShiftedFamily, weights: KernelWeights, sigma_power: int = 2,
                     scheme: Scheme = "forward") -> np.ndarray:
    base = family.base
    q = family.difference_quotients()
    a = base.dxb_values() * q  # (p, N, n+1)
    c = 1.0 / np.maximum(q, 1.0)
    region = correction_region(scheme)
    corr = base.sigma**sigma_power * _correction(a, c, weights, region)
    if not np.all(np.isfinite(corr)):
        per = separable_double_integral(a, c, weights, region)
        bad = int(np.argmax(~np.isfinite(per).all(axis=0)))
        raise NumericalError(f"non-finite ratio correction for particle {bad}")
    return corr


def ratio_estimator(family: ShiftedFamily, scheme: Scheme = "forward", sigma_power: int = 2,
                    hurst: Optional[float] = None) -> EstimationResult:
    """Estimator built on initial-condition difference quotients.

    The kernel is ``q_i(t) / max(q_i(s), 1)`` with
    ``q_i = (X^{i, x_0^i + eps} - X^i) / eps`` taken from the system in which
    only particle ``i`` was shifted.

    Args:
        family: Base ensemble and its shifted systems.
        scheme: Riemann sum rule for ``Psi_N`` and the pathwise integral.
        sigma_power: Power of sigma multiplying the correction.
        hurst: Override for data without a noise record.
    """
    base = family.base
    h = _hurst(base, hurst)
    psi = compute_psi(base, scheme)
    strat = stratonovich_vector(base, scheme, h)
    if h == 0.5:
        corr = np.zeros_like(strat)
    else:
        corr = ratio_correction(family, build_kernel_weights(h, base.grid), sigma_power, scheme)
    theta = solve_psi(psi, strat - corr)
    return EstimationResult(
        "ratio", theta,
        diagnostics={"psi_condition": condition_number(psi), "epsilon": family.epsilon,
                     "correction_norm": float(np.linalg.norm(corr))},
    )


# ---------------------------------------------------------------------------
# fixed-point map
# ---------------------------------------------------------------------------


class FixedPointMap:
    """``F_N(theta)`` with everything independent of theta precomputed.

    Only ``p = 1`` is supported.
    """

    def __init__(self, ensemble: ParticleEnsemble, scheme: Scheme = "forward",
                 sigma_power: int = 2, hurst: Optional[float] = None):
        if ensemble.model.p != 1:
            raise ConfigError(
                f"the fixed-point estimator is defined for p = 1 only; model "
                f"{ensemble.model.name!r} has p = {ensemble.model.p}"
            )
        self.ensemble = ensemble
        self.hurst = _hurst(ensemble, hurst)
        self.psi = compute_psi(ensemble, scheme)
        self.strat = stratonovich_vector(ensemble, scheme, self.hurst)
        solve_psi(self.psi, self.strat)  # conditioning check up front
        self.scale = ensemble.sigma**sigma_power
        self.dxb = ensemble.dxb_values()[0]
        self.cumulative = cumulative_slopes(ensemble)[0]
        self.weights = None if self.hurst == 0.5 else build_kernel_weights(self.hurst, ensemble.grid)
        self.region = correction_region(scheme)

    def correction(self, theta: float) -> float:
        if self.weights is None:
            return 0.0
        ta = float(theta) * self.cumulative
        if np.max(np.abs(ta)) < _EXP_SPLIT_LIMIT:
            return float(self.scale * _correction(self.dxb * np.exp(ta), np.exp(-ta), self.weights, self.region))
        return float(self.scale * sum(self._dense_particle(theta, i) for i in range(len(ta))))

    def _dense_particle(self, theta: float, i: int) -> float:
        a = self.cumulative[i]
        expo = np.minimum(float(theta) * (a[:, None] - a[None, :]), 700.0)
        return double_integral(self.dxb[i][:, None] * np.exp(expo), self.weights, self.region)

    def __call__(self, theta) -> float:
        theta = float(np.atleast_1d(theta)[0])
        return float(solve_psi(self.psi, self.strat - self.correction(theta))[0])


def fixed_point_map(ensemble: ParticleEnsemble, theta, scheme: Scheme = "forward",
                    sigma_power: int = 2, hurst: Optional[float] = None) -> float:
    """One evaluation of ``F_N(theta)``."""
    return FixedPointMap(ensemble, scheme, sigma_power, hurst)(theta)


@dataclass(frozen=True)
class ContractionReport:
    C_T: Optional[float]
    T_max: Optional[float]
    ok: Optional[bool]


def check_contraction(model: DriftModel, h: float, sigma: float, T: float) -> ContractionReport:
    """Contraction constant ``C_T`` of ``F_N`` and the largest admissible horizon.

    ``C_T = (|d_x b|_inf^2 / l^2) (2H-1)/(2H+1) T^{2H} sigma`` and ``T_max``
    solves ``C_T = 1``. Missing model bounds give a warning and ``ok=None``.
    """
    h = validate_hurst(h)
    if h < 0.5:
        raise ConfigError(f"the fixed-point map needs H >= 1/2, got {h}")
    sup, low = model.dxb_sup, model.drift_lower
    if sup is None or low is None or low <= 0:
        warnings.warn(f"model {model.name!r} lacks |d_x b| or |b| bounds; contraction not checked")
        return ContractionReport(None, None, None)
    if h == 0.5:
        return ContractionReport(0.0, math.inf, True)
    ratio = (2 * h - 1) / (2 * h + 1)
    c_t = sup**2 / low**2 * ratio * T ** (2 * h) * sigma
    t_max = (low**2 / (sigma * sup**2) / ratio) ** (1 / (2 * h)) if sup > 0 else math.inf
    return ContractionReport(float(c_t), float(t_max), bool(c_t < 1))


def _initial_theta(ensemble: ParticleEnsemble, theta_init) -> float:
    if theta_init is None or (isinstance(theta_init, str) and theta_init == "least_squares"):
        return float(least_squares_theta(ensemble)[0])
    return float(np.atleast_1d(theta_init)[0])


def fixed_point_estimator(ensemble: ParticleEnsemble, tol: float = 1e-8, max_iter: int = 50,
                          theta_init=None, scheme: Scheme = "forward", sigma_power: int = 2,
                          hurst: Optional[float] = None,
                          fmap: Optional[FixedPointMap] = None) -> EstimationResult:
    """Solve ``theta = F_N(theta)`` by Picard iteration.

    Iteration stops once an application of the map moves theta by less than
    ``tol``; ``iterations`` counts every application performed, including
    that last one. Five consecutive increases of the step size raise
    :class:`DivergenceError`.
    """
    fmap = fmap or FixedPointMap(ensemble, scheme, sigma_power, hurst)
    report = check_contraction(ensemble.model, fmap.hurst, ensemble.sigma, ensemble.grid.horizon)
    if report.ok is False:
        warnings.warn(f"C_T = {report.C_T:.3g} >= 1 on [0, {ensemble.grid.horizon}]; "
                      "the fixed-point map may not contract")
    theta = _initial_theta(ensemble, theta_init)
    traj = [theta]
    last_step = math.inf
    growth = 0
    converged = False
    for _ in range(max_iter):
        new = fmap(theta)
        traj.append(new)
        if not math.isfinite(new):
            raise DivergenceError("fixed-point iteration produced a non-finite value", traj)
        step = abs(new - theta)
        theta = new
        if step < tol:
            converged = True
            break
        growth = growth + 1 if step > last_step else 0
        if growth >= 5:
            raise DivergenceError("fixed-point residual grew for 5 consecutive iterations", traj)
        last_step = step
    return EstimationResult(
        "fixed_point", np.array([theta]), len(traj) - 1, converged, report.C_T,
        diagnostics={"residual": abs(traj[-1] - traj[-2]), "theta_init": traj[0],
                     "psi_condition": condition_number(fmap.psi)},
        trajectory=traj,
    )


def log_iterations(n_particles: int) -> int:
    """``floor(ln N)``, at least one."""
    return max(1, int(math.floor(math.log(n_particles))))


def iterative_estimator(ensemble: ParticleEnsemble, n_iters=None, theta_init=None,
                        scheme: Scheme = "forward", sigma_power: int = 2,
                        hurst: Optional[float] = None,
                        fmap: Optional[FixedPointMap] = None) -> EstimationResult:
    """Exactly ``n_iters`` applications of ``F_N``; ``None`` or ``"log"`` means ``floor(ln N)``."""
    if n_iters is None or n_iters == "log":
        n_iters = log_iterations(ensemble.n_particles)
    n_iters = int(n_iters)
    if n_iters < 1:
        raise ConfigError(f"n_iters must be at least 1, got {n_iters}")
    fmap = fmap or FixedPointMap(ensemble, scheme, sigma_power, hurst)
    theta = _initial_theta(ensemble, theta_init)
    traj = [theta]
    for _ in range(n_iters):
        theta = fmap(theta)
        traj.append(theta)
        if not math.isfinite(theta):
            raise DivergenceError("iterative estimator produced a non-finite value", traj)
    report = check_contraction(ensemble.model, fmap.hurst, ensemble.sigma, ensemble.grid.horizon)
    return EstimationResult(
        "iterative", np.array([theta]), n_iters, True, report.C_T,
        diagnostics={"last_step": abs(traj[-1] - traj[-2]), "theta_init": traj[0]},
        trajectory=traj,
    )


# ---------------------------------------------------------------------------
# discrete contrast
# ---------------------------------------------------------------------------


def contrast_value(observations: ParticleEnsemble, theta, hurst: Optional[float] = None) -> float:
    """``Q = sum_j sum_i [(X^i_{j+1} - X^i_j - dt <theta, b(X^i_j)>)^2 - dt^{2H}]``."""
    h = _hurst(observations, hurst)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    dt = observations.grid.dt
    b = observations.b_values()[..., :-1]
    resid = np.diff(observations.states, axis=-1) - dt * np.tensordot(theta, b, axes=1)
    return float(np.sum(resid**2 - dt ** (2 * h)))


@dataclass(frozen=True)
class ContrastGrid:
    """Cartesian grid ``lo_m + k mesh_m`` up to ``hi_m`` in each coordinate."""

    lo: tuple
    hi: tuple
    mesh: tuple

    def __post_init__(self):
        if not len(self.lo) == len(self.hi) == len(self.mesh):
            raise ConfigError("contrast grid bounds and meshes must have the same length")
        for lo, hi, mesh in zip(self.lo, self.hi, self.mesh):
            if not mesh > 0:
                raise ConfigError(f"contrast mesh must be positive, got {mesh}")
            if not lo <= hi:
                raise ConfigError(f"contrast grid needs lo <= hi, got [{lo}, {hi}]")

    @classmethod
    def uniform(cls, p: int, lo: float, hi: float, mesh: float) -> "ContrastGrid":
        return cls((lo,) * p, (hi,) * p, (mesh,) * p)

    @property
    def p(self) -> int:
        return len(self.lo)

    def axes(self) -> list[np.ndarray]:
        """Grid points per coordinate, rounded so that decimal values land exactly."""
        out = []
        for lo, hi, mesh in zip(self.lo, self.hi, self.mesh):
            k = int(math.floor((hi - lo) / mesh + 1e-9))
            out.append(np.round(lo + mesh * np.arange(k + 1), 12))
        return out


def contrast_estimator(observations: ParticleEnsemble, grid: ContrastGrid,
                       hurst: Optional[float] = None) -> EstimationResult:
    """Exhaustive grid argmin of the contrast; ties go to the smallest theta in lexicographic order.

    The contrast is evaluated through its sufficient statistics, so the whole
    grid costs one pass over the data plus ``O(p^2)`` per grid point.
    """
    h = _hurst(observations, hurst)
    p = observations.model.p
    if grid.p != p:
        raise ConfigError(f"contrast grid has {grid.p} coordinates, model needs {p}")
    dt = observations.grid.dt
    b = observations.b_values()[..., :-1]
    dx = np.diff(observations.states, axis=-1)
    n_terms = dx.size
    gram = np.einsum("lit,mit->lm", b, b)
    cross = np.einsum("mit,it->m", b, dx)
    base = float(np.sum(dx**2)) - n_terms * dt ** (2 * h)
    axes = grid.axes()
    pts = np.meshgrid(*axes, indexing="ij")
    th = np.stack([g.ravel() for g in pts], axis=-1)  # C order = lexicographic
    q = base - 2 * dt * th @ cross + dt**2 * np.einsum("kl,lm,km->k", th, gram, th)
    k = int(np.argmin(q))  # first occurrence of the minimum
    try:
        ls = least_squares_theta(observations)
    except SingularMatrixError:
        ls = np.full(p, np.nan)
    return EstimationResult(
        "contrast", th[k].copy(),
        diagnostics={"contrast_min": float(q[k]), "grid_points": int(th.shape[0]),
                     "least_squares_theta": ls},
    )


# ---------------------------------------------------------------------------
# asymptotic variance
# ---------------------------------------------------------------------------


def _lower_kernel_cells(k: np.ndarray) -> np.ndarray:
    """Cell averages of a lower-triangular node kernel ``k[..., s, v]`` (zero for v > s).

    Off-diagonal cells average the four corners. On a diagonal cell the
    kernel lives on the lower half only; its mean over the cell is half the
    mean of the three corners that carry it.
    """
    corner = 0.25 * (k[..., :-1, :-1] + k[..., 1:, :-1] + k[..., :-1, 1:] + k[..., 1:, 1:])
    n = corner.shape[-1]
    idx = np.arange(n)
    diag = (k[..., idx, idx] + k[..., idx + 1, idx] + k[..., idx + 1, idx + 1]) / 6.0
    corner[..., idx, idx] = diag
    return corner


def _mean_se(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    se = x.std(axis=0, ddof=1) / np.sqrt(x.shape[0]) if x.shape[0] > 1 else np.full(x.shape[1:], np.nan)
    return x.mean(axis=0), se


def asymptotic_variance_mc(model: DriftModel, theta0, sigma: float, h: float, grid: TimeGrid,
                           n_mc: int, seed: int, n_ref: Optional[int] = None,
                           initial="normal") -> dict:
    """Monte Carlo estimates of the asymptotic variance constants.

    ``n_mc`` limit-proxy particles are simulated; each contributes one iid
    sample of every integrand. With ``K(s, v) = d_x b(Xbar_s) sigma
    exp(theta0 (A_s - A_v))`` for ``v <= s`` and ``M`` the cell phi-masses:

    * ``Psi = E int b b^T dt``;
    * ``Sigma2 = sigma^2 (E[bbar^T M bbar] + E[tr(M K_l M K_m)])``;
    * ``SigmaTilde2 = Psi^{-1} Sigma2 Psi^{-1}``;
    * ``V_tilde = sigma E iint_{s<t} d_x b(t) (A_t - A_s) exp(theta0 (A_t - A_s)) phi``;
    * ``SigmaBar2 = Sigma2 / (Psi - V_tilde)^2`` (p = 1 only).

    Returns:
        Dict with the five quantities and ``*_se`` standard errors (delta
        method for the ratios). Matrices for ``p > 1``; scalars otherwise.
    """
    h = validate_hurst(h)
    if h <= 0.5:
        raise ConfigError("asymptotic variance constants need H > 1/2")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    p = model.p
    noise = sample_fbm(h, grid, n_mc, seed, (0,))
    ens = euler_simulate(model, theta0, sigma, grid, initial, noise, seed, (0,))
    tracked, _ = simulate_limit_proxy(ens, n_ref, seed, (0,), initial)
    weights = build_kernel_weights(h, grid)
    mass = weights.cell_mass
    b = tracked.b_values()  # (p, N, n+1)
    dxb = tracked.dxb_values()
    w = _time_weights(grid, "forward")
    psi_i = np.einsum("lit,mit,t->ilm", b, b, w)
    bc = 0.5 * (b[..., 1:] + b[..., :-1])
    first = np.einsum("lia,ab,mib->ilm", bc, mass, bc)
    cum = np.tensordot(theta0, cumulative_slopes(tracked), axes=1)  # (N, n+1)
    second = np.empty_like(first)
    v_i = np.zeros(n_mc)
    for i in range(n_mc):
        a = cum[i]
        gap = a[:, None] - a[None, :]
        e = np.tril(np.exp(np.minimum(gap, _EXP_SPLIT_LIMIT)))
        km = [_lower_kernel_cells(sigma * dxb[m, i][:, None] * e) @ mass for m in range(p)]
        for l in range(p):
            for m in range(p):
                second[i, l, m] = np.sum(km[l] * km[m].T)
        if p == 1:
            f = dxb[0, i][:, None] * gap * np.exp(np.minimum(gap, _EXP_SPLIT_LIMIT))
            corner = 0.25 * (f[:-1, :-1] + f[1:, :-1] + f[:-1, 1:] + f[1:, 1:])
            v_i[i] = sigma * np.sum(corner * weights.triangular_mass)
    sig_i = sigma**2 * (first + second)
    psi, psi_se = _mean_se(psi_i)
    sig2, sig2_se = _mean_se(sig_i)
    if np.any(np.linalg.eigvalsh(psi) <= 0):
        raise NumericalError("estimated Psi is not positive definite")
    pinv = np.linalg.inv(psi)
    tilde = pinv @ sig2 @ pinv
    out = {"Psi": psi, "Psi_se": psi_se, "Sigma2": sig2, "Sigma2_se": sig2_se,
           "SigmaTilde2": tilde, "n_mc": n_mc}
    if p == 1:
        ps, s2 = float(psi[0, 0]), float(sig2[0, 0])
        out = {k: (float(v[0, 0]) if isinstance(v, np.ndarray) else v) for k, v in out.items()}
        out["SigmaTilde2_se"] = float(abs(s2 / ps**2) * math.hypot(sig2_se[0, 0] / s2, 2 * psi_se[0, 0] / ps))
        vt, vt_se = _mean_se(v_i)
        denom_i = psi_i[:, 0, 0] - v_i
        denom, denom_se = _mean_se(denom_i)
        out["V_tilde"] = float(vt)
        out["V_tilde_se"] = float(vt_se)
        out["SigmaBar2"] = s2 / float(denom) ** 2
        out["SigmaBar2_se"] = float(abs(out["SigmaBar2"]) * math.hypot(sig2_se[0, 0] / s2, 2 * denom_se / denom))
    else:
        out["V_tilde"] = None
        out["SigmaBar2"] = None
    return out
