"""Euler simulation of the particle system, shifted couplings and a limit proxy."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal, Optional, Sequence, Union

import numpy as np

from . import rng as _rng
from .errors import ConfigError, SimulationError
from .fbm import FbmEnsemble, TimeGrid, sample_fbm
from .models import DriftModel, MeasureSummary

InitialSpec = Union[str, float, Sequence[float], np.ndarray, Callable[[int], np.ndarray]]


def initial_states(spec: InitialSpec, n: int, seed: int = 0, key: tuple[int, ...] = (),
                   tag: int = _rng.INITIAL) -> np.ndarray:
    """Initial positions for ``n`` particles.

    ``spec`` is ``"normal"`` (iid standard normal, one stream per particle),
    a number (all particles start there), an explicit sequence of length ``n``,
    or a callable ``f(n) -> array``.
    """
    if isinstance(spec, str):
        if spec == "normal":
            return np.array([_rng.stream(seed, tag, *key, i).standard_normal() for i in range(n)])
        try:
            return np.full(n, float(spec))
        except ValueError:
            raise ConfigError(f"unknown initial law {spec!r}") from None
    if callable(spec):
        out = np.asarray(spec(n), dtype=float)
    elif np.ndim(spec) == 0:
        out = np.full(n, float(spec))
    else:
        out = np.asarray(spec, dtype=float)
    if out.shape != (n,):
        raise ConfigError(f"initial condition must provide {n} values, got shape {out.shape}")
    return out


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Simulated paths ``states[i, j] = X^{i,N}_{t_j}``.

    ``measure_states`` holds the particles whose empirical measure enters the
    drift. It is ``None`` for a genuinely interacting system, where the measure
    is built from ``states`` itself, and a reference ensemble for the limit
    proxy.
    """

    model: DriftModel
    theta: np.ndarray
    sigma: float
    grid: TimeGrid
    states: np.ndarray
    noise: Optional[FbmEnsemble]
    measure_states: Optional[np.ndarray] = None

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    @property
    def hurst(self) -> Optional[float]:
        """Hurst index of the driving noise; ``None`` for observed data without noise."""
        return None if self.noise is None else self.noise.hurst

    @property
    def _measure_source(self) -> np.ndarray:
        return self.states if self.measure_states is None else self.measure_states

    def measure(self, j: int) -> MeasureSummary:
        return MeasureSummary(self._measure_source[:, j])

    @cached_property
    def path_measure(self) -> MeasureSummary:
        """Per-node measures with the node on axis 0 (positions transposed)."""
        return MeasureSummary(self._measure_source.T)

    @cached_property
    def means(self) -> np.ndarray:
        return self.path_measure.mean[:, 0]

    def b_values(self) -> np.ndarray:
        """``b_m(X^i_{t_j}, mu_{t_j})`` with shape ``(p, N, n+1)``."""
        return np.swapaxes(self.model.b(self.states.T, self.path_measure), 1, 2)

    def dxb_values(self) -> np.ndarray:
        return np.swapaxes(self.model.dxb(self.states.T, self.path_measure), 1, 2)

    def truncate(self, n_steps: int) -> "ParticleEnsemble":
        """Restrict to the first ``n_steps`` cells of the grid."""
        ms = None if self.measure_states is None else self.measure_states[:, : n_steps + 1]
        return ParticleEnsemble(self.model, self.theta, self.sigma, self.grid.truncate(n_steps),
                                self.states[:, : n_steps + 1],
                                None if self.noise is None else self.noise.truncate(n_steps), ms)

    def to_csv(self, path) -> None:
        times = self.grid.times
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["particle", "node", "time", "state"])
            for i, row in enumerate(self.states):
                for j, (t, x) in enumerate(zip(times, row)):
                    w.writerow([i, j, repr(float(t)), repr(float(x))])


def read_ensemble_csv(path) -> tuple[TimeGrid, np.ndarray]:
    """Load ``particle,node,time,state`` rows back into a grid and a state array."""
    rows = []
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != ["particle", "node", "time", "state"]:
            raise ConfigError(f"{path}: expected header particle,node,time,state, got {r.fieldnames}")
        for row in r:
            rows.append((int(row["particle"]), int(row["node"]), float(row["time"]), float(row["state"])))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    n_part = max(r[0] for r in rows) + 1
    n_node = max(r[1] for r in rows) + 1
    states = np.full((n_part, n_node), np.nan)
    times = np.full(n_node, np.nan)
    for i, j, t, x in rows:
        states[i, j] = x
        times[j] = t
    if np.isnan(states).any():
        raise ConfigError(f"{path}: missing (particle, node) entries")
    grid = TimeGrid(times[-1], n_node - 1)
    if not np.allclose(times, grid.times, rtol=1e-9, atol=1e-12):
        raise ConfigError(f"{path}: time column is not a uniform grid starting at 0")
    return grid, states


def _check_inputs(model: DriftModel, theta, sigma: float, grid: TimeGrid, noise: FbmEnsemble):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (model.p,):
        raise ConfigError(f"theta must have length {model.p} for model {model.name!r}, got {theta.shape}")
    if not sigma > 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if noise.grid != grid:
        raise ConfigError("noise grid does not match the simulation grid")
    if grid.n_steps < 2:
        raise ConfigError("simulation needs at least 2 time steps")
    return theta


def _euler(model: DriftModel, theta: np.ndarray, sigma: float, dt: float, x0: np.ndarray,
           increments: np.ndarray, measure_states: Optional[np.ndarray] = None) -> np.ndarray:
    """Explicit Euler loop; ``x0`` may carry leading batch axes."""
    n = increments.shape[1]
    states = np.empty(x0.shape + (n + 1,))
    states[..., 0] = x0
    noise = sigma * increments
    path_mu = None if measure_states is None else MeasureSummary(measure_states.T)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n):
            x = states[..., j]
            if path_mu is None:
                mu = MeasureSummary(x)
            else:
                mu = MeasureSummary(measure_states[:, j], path_mu.mean[j], path_mu.second_moment[j])
            states[..., j + 1] = x + dt * model.drift(theta, x, mu) + noise[:, j]
    if not np.isfinite(states).all():
        flat = states.reshape(-1, n + 1)
        bad = ~np.isfinite(flat)
        node = int(np.argmax(bad.any(axis=0)))
        row = int(np.argmax(bad[:, node]))
        raise SimulationError(row % x0.shape[-1], node, float(flat[row, node]))
    return states


def euler_simulate(model: DriftModel, theta, sigma: float, grid: TimeGrid,
                   initial: InitialSpec, noise: FbmEnsemble, seed: int = 0,
                   key: tuple[int, ...] = ()) -> ParticleEnsemble:
    """Simulate ``dX^i = <theta, b(X^i, mu^N)> dt + sigma dB^i`` by explicit Euler.

    ``initial`` follows :func:`initial_states`; random laws draw from
    ``(seed, INITIAL, *key, i)``.
    """
    theta = _check_inputs(model, theta, sigma, grid, noise)
    x0 = initial_states(initial, noise.n_paths, seed, key)
    states = _euler(model, theta, float(sigma), grid.dt, x0, noise.increments)
    states.setflags(write=False)
    return ParticleEnsemble(model, theta, float(sigma), grid, states, noise)


@dataclass(frozen=True, eq=False)
class ShiftedFamily:
    """Systems in which particle ``k`` starts ``epsilon`` higher, on the base noise.

    In ``exact`` mode ``systems[k]`` is the full re-simulated system. In
    ``frozen`` mode only particle ``k`` is re-evolved against the base
    measures and the other rows are copied from the base.
    """

    base: ParticleEnsemble
    epsilon: float
    mode: str
    systems: Optional[np.ndarray]
    diagonal: np.ndarray

    def shifted(self, k: int) -> ParticleEnsemble:
        b = self.base
        if self.systems is not None:
            states = self.systems[k]
        else:
            states = b.states.copy()
            states[k] = self.diagonal[k]
            states.setflags(write=False)
        return ParticleEnsemble(b.model, b.theta, b.sigma, b.grid, states, b.noise, b.measure_states)

    def difference_quotients(self) -> np.ndarray:
        """``(X^{k,+eps}_t - X^k_t) / eps`` for each particle ``k`` in its own shifted system."""
        return (self.diagonal - self.base.states) / self.epsilon

    def truncate(self, n_steps: int) -> "ShiftedFamily":
        systems = None if self.systems is None else self.systems[..., : n_steps + 1]
        return ShiftedFamily(self.base.truncate(n_steps), self.epsilon, self.mode, systems,
                             self.diagonal[:, : n_steps + 1])

    def to_csv(self, stem) -> list[str]:
        """Write the base and one ``<stem>_shift<k>.csv`` per shifted system."""
        paths = [f"{stem}.csv"]
        self.base.to_csv(paths[0])
        for k in range(self.base.n_particles):
            p = f"{stem}_shift{k}.csv"
            self.shifted(k).to_csv(p)
            paths.append(p)
        return paths


def simulate_shifted_family(base: ParticleEnsemble, epsilon: float,
                            mode: Literal["exact", "frozen"] = "exact") -> ShiftedFamily:
    if not epsilon >= 0:
        raise ConfigError(f"epsilon must be non-negative, got {epsilon}")
    n = base.n_particles
    x0 = base.states[:, 0]
    if mode == "exact":
        start = np.broadcast_to(x0, (n, n)).copy()
        start[np.arange(n), np.arange(n)] += epsilon
        systems = _euler(base.model, base.theta, base.sigma, base.grid.dt, start,
                         base.noise.increments, base.measure_states)
        systems.setflags(write=False)
        diagonal = systems[np.arange(n), np.arange(n)]
    elif mode == "frozen":
        systems = None
        diagonal = _euler(base.model, base.theta, base.sigma, base.grid.dt, x0 + epsilon,
                          base.noise.increments, base._measure_source)
    else:
        raise ConfigError(f"unknown shifted-family mode {mode!r}; use 'exact' or 'frozen'")
    diagonal.setflags(write=False)
    return ShiftedFamily(base, float(epsilon), mode, systems, diagonal)


def simulate_limit_proxy(ensemble: ParticleEnsemble, n_ref: Optional[int] = None, seed: int = 0,
                         key: tuple[int, ...] = (), initial: InitialSpec = "normal"):
    """Couple the observed particles to an approximation of the McKean-Vlasov limit.

    A reference system of ``n_ref`` particles on independent noise stands in
    for the limit law. The tracked particles then reuse the observed initial
    conditions and noise but feel only the reference measure.

    Returns:
        ``(tracked, reference)`` ensembles; ``tracked.measure_states`` is the
        reference state array.
    """
    n = ensemble.n_particles
    if n_ref is None:
        n_ref = max(10 * n, 300)
    if n_ref < 1:
        raise ConfigError(f"n_ref must be positive, got {n_ref}")
    grid = ensemble.grid
    ref_noise = sample_fbm(ensemble.hurst, grid, n_ref, seed, key, tag=_rng.REFERENCE_NOISE)
    ref_x0 = initial_states(initial, n_ref, seed, key, tag=_rng.REFERENCE_INITIAL)
    ref_states = _euler(ensemble.model, ensemble.theta, ensemble.sigma, grid.dt, ref_x0,
                        ref_noise.increments)
    ref_states.setflags(write=False)
    reference = ParticleEnsemble(ensemble.model, ensemble.theta, ensemble.sigma, grid,
                                 ref_states, ref_noise)
    tracked_states = _euler(ensemble.model, ensemble.theta, ensemble.sigma, grid.dt,
                            ensemble.states[:, 0], ensemble.noise.increments, ref_states)
    tracked_states.setflags(write=False)
    tracked = ParticleEnsemble(ensemble.model, ensemble.theta, ensemble.sigma, grid,
                               tracked_states, ensemble.noise, ref_states)
    return tracked, reference


def wasserstein2_1d(a, b) -> float:
    """Exact W2 distance between two empirical measures on the line.

    Equal sizes pair order statistics; unequal sizes integrate the squared gap
    of the two quantile functions over the common refinement of their steps.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein2_1d needs non-empty samples")
    if a.size == b.size:
        return float(np.sqrt(np.mean((a - b) ** 2)))
    u = np.union1d(np.arange(1, a.size + 1) / a.size, np.arange(1, b.size + 1) / b.size)
    lo = np.concatenate([[0.0], u[:-1]])
    mid = 0.5 * (lo + u)
    ia = np.minimum((mid * a.size).astype(int), a.size - 1)
    ib = np.minimum((mid * b.size).astype(int), b.size - 1)
    return float(np.sqrt(np.sum((u - lo) * (a[ia] - b[ib]) ** 2)))
