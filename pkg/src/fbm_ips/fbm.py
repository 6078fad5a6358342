"""Exact simulation of fractional Brownian motion on a uniform grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Literal

import numpy as np
from scipy.linalg import lapack

from . import rng as _rng
from .errors import CholeskyError, ConfigError

# Relative threshold below which negative circulant eigenvalues count as
# round-off and are clamped to zero.
EIGEN_CLAMP = 1e-10


def validate_hurst(h: float) -> float:
    h = float(h)
    if not 0.0 < h < 1.0:
        raise ConfigError(f"Hurst index must lie in the open interval (0, 1), got {h}")
    return h


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_n = T``."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon > 0 or not np.isfinite(self.horizon):
            raise ConfigError(f"horizon must be positive and finite, got {self.horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @classmethod
    def from_step(cls, horizon: float, dt: float) -> "TimeGrid":
        """Grid with mesh ``dt``; the horizon must be a multiple of it (to 1e-9)."""
        n = round(horizon / dt)
        if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
            raise ConfigError(f"horizon {horizon} is not a multiple of step {dt}")
        return cls(horizon, n)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    def node(self, j: int) -> float:
        if not 0 <= j <= self.n_steps:
            raise IndexError(f"node index {j} outside 0..{self.n_steps}")
        return self.horizon if j == self.n_steps else j * self.dt

    def truncate(self, n_steps: int) -> "TimeGrid":
        """The sub-grid made of the first ``n_steps`` cells."""
        if not 1 <= n_steps <= self.n_steps:
            raise ConfigError(f"cannot truncate a {self.n_steps}-step grid to {n_steps} steps")
        return TimeGrid(n_steps * self.dt, n_steps)


def fbm_covariance(h: float, t, s):
    """``E[B_t B_s] = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2``; broadcasts over arrays."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("fbm_covariance needs non-negative times")
    two_h = 2.0 * h
    out = 0.5 * (t**two_h + s**two_h - np.abs(t - s) ** two_h)
    return out if out.ndim else float(out)


def fgn_autocovariance(h: float, lags) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise.

    ``gamma(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2``. For ``|k| >= 2``
    the second difference is evaluated through ``expm1``/``log1p`` to avoid
    cancellation at large lags.
    """
    k = np.abs(np.asarray(lags, dtype=float))
    two_h = 2.0 * h
    out = np.empty_like(k)
    small = k < 2
    ks = k[small]
    out[small] = 0.5 * (np.abs(ks + 1) ** two_h - 2 * ks**two_h + np.abs(ks - 1) ** two_h)
    kl = k[~small]
    inv = 1.0 / kl
    out[~small] = 0.5 * kl**two_h * (
        np.expm1(two_h * np.log1p(inv)) + np.expm1(two_h * np.log1p(-inv))
    )
    return out


@lru_cache(maxsize=32)
def _circulant_scale(h: float, n: int) -> np.ndarray | None:
    """``sqrt(lambda / 2n)`` for the Davies-Harte embedding, or None if unusable."""
    gam = fgn_autocovariance(h, np.arange(n + 1))
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    top = lam.max()
    if lam.min() < -EIGEN_CLAMP * top:
        return None
    lam = np.clip(lam, 0.0, None)
    scale = np.sqrt(lam / row.size)
    scale.setflags(write=False)
    return scale


@lru_cache(maxsize=8)
def _cholesky_factor(h: float, n: int) -> np.ndarray:
    gam = fgn_autocovariance(h, np.arange(n))
    idx = np.arange(n)
    cov = gam[np.abs(idx[:, None] - idx[None, :])]
    factor, info = lapack.dpotrf(cov, lower=1, clean=1)
    if info > 0:
        raise CholeskyError(int(info), n)
    if info < 0:
        raise ValueError(f"dpotrf rejected argument {-info}")
    factor.setflags(write=False)
    return factor


@dataclass(frozen=True, eq=False)
class FbmEnsemble:
    """Independent fBm paths, stored as increments (shape ``(N, n_steps)``)."""

    hurst: float
    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2 or inc.shape[1] != self.grid.n_steps:
            raise ValueError(
                f"increments must have shape (N, {self.grid.n_steps}), got {inc.shape}"
            )
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @cached_property
    def values(self) -> np.ndarray:
        v = np.zeros((self.n_paths, self.grid.n_steps + 1))
        np.cumsum(self.increments, axis=1, out=v[:, 1:])
        v.setflags(write=False)
        return v

    def subset(self, rows) -> "FbmEnsemble":
        return FbmEnsemble(self.hurst, self.grid, self.increments[rows])

    def truncate(self, n_steps: int) -> "FbmEnsemble":
        return FbmEnsemble(self.hurst, self.grid.truncate(n_steps), self.increments[:, :n_steps])

    def to_csv(self, path) -> None:
        """Write ``path_index,node_index,time,value`` rows in (path, node) order."""
        times = self.grid.times
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path_index", "node_index", "time", "value"])
            for i, row in enumerate(self.values):
                for j, (t, v) in enumerate(zip(times, row)):
                    w.writerow([i, j, repr(float(t)), repr(float(v))])


def sample_fbm(
    h: float,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    key: tuple[int, ...] = (),
    method: Literal["auto", "circulant", "cholesky"] = "auto",
    tag: int = _rng.NOISE,
) -> FbmEnsemble:
    """Draw ``n_paths`` independent fBm paths on ``grid``.

    Path ``i`` is driven by its own stream ``(seed, tag, *key, i)``, so a path
    does not change when ``n_paths`` grows or when paths are generated in a
    different order.

    Args:
        h: Hurst index in (0, 1).
        grid: Uniform time grid.
        n_paths: Number of independent paths.
        seed: 64-bit master seed.
        key: Extra stream key components (e.g. replication indices).
        method: ``circulant`` (Davies-Harte), ``cholesky``, or ``auto`` which
            uses the embedding and falls back to Cholesky when it has
            materially negative eigenvalues.
        tag: Stream tag; auxiliary ensembles use their own tag so they never
            share draws with the observed system.
    """
    h = validate_hurst(h)
    if n_paths < 1:
        raise ConfigError(f"n_paths must be at least 1, got {n_paths}")
    n = grid.n_steps
    scale = None
    if method in ("auto", "circulant"):
        scale = _circulant_scale(h, n)
        if scale is None and method == "circulant":
            raise ValueError(f"circulant embedding has negative eigenvalues for H={h}, n={n}")
    elif method != "cholesky":
        raise ConfigError(f"unknown fBm method {method!r}")

    inc = np.empty((n_paths, n))
    if scale is not None:
        m = scale.size
        z = np.empty((n_paths, m), dtype=complex)
        for i in range(n_paths):
            g = _rng.stream(seed, tag, *key, i)
            draws = g.standard_normal(2 * m)
            z[i].real = draws[:m]
            z[i].imag = draws[m:]
        inc[:] = np.fft.fft(z * scale, axis=1).real[:, :n]
    else:
        factor = _cholesky_factor(h, n)
        for i in range(n_paths):
            g = _rng.stream(seed, tag, *key, i)
            inc[i] = factor @ g.standard_normal(n)
    inc *= grid.dt**h
    return FbmEnsemble(h, grid, inc)
