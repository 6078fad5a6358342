"""The kernel ``phi(t, s) = H(2H-1)|t-s|^{2H-2}`` and exact cell quadrature.

For ``H > 1/2``, ``int_0^t int_0^s phi = R_H(t, s)``, the fBm covariance, so
the phi-mass of a grid cell is a second difference of ``R_H`` at its corners.
That handles the diagonal singularity exactly; phi itself is never evaluated
near ``t = s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from .errors import ConfigError
from .fbm import TimeGrid, fgn_autocovariance, validate_hurst

Region = Literal["full", "lower_triangle", "strict_lower"]


def phi(h: float, t, s):
    """``H(2H-1)|t-s|^{2H-2}``; undefined on the diagonal."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    gap = np.abs(t - s)
    if np.any(gap == 0):
        raise ValueError("phi is not defined at t == s; integrate with cell masses instead")
    out = h * (2 * h - 1) * gap ** (2 * h - 2)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """Phi-masses of the cells ``[t_j, t_j+1] x [t_k, t_k+1]``.

    ``cell_mass[j, k]`` integrates over the whole cell; ``triangular_mass``
    keeps only the part where ``s < t`` (``t`` in cell ``j``, ``s`` in cell
    ``k``): full mass below the diagonal, half on it, zero above.
    """

    hurst: float
    grid: TimeGrid
    cell_mass: np.ndarray
    triangular_mass: np.ndarray
    strict_lower_mass: np.ndarray

    def mass(self, region: Region) -> np.ndarray:
        if region == "full":
            return self.cell_mass
        if region == "lower_triangle":
            return self.triangular_mass
        if region == "strict_lower":
            return self.strict_lower_mass
        raise ValueError(f"unknown region {region!r}")


@lru_cache(maxsize=16)
def _weights(h: float, horizon: float, n: int) -> KernelWeights:
    grid = TimeGrid(horizon, n)
    gam = fgn_autocovariance(h, np.arange(n)) * grid.dt ** (2 * h)
    idx = np.arange(n)
    lag = idx[:, None] - idx[None, :]
    cell = gam[np.abs(lag)]
    strict = np.where(lag > 0, cell, 0.0)
    tri = strict.copy()
    # the s < t half of a diagonal cell: int_0^D int_0^u phi(u - v) dv du = D^{2H} / 2
    tri[idx, idx] = 0.5 * grid.dt ** (2 * h)
    for a in (cell, tri, strict):
        a.setflags(write=False)
    return KernelWeights(h, grid, cell, tri, strict)


def build_kernel_weights(h: float, grid: TimeGrid) -> KernelWeights:
    h = validate_hurst(h)
    if h <= 0.5:
        raise ConfigError(
            f"phi-kernel weights need H > 1/2 (got H={h}); for H = 1/2 the correction "
            "vanishes and estimators use the Ito branch"
        )
    return _weights(h, grid.horizon, grid.n_steps)


def _cell_average(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a[..., 1:] + a[..., :-1])


def double_integral(f, weights: KernelWeights, region: Region = "full"):
    """``sum_cells mass * (mean of f at the cell's four corners)``.

    Args:
        f: Node values ``f[..., j, k] = f(t_j, s_k)`` of shape ``(..., n+1, n+1)``.
        weights: Cell masses for the grid.
        region: ``full`` square, the ``lower_triangle`` ``{s < t}``, or
            ``strict_lower`` (cells entirely below the diagonal).
    """
    f = np.asarray(f, dtype=float)
    n = weights.grid.n_steps
    if f.shape[-2:] != (n + 1, n + 1):
        raise ValueError(f"integrand must have trailing shape {(n + 1, n + 1)}, got {f.shape}")
    corner = 0.25 * (f[..., :-1, :-1] + f[..., 1:, :-1] + f[..., :-1, 1:] + f[..., 1:, 1:])
    out = np.sum(corner * weights.mass(region), axis=(-2, -1))
    return out if np.ndim(out) else float(out)


def separable_double_integral(a, c, weights: KernelWeights, region: Region = "full"):
    """:func:`double_integral` of ``f(t, s) = a(t) c(s)`` without forming f.

    For a product integrand the corner mean factorises into the product of
    the two one-dimensional cell means, so the result is identical to the
    dense rule up to rounding. ``a`` and ``c`` have shape ``(..., n+1)``.
    """
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    n = weights.grid.n_steps
    if a.shape[-1] != n + 1 or c.shape[-1] != n + 1:
        raise ValueError(f"node arrays must have trailing length {n + 1}")
    out = np.sum((_cell_average(a) @ weights.mass(region)) * _cell_average(c), axis=-1)
    return out if np.ndim(out) else float(out)
