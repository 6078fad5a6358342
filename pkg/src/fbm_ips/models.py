"""Drift models ``b(x, mu) = (b_1, ..., b_p)(x, mu)`` with their derivatives.

Callbacks receive particle positions ``x`` (any shape) and a
:class:`MeasureSummary` whose moment arrays broadcast against ``x``. They
return an array of shape ``(p, *x.shape)``. The Lions derivative callback
``dmub(x, mu, v)`` additionally takes the evaluation point ``v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


class MeasureSummary:
    """Empirical measure of particle positions along the last axis.

    ``mean`` and ``second_moment`` keep that axis with length one so they
    broadcast against the positions themselves.
    """

    def __init__(self, positions, mean=None, second_moment=None):
        self.positions = np.asarray(positions, dtype=float)
        self.mean = (
            self.positions.mean(axis=-1, keepdims=True) if mean is None else np.asarray(mean)
        )
        self.second_moment = (
            np.mean(self.positions**2, axis=-1, keepdims=True)
            if second_moment is None
            else np.asarray(second_moment)
        )

    @property
    def size(self) -> int:
        return self.positions.shape[-1]

    @cached_property
    def sample(self) -> np.ndarray:
        return np.sort(self.positions, axis=-1)

    def for_pairs(self) -> "MeasureSummary":
        """View with moments shaped to broadcast against ``x[..., :, None]``."""
        return MeasureSummary(self.positions, self.mean[..., None], self.second_moment[..., None])


Callback = Callable[..., np.ndarray]


@dataclass(frozen=True)
class DriftModel:
    """A p-component drift with derivatives and optional regularity bounds.

    Attributes:
        name: Registry key.
        p: Parameter dimension.
        b, dxb: ``f(x, mu) -> (p, *x.shape)``.
        dmub: ``f(x, mu, v) -> (p, *broadcast(x, v).shape)``.
        lipschitz: Lipschitz constant of b, if known.
        dxb_sup: Bound on ``|d_x b|``.
        dxb_lower: Lower bound M on ``|d_x b_m|``.
        drift_lower: Lower bound l on ``|b|``.
        dxb_nonpositive: Whether ``d_x b <= 0`` everywhere.
        mean_interaction: ``d_mu b(x, mu)(v)`` does not depend on ``v``, which
            lets derivative solvers skip the N x N interaction matrix.
    """

    name: str
    p: int
    b: Callback
    dxb: Callback
    dmub: Callback
    lipschitz: Optional[float] = None
    dxb_sup: Optional[float] = None
    dxb_lower: Optional[float] = None
    drift_lower: Optional[float] = None
    dxb_nonpositive: Optional[bool] = None
    mean_interaction: bool = field(default=False, compare=False)

    def drift(self, theta, x, mu) -> np.ndarray:
        """``<theta, b(x, mu)>``."""
        return np.tensordot(np.asarray(theta, dtype=float), self.b(x, mu), axes=1)

    def drift_slope(self, theta, x, mu) -> np.ndarray:
        """``<theta, d_x b(x, mu)>``."""
        return np.tensordot(np.asarray(theta, dtype=float), self.dxb(x, mu), axes=1)

    def interaction_matrix(self, theta, x, mu: MeasureSummary) -> np.ndarray:
        """``G[..., k, l] = <theta, d_mu b(x_k, mu)(x_l)>`` for positions ``x[..., :]``."""
        pair_mu = mu.for_pairs()
        vals = self.dmub(x[..., :, None], pair_mu, x[..., None, :])
        g = np.tensordot(np.asarray(theta, dtype=float), vals, axes=1)
        return np.broadcast_to(g, x.shape + (x.shape[-1],))

    def interaction_vector(self, theta, x, mu: MeasureSummary) -> np.ndarray:
        """``<theta, d_mu b(x_k, mu)(.)>`` for models with ``mean_interaction``."""
        if not self.mean_interaction:
            raise ValueError(f"model {self.name!r} interacts through more than the mean")
        return np.tensordot(np.asarray(theta, dtype=float), self.dmub(x, mu, x), axes=1)


def _linear() -> DriftModel:
    def b(x, mu):
        return (x - mu.mean)[None]

    def dxb(x, mu):
        return np.ones((1,) + np.shape(x))

    def dmub(x, mu, v):
        shape = np.broadcast_shapes(np.shape(x), np.shape(v))
        return np.full((1,) + shape, -1.0)

    return DriftModel("linear", 1, b, dxb, dmub, lipschitz=1.0, dxb_sup=1.0,
                      dxb_lower=1.0, dxb_nonpositive=False, mean_interaction=True)


def _arctan() -> DriftModel:
    def b(x, mu):
        return (2.0 - np.arctan(x - mu.mean))[None]

    def dxb(x, mu):
        return (-1.0 / (1.0 + (x - mu.mean) ** 2))[None]

    def dmub(x, mu, v):
        val = 1.0 / (1.0 + (x - mu.mean) ** 2)
        shape = np.broadcast_shapes(np.shape(val), np.shape(v))
        return np.broadcast_to(val, shape)[None].copy()

    return DriftModel("arctan", 1, b, dxb, dmub, lipschitz=1.0, dxb_sup=1.0,
                      drift_lower=2.0 - math.pi / 2, dxb_nonpositive=True, mean_interaction=True)


def _two_param() -> DriftModel:
    def b(x, mu):
        x, m = np.broadcast_arrays(np.asarray(x, dtype=float), mu.mean)
        return np.stack([x - m, x])

    def dxb(x, mu):
        return np.ones((2,) + np.shape(x))

    def dmub(x, mu, v):
        shape = np.broadcast_shapes(np.shape(x), np.shape(v))
        out = np.zeros((2,) + shape)
        out[0] = -1.0
        return out

    return DriftModel("two_param", 2, b, dxb, dmub, lipschitz=1.0, dxb_sup=1.0,
                      dxb_lower=1.0, dxb_nonpositive=False, mean_interaction=True)


def model_linear_meanfield() -> DriftModel:
    """``b(x, mu) = x - mean(mu)``."""
    return _REGISTRY["linear"]


def model_arctan() -> DriftModel:
    """``b(x, mu) = 2 - arctan(x - mean(mu))``."""
    return _REGISTRY["arctan"]


def model_two_param() -> DriftModel:
    """``b(x, mu) = (x - mean(mu), x)``."""
    return _REGISTRY["two_param"]


_REGISTRY: dict[str, DriftModel] = {
    "linear": _linear(),
    "arctan": _arctan(),
    "two_param": _two_param(),
}


def register_model(model: DriftModel, overwrite: bool = False) -> None:
    if model.name in _REGISTRY and not overwrite:
        raise ConfigError(f"model {model.name!r} is already registered")
    _REGISTRY[model.name] = model


def get_model(key: str) -> DriftModel:
    try:
        return _REGISTRY[key]
    except KeyError:
        raise ConfigError(
            f"unknown model {key!r}; available: {', '.join(sorted(_REGISTRY))}"
        ) from None


def available_models() -> list[str]:
    return sorted(_REGISTRY)
