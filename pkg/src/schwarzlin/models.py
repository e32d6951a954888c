"""Convex nonlinearities phi(x, y) for the three experiment families.

All callables are vectorised: ``x`` is an array of points with trailing
dimension 2 and ``y`` broadcasts against ``x[..., 0]``.  The solvers never
re-evaluate the load at every call; they bind a model to a fixed set of
points with :meth:`NonlinearModel.at`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericOverflowError, UnsupportedOperationError

__all__ = [
    "NonlinearModel",
    "BoundNonlinearity",
    "monomial_model",
    "poisson_boltzmann_model",
    "l1_model",
    "manufactured_rhs",
    "l1_load",
    "exact_solution",
    "exact_gradient",
    "soft_threshold",
]

OVERFLOW_LIMIT = 1e300
_COSH_ARG_LIMIT = 700.0

PointFunction = Callable[[np.ndarray], np.ndarray]


def _zero_load(x):
    return np.zeros(np.shape(x)[:-1])


def _check_finite(values, what):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values) | (np.abs(values) > OVERFLOW_LIMIT)
    if np.any(bad):
        k = int(np.flatnonzero(bad.ravel())[0])
        raise NumericOverflowError(f"{what} overflowed at point index {k}", vertex=k)
    return values


def soft_threshold(z, tau):
    return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)


@dataclass(frozen=True)
class NonlinearModel:
    """phi(x, y) = psi(y) - g(x) y with psi convex and independent of x.

    ``psi``, ``dpsi``, ``d2psi`` act on ``y`` only; the load ``g`` carries the
    spatial dependence.  ``prox_psi(z, t)`` returns argmin_p psi(p) + (p-z)^2/(2t).
    """

    name: str
    params: dict
    psi: Callable[[np.ndarray], np.ndarray]
    load: PointFunction = _zero_load
    dpsi: Callable | None = None
    d2psi: Callable | None = None
    prox_psi: Callable | None = None
    arg_limit: float | None = field(default=None)

    @property
    def smooth(self) -> bool:
        return self.dpsi is not None

    def _guard(self, y):
        y = np.asarray(y, dtype=float)
        if self.arg_limit is not None:
            bad = np.abs(y) > self.arg_limit
            if np.any(bad):
                k = int(np.flatnonzero(bad.ravel())[0])
                raise NumericOverflowError(
                    f"{self.name}: argument {y.ravel()[k]:.6g} out of range at point index {k}",
                    vertex=k,
                )
        return y

    def phi(self, x, y):
        return self.at(x).phi(y)

    def dphi(self, x, y):
        return self.at(x).dphi(y)

    def d2phi(self, x, y):
        return self.at(x).d2phi(y)

    def prox(self, x, weight, step, z):
        return self.at(x).prox(weight, step, z)

    def at(self, x) -> "BoundNonlinearity":
        x = np.asarray(x, dtype=float)
        return BoundNonlinearity(self, np.asarray(self.load(x), dtype=float))


@dataclass(frozen=True)
class BoundNonlinearity:
    """A model with its load evaluated at a fixed point set."""

    model: NonlinearModel
    g: np.ndarray

    def subset(self, index) -> "BoundNonlinearity":
        return BoundNonlinearity(self.model, self.g[index])

    def phi(self, y):
        y = self.model._guard(y)
        return _check_finite(self.model.psi(y) - self.g * y, f"{self.model.name} phi")

    def dphi(self, y):
        if self.model.dpsi is None:
            raise UnsupportedOperationError(f"{self.model.name} model is not differentiable")
        y = self.model._guard(y)
        return _check_finite(self.model.dpsi(y) - self.g, f"{self.model.name} dphi")

    def d2phi(self, y):
        if self.model.d2psi is None:
            raise UnsupportedOperationError(f"{self.model.name} model has no second derivative")
        y = self.model._guard(y)
        return _check_finite(self.model.d2psi(y) + 0.0 * self.g, f"{self.model.name} d2phi")

    def prox(self, weight, step, z):
        """argmin_p weight*phi(p) + (p - z)^2 / (2*step), componentwise."""
        if self.model.prox_psi is None:
            raise UnsupportedOperationError(f"{self.model.name} model has no proximal map")
        t = np.asarray(weight) * step
        return self.model.prox_psi(z + t * self.g, t)


def monomial_model(alpha: float, m: int, g: PointFunction | None = None) -> NonlinearModel:
    """phi(x, y) = (alpha/m)|y|^m - g(x) y."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if int(m) != m or m < 2:
        raise ValueError("m must be an integer >= 2")
    m = int(m)

    def psi(y):
        return (alpha / m) * np.abs(y) ** m

    def dpsi(y):
        return alpha * np.abs(y) ** (m - 2) * y

    def d2psi(y):
        return alpha * (m - 1) * np.abs(y) ** (m - 2)

    return NonlinearModel(
        name="monomial",
        params={"alpha": alpha, "m": m},
        psi=psi,
        dpsi=dpsi,
        d2psi=d2psi,
        load=g or _zero_load,
    )


def poisson_boltzmann_model(alpha: float, g: PointFunction | None = None) -> NonlinearModel:
    """phi(x, y) = cosh(alpha y)/alpha - g(x) y, so that dphi = sinh(alpha y) - g."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")

    def psi(y):
        return np.cosh(alpha * y) / alpha

    def dpsi(y):
        return np.sinh(alpha * y)

    def d2psi(y):
        return alpha * np.cosh(alpha * y)

    return NonlinearModel(
        name="pb",
        params={"alpha": alpha},
        psi=psi,
        dpsi=dpsi,
        d2psi=d2psi,
        load=g or _zero_load,
        arg_limit=_COSH_ARG_LIMIT / alpha,
    )


def l1_model(alpha: float, g: PointFunction | None = None) -> NonlinearModel:
    """phi(x, y) = alpha|y| - g(x) y; nonsmooth, prox only."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")

    def psi(y):
        return alpha * np.abs(y)

    def prox_psi(z, t):
        return soft_threshold(z, t * alpha)

    return NonlinearModel(
        name="l1",
        params={"alpha": alpha},
        psi=psi,
        prox_psi=prox_psi,
        load=g or _zero_load,
    )


def exact_solution(x):
    """u*(x, y) = x(1 - x) sin(pi y)."""
    x = np.asarray(x, dtype=float)
    return x[..., 0] * (1 - x[..., 0]) * np.sin(np.pi * x[..., 1])


def exact_gradient(x):
    x = np.asarray(x, dtype=float)
    s, t = x[..., 0], x[..., 1]
    return np.stack(
        [(1 - 2 * s) * np.sin(np.pi * t), np.pi * s * (1 - s) * np.cos(np.pi * t)], axis=-1
    )


def minus_laplacian_exact(x):
    x = np.asarray(x, dtype=float)
    s, t = x[..., 0], x[..., 1]
    return (2 + np.pi**2 * s * (1 - s)) * np.sin(np.pi * t)


def manufactured_rhs(family: str, alpha: float = 0.0, m: int = 2) -> PointFunction:
    """Load g making u* the exact solution of -Lap u + f0(u) = g."""
    if family == "monomial":
        def g(x):
            u = exact_solution(x)
            return minus_laplacian_exact(x) + alpha * np.abs(u) ** (m - 2) * u
    elif family in ("pb", "poisson_boltzmann"):
        def g(x):
            return minus_laplacian_exact(x) + np.sinh(alpha * exact_solution(x))
    elif family == "l1":
        raise UnsupportedOperationError("the L1 problem uses l1_load(), not a manufactured load")
    else:
        raise ValueError(f"unknown model family {family!r}")
    return g


def l1_load() -> PointFunction:
    """g(x, y) = 1000 x(1 - x) sin(pi y)."""

    def g(x):
        return 1e3 * exact_solution(x)

    return g
