"""Exact subspace solvers.

Every subspace problem has the form

    F(w) = offset + 1/2 w'Aw + r'w + sum_x weights_x * phi(x, base_x + (Pw)_x)

where ``P`` is either the identity (local problems) or the coarse
prolongation.  With ``offset`` chosen as E_h(v) - sum weights*phi(base),
F(w) equals the global energy E_h(v + R^* w), which is what the relative
stopping rule divides by.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvexityViolationError,
    LineSearchFailure,
    MaxIterationsError,
    NumericOverflowError,
    UnsupportedOperationError,
)
from .models import BoundNonlinearity

__all__ = [
    "Termination",
    "SolverReport",
    "SubspaceProblem",
    "damped_newton",
    "afgm",
    "estimate_lipschitz",
    "coarse_dual_afgm",
    "relative_change",
]

log = logging.getLogger(__name__)

ARMIJO_C = 0.01
MAX_HALVINGS = 60
# Sizes at or below this use dense Cholesky; above it sparse LU.
DENSE_LIMIT = 1500


class Termination(str, enum.Enum):
    TOLERANCE = "tolerance"
    MAX_ITERATIONS = "max-iterations"
    LINE_SEARCH_FAILURE = "line-search-failure"


@dataclass
class SolverReport:
    iterations: int
    objective: float
    reason: Termination
    max_inner: int = 0
    history: list = field(default_factory=list, repr=False)
    restarts: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.max_inner = max(self.max_inner, self.iterations)


@dataclass
class SubspaceProblem:
    A: np.ndarray | sp.spmatrix
    r: np.ndarray
    weights: np.ndarray
    nonlinearity: BoundNonlinearity
    base: np.ndarray
    P: sp.spmatrix | None = None
    offset: float = 0.0

    @property
    def size(self) -> int:
        return self.r.size

    def nodal(self, w):
        return self.base + (w if self.P is None else self.P @ w)

    def quadratic(self, w):
        return 0.5 * float(w @ (self.A @ w)) + float(self.r @ w)

    def value(self, w):
        return self.offset + self.quadratic(w) + float(self.weights @ self.nonlinearity.phi(self.nodal(w)))

    def gradient(self, w):
        s = self.weights * self.nonlinearity.dphi(self.nodal(w))
        return self.A @ w + self.r + (s if self.P is None else self.P.T @ s)

    def hessian(self, w):
        d = self.weights * self.nonlinearity.d2phi(self.nodal(w))
        if np.any(d < 0):
            raise ConvexityViolationError("negative curvature of the separable term")
        if self.P is None:
            H = self.A + (np.diag(d) if isinstance(self.A, np.ndarray) else sp.diags(d))
        else:
            H = self.A + self.P.T @ sp.diags(d) @ self.P
        return H


def relative_change(new, old):
    """|new - old| / |new|, falling back to the absolute change near zero."""
    denom = abs(new)
    return abs(new - old) / denom if denom > 1e-300 else abs(new - old)


def _solve_spd(H, rhs):
    n = rhs.size
    if n <= DENSE_LIMIT:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        try:
            factor = sla.cho_factor(dense, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ConvexityViolationError(f"Hessian is not positive definite: {exc}") from exc
        return sla.cho_solve(factor, rhs, check_finite=False)
    H = sp.csc_matrix(H)
    try:
        lu = spla.splu(H, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise ConvexityViolationError(f"Hessian factorization failed: {exc}") from exc
    if np.any(lu.U.diagonal() <= 0):
        raise ConvexityViolationError("Hessian is not positive definite")
    return lu.solve(rhs)


def damped_newton(problem: SubspaceProblem, init=None, tol=1e-12, max_iter=100, grad_tol=1e-14):
    """Minimize a smooth subspace problem by Newton's method with Armijo backtracking.

    Each step solves ``H p = -grad`` and halves ``t`` from 1 until
    ``F(w + t p) <= F(w) + 0.01 t <grad, p>``.  The iteration stops once
    ``|F_new - F_old| / |F_new| < tol`` or the gradient norm falls below
    ``grad_tol`` relative to the initial gradient (absolute when that is
    below one).

    Returns
    -------
    w : ndarray
    report : SolverReport
    """
    w = np.zeros(problem.size) if init is None else np.array(init, dtype=float)
    F = problem.value(w)
    g = problem.gradient(w)
    gscale = max(1.0, float(np.linalg.norm(g)))
    reason = Termination.MAX_ITERATIONS
    it = 0
    while it < max_iter:
        if np.linalg.norm(g) <= grad_tol * gscale:
            reason = Termination.TOLERANCE
            break
        p = -_solve_spd(problem.hessian(w), g)
        slope = float(g @ p)
        if slope >= 0:
            raise ConvexityViolationError("Newton direction is not a descent direction")
        t = 1.0
        # Below the rounding level of F the Armijo test is meaningless: take the full step.
        if -slope > 64 * np.finfo(float).eps * max(1.0, abs(F)):
            for _ in range(MAX_HALVINGS + 1):
                try:
                    Ft = problem.value(w + t * p)
                except NumericOverflowError:
                    Ft = np.inf
                if Ft <= F + ARMIJO_C * t * slope:
                    break
                t *= 0.5
            else:
                raise LineSearchFailure(f"no sufficient decrease after {MAX_HALVINGS} halvings")
            w = w + t * p
        else:
            w = w + p
            Ft = problem.value(w)
        it += 1
        converged = relative_change(Ft, F) < tol
        F = Ft
        g = problem.gradient(w)
        if converged:
            reason = Termination.TOLERANCE
            break
    return w, SolverReport(it, F, reason)


def estimate_lipschitz(operator, iterations=100, seed=0, safety=1.01):
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    ``operator`` may be a matrix or a callable ``v -> Av`` (then ``size``
    must be given via ``operator.shape``).
    """
    if callable(operator) and not hasattr(operator, "shape"):
        raise TypeError("callable operators must expose a shape")
    apply = operator if callable(operator) else (lambda v: operator @ v)
    n = operator.shape[0]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iterations):
        Av = apply(v)
        norm = np.linalg.norm(Av)
        if norm == 0.0:
            return 0.0
        lam = float(v @ Av)
        v = Av / norm
    return safety * max(lam, float(np.linalg.norm(apply(v))))


def afgm(problem: SubspaceProblem, init=None, tol=1e-12, max_iter=100000, lipschitz=None,
         record=False):
    """Fast proximal gradient with gradient-based adaptive restart.

    The quadratic part is the smooth term; the separable part enters through
    its proximal map.  Momentum is reset whenever
    ``<y_k - x_{k+1}, x_{k+1} - x_k> > 0``.
    """
    if problem.P is not None:
        raise UnsupportedOperationError("afgm needs a separable nonsmooth part (P = identity)")
    L = lipschitz if lipschitz is not None else estimate_lipschitz(problem.A)
    if L <= 0:
        raise ValueError("Lipschitz constant must be positive")
    step = 1.0 / L
    x = np.zeros(problem.size) if init is None else np.array(init, dtype=float)
    y = x.copy()
    t = 1.0
    F = problem.value(x)
    history = [F] if record else []
    restarts = []
    reason = Termination.MAX_ITERATIONS
    it = 0
    A, r, base, wts, nl = problem.A, problem.r, problem.base, problem.weights, problem.nonlinearity
    while it < max_iter:
        z = y - step * (A @ y + r)
        x_new = nl.prox(wts, step, base + z) - base
        it += 1
        F_new = problem.value(x_new)
        if record:
            history.append(F_new)
        if (y - x_new) @ (x_new - x) > 0:
            t = 1.0
            y = x_new
            restarts.append(it)
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        converged = relative_change(F_new, F) < tol
        x, F = x_new, F_new
        if converged:
            reason = Termination.TOLERANCE
            break
    return x, SolverReport(it, F, reason, history=history, restarts=restarts)


def coarse_dual_afgm(problem: SubspaceProblem, tol=1e-12, max_iter=200000, lipschitz=None):
    """Coarse L1 problem through its box-constrained dual.

    With a = weights*alpha and the load folded into the linear term, the
    primal  1/2 c'Ac + r'c + sum a|base + Pc|  has dual

        max_{|lam| <= a}  lam'base - 1/2 s' A^{-1} s,   s = r + P' lam,

    with primal recovery c = -A^{-1} s.  The dual is maximised by projected
    fast gradient with restart until the duality gap drops below
    ``tol * (1 + |F(c)|)``.
    """
    if problem.P is None:
        raise UnsupportedOperationError("coarse dual solver expects a prolongation P")
    model = problem.nonlinearity.model
    if model.name != "l1":
        raise UnsupportedOperationError("coarse dual solver is specific to the L1 model")
    alpha = model.params["alpha"]
    P = sp.csr_matrix(problem.P)
    A = problem.A.toarray() if sp.issparse(problem.A) else np.asarray(problem.A)
    factor = sla.cho_factor(A, lower=True, check_finite=False)
    g = problem.nonlinearity.g
    wts = problem.weights
    bound = wts * alpha
    base = problem.base
    r_lin = problem.r - P.T @ (wts * g)
    # Constant of the primal that the dual does not see.
    const = problem.offset - float(wts @ (g * base))

    def primal_of(lam):
        return -sla.cho_solve(factor, r_lin + P.T @ lam, check_finite=False)

    def dual_value(lam, c):
        s = r_lin + P.T @ lam
        return float(lam @ base) + 0.5 * float(s @ c)  # c = -A^{-1}s

    def dual_gradient(c):
        return base + P @ c

    if lipschitz is None:
        op = spla.LinearOperator(
            (P.shape[0],) * 2,
            matvec=lambda v: P @ sla.cho_solve(factor, P.T @ v, check_finite=False),
        )
        lipschitz = estimate_lipschitz(op, iterations=200)
    if lipschitz <= 0:
        c = primal_of(np.zeros(P.shape[0]))
        return c, SolverReport(0, problem.value(c), Termination.TOLERANCE)
    step = 1.0 / lipschitz

    lam = np.clip(np.zeros(P.shape[0]), -bound, bound)
    y = lam.copy()
    t = 1.0
    c = primal_of(lam)
    reason = Termination.MAX_ITERATIONS
    it = 0
    primal = problem.value(c)
    while it < max_iter:
        cy = primal_of(y)
        lam_new = np.clip(y + step * dual_gradient(cy), -bound, bound)
        it += 1
        if (y - lam_new) @ (lam_new - lam) > 0:
            t = 1.0
            y = lam_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = lam_new + ((t - 1.0) / t_new) * (lam_new - lam)
            t = t_new
        lam = lam_new
        c = primal_of(lam)
        primal = problem.value(c)
        dual = dual_value(lam, c) + const
        if primal - dual < tol * (1.0 + abs(primal)):
            reason = Termination.TOLERANCE
            break
    if reason is not Termination.TOLERANCE:
        raise MaxIterationsError(
            f"coarse dual solve: gap {primal - dual:.3e} above tolerance after {it} iterations"
        )
    return c, SolverReport(it, primal, reason)
