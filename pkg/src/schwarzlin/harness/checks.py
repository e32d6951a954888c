"""Property-check suite: identities, sampled inequalities, oracles and order fits.

Every check returns a :class:`CheckResult` holding the measured quantity and
the tolerance it was compared against.  ``check_suite(selector)`` runs the
checks whose group or name starts with ``selector``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from ..decomp import (
    build_decomposition,
    coarse_interpolate_JH,
    extend_by_zero,
    prolongate,
    stable_decomposition_one_level,
    stable_decomposition_two_level,
)
from ..fem import DiscreteEnergy, h1_error, l1_interpolation_error
from ..mesh import build_uniform_mesh
from ..models import (
    BoundNonlinearity,
    exact_gradient,
    l1_load,
    l1_model,
    manufactured_rhs,
    monomial_model,
    poisson_boltzmann_model,
)
from ..schwarz import SchwarzConfig, schwarz_solve, solve_reference
from ..solvers import SubspaceProblem, coarse_dual_afgm, damped_newton

__all__ = [
    "CheckResult",
    "CHECKS",
    "check_suite",
    "sample_models",
    "fd_gradient_error",
    "fd_hessian_error",
    "prox_inclusion_residual",
    "fit_order",
]

log = logging.getLogger(__name__)

SAMPLES = 100


@dataclass
class CheckResult:
    name: str
    ok: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.value:.3e} vs tol {self.tolerance:.1e}{extra}"


def _upper(name, value, tol, detail=""):
    return CheckResult(name, bool(value <= tol), float(value), tol, detail)


def sample_models():
    """One representative model per problem family."""
    return {
        "monomial": monomial_model(10.0, 3, manufactured_rhs("monomial", alpha=10.0, m=3)),
        "pb": poisson_boltzmann_model(1.0, manufactured_rhs("pb", alpha=1.0)),
        "l1": l1_model(10.0, l1_load()),
    }


def _random_dofs(rng, size, scale=0.5):
    return scale * rng.standard_normal(size)


# ---------------------------------------------------------------------------
# Decomposition identities


def _standard_decomp(two_level=False):
    return build_decomposition(build_uniform_mesh(32), build_uniform_mesh(4), 2, two_level=two_level)


def check_pou(rng):
    decomp = _standard_decomp()
    fine = decomp.fine
    n = fine.n
    fi, fj = fine.grid
    theta = np.array([s.theta for s in decomp.subdomains])
    sum_err = float(np.max(np.abs(theta.sum(axis=0) - 1.0)))
    support_err = 0.0
    lip = 0.0
    for s, th in zip(decomp.subdomains, theta):
        i0, i1, j0, j1 = s.box
        inside = (fi > i0 if i0 > 0 else fi >= 0) & (fi < i1 if i1 < n else fi <= n)
        inside &= (fj > j0 if j0 > 0 else fj >= 0) & (fj < j1 if j1 < n else fj <= n)
        support_err = max(support_err, float(np.max(np.abs(th[~inside]), initial=0.0)))
        support_err = max(support_err, float(max(-th.min(), th.max() - 1.0, 0.0)))
        grid = th.reshape(n + 1, n + 1)
        steps = max(np.max(np.abs(np.diff(grid, axis=0))), np.max(np.abs(np.diff(grid, axis=1))))
        lip = max(lip, float(steps) / fine.h)
    return [
        _upper("pou/sum-to-one", sum_err, 1e-15),
        _upper("pou/support", support_err, 1e-15),
        _upper("pou/lipschitz", lip * decomp.delta, 2.0, "max |dtheta|/h times delta"),
    ]


def _assemble(decomp, parts):
    fine = decomp.fine
    out = np.zeros(fine.num_vertices)
    for s, wk in zip(decomp.subdomains, parts):
        out[s.vertices] += wk
    return out


def _local_dofs(fine, sub, part):
    full = np.zeros(fine.num_vertices)
    full[sub.vertices] = part
    return fine.to_interior(full)


def check_reconstruction(rng):
    one = _standard_decomp()
    two = _standard_decomp(two_level=True)
    fine = one.fine
    err1 = err2 = 0.0
    for _ in range(SAMPLES):
        w = fine.to_full(_random_dofs(rng, fine.num_dofs, 1.0))
        err1 = max(err1, float(np.max(np.abs(_assemble(one, stable_decomposition_one_level(one, w)) - w))))
        w0, parts = stable_decomposition_two_level(two, w)
        total = _assemble(two, parts) + fine.to_full(prolongate(two, w0))
        err2 = max(err2, float(np.max(np.abs(total - w))))
    return [
        _upper("reconstruction/one-level", err1, 1e-13),
        _upper("reconstruction/two-level", err2, 1e-13),
    ]


def check_positivity(rng):
    decomp = _standard_decomp(two_level=True)
    fine = decomp.fine
    worst = 0.0
    for _ in range(SAMPLES):
        w = fine.to_full(rng.uniform(1e-3, 1.0, fine.num_dofs))
        pw = fine.to_full(prolongate(decomp, coarse_interpolate_JH(decomp.coarse_level, w)))
        worst = max(worst, float(max(np.max(-pw), np.max(pw - w))))
    return [_upper("positivity/J_H", max(worst, 0.0), 0.0, "0 <= R_0^* J_H w <= w")]


# ---------------------------------------------------------------------------
# Derivatives


def fd_gradient_error(energy, u, v, eps=1e-5) -> float:
    """Relative mismatch between <grad E(u), v> and a central difference."""
    fd = (energy.value(u + eps * v) - energy.value(u - eps * v)) / (2 * eps)
    exact = float(energy.gradient(u) @ v)
    return abs(fd - exact) / max(1.0, abs(exact))


def fd_hessian_error(energy, u, v, eps=1e-5) -> float:
    fd = (energy.gradient(u + eps * v) - energy.gradient(u - eps * v)) / (2 * eps)
    exact = energy.hessian(u) @ v
    return float(np.linalg.norm(fd - exact) / max(1.0, np.linalg.norm(exact)))


def check_derivatives(rng, energies=None):
    mesh = build_uniform_mesh(16)
    if energies is None:
        models = sample_models()
        energies = {k: DiscreteEnergy(mesh, models[k]) for k in ("monomial", "pb")}
    out = []
    for name, energy in energies.items():
        g_err = h_err = 0.0
        for _ in range(10):
            u = _random_dofs(rng, energy.size)
            v = _random_dofs(rng, energy.size, 1.0)
            g_err = max(g_err, fd_gradient_error(energy, u, v))
            h_err = max(h_err, fd_hessian_error(energy, u, v))
        out.append(_upper(f"gradient/{name}", g_err, 1e-6))
        out.append(_upper(f"hessian/{name}", h_err, 1e-6))
    return out


# ---------------------------------------------------------------------------
# Sampled convexity inequalities


def check_convexity(rng):
    mesh = build_uniform_mesh(16)
    out = []
    for name, model in sample_models().items():
        energy = DiscreteEnergy(mesh, model)
        A = energy.A
        strong = 0.0
        for _ in range(SAMPLES):
            u, v = _random_dofs(rng, energy.size), _random_dofs(rng, energy.size)
            t = rng.uniform(0.01, 0.99)
            d = u - v
            lhs = energy.value(t * u + (1 - t) * v)
            rhs = t * energy.value(u) + (1 - t) * energy.value(v) - 0.5 * t * (1 - t) * float(d @ (A @ d))
            strong = max(strong, lhs - rhs)
        out.append(_upper(f"strong-convexity/{name}", strong, 1e-10))
        u_h, _ = solve_reference(energy)
        E_h = energy.value(u_h)
        sharp = 0.0
        for _ in range(SAMPLES):
            u = u_h + _random_dofs(rng, energy.size, rng.choice([1e-3, 1e-1, 1.0]))
            d = u - u_h
            sharp = max(sharp, 0.5 * float(d @ (A @ d)) - (energy.value(u) - E_h))
        out.append(_upper(f"sharpness/{name}", sharp, 1e-8))
    return out


def check_strengthened_convexity(rng):
    """Averaged-update inequality with tau = 1/4 (one level) and 1/5 (two levels)."""
    out = []
    for levels, tau in ((1, 0.25), (2, 0.2)):
        decomp = _standard_decomp(two_level=levels == 2)
        fine = decomp.fine
        for name, model in sample_models().items():
            energy = DiscreteEnergy(fine, model)
            P = decomp.coarse_level.prolongation if levels == 2 else None
            worst = -np.inf
            for _ in range(SAMPLES):
                v = _random_dofs(rng, energy.size)
                corrections = [extend_by_zero(s, _random_dofs(rng, s.size), energy.size)
                               for s in decomp.subdomains]
                if P is not None:
                    corrections.append(P @ _random_dofs(rng, P.shape[1]))
                count = len(corrections)
                Ev = energy.value(v)
                lhs = (1 - tau * count) * Ev + tau * sum(energy.value(v + c) for c in corrections)
                rhs = energy.value(v + tau * sum(corrections))
                worst = max(worst, rhs - lhs)
            out.append(_upper(f"strengthened-convexity/{levels}L/{name}", max(worst, 0.0), 1e-9,
                              f"tau={tau:g}"))
    return out


def check_g_inequalities(rng):
    out = []
    one = _standard_decomp()
    two = _standard_decomp(two_level=True)
    fine = one.fine
    for name, model in sample_models().items():
        energy = DiscreteEnergy(fine, model)
        G = energy.separable
        N = one.N
        w1 = w2 = -np.inf
        for _ in range(SAMPLES):
            v = _random_dofs(rng, energy.size)
            w = _random_dofs(rng, energy.size)
            w_full = fine.to_full(w)
            parts = stable_decomposition_one_level(one, w_full)
            lhs = sum(G(v + _local_dofs(fine, s, p)) for s, p in zip(one.subdomains, parts))
            w1 = max(w1, lhs - (G(v + w) + (N - 1) * G(v)))
            w0, parts = stable_decomposition_two_level(two, w_full)
            lhs = G(v + prolongate(two, w0))
            lhs += sum(G(v + _local_dofs(fine, s, p)) for s, p in zip(two.subdomains, parts))
            w2 = max(w2, lhs - (G(v + w) + N * G(v)))
        out.append(_upper(f"g-inequality/1L/{name}", max(w1, 0.0), 1e-9))
        out.append(_upper(f"g-inequality/2L/{name}", max(w2, 0.0), 1e-9))
    return out


# ---------------------------------------------------------------------------
# Oracles


def prox_inclusion_residual(model, weight, step, z, g=0.0):
    """Distance from 0 to (p - z)/step + weight * d phi(p) at p = prox(z)."""
    bound = BoundNonlinearity(model, np.full(np.size(z), float(g)))
    p = bound.prox(weight, step, np.asarray(z, dtype=float))
    alpha = model.params["alpha"]
    base = (p - z) / step - weight * g
    on = p != 0
    resid = np.where(on, np.abs(base + weight * alpha * np.sign(p)),
                     np.maximum(np.abs(base) - weight * alpha, 0.0))
    return float(np.max(resid))


def check_prox(rng):
    model = l1_model(10.0)
    worst = 0.0
    lip = 0.0
    for weight, step, g in ((1.0, 0.1, 0.0), (0.01, 1.0, 250.0), (2.5, 0.03, -40.0)):
        z = np.linspace(-5, 5, 2001)
        worst = max(worst, prox_inclusion_residual(model, weight, step, z, g))
        bound = BoundNonlinearity(model, np.full(z.size, g))
        p = bound.prox(weight, step, z)
        lip = max(lip, float(np.max(np.abs(np.diff(p)) / np.diff(z))))
    return [
        _upper("prox/subgradient-inclusion", worst, 1e-10),
        _upper("prox/nonexpansive", lip, 1.0 + 1e-12),
    ]


def newton_vs_bisection(alpha=1.0, weight=0.3, a=2.0, r=-1.5, base=0.4, g=0.7):
    """Single-dof PB problem: damped Newton against a bracketing root solve."""
    model = poisson_boltzmann_model(alpha)
    nl = BoundNonlinearity(model, np.array([g]))
    prob = SubspaceProblem(np.array([[a]]), np.array([r]), np.array([weight]), nl, np.array([base]))
    w, _ = damped_newton(prob, tol=1e-16, grad_tol=0.0, max_iter=100)

    def resid(y):
        return a * y + r + weight * (np.sinh(alpha * (base + y)) - g)

    lo, hi = -1.0, 1.0
    while resid(lo) > 0:
        lo *= 2
    while resid(hi) < 0:
        hi *= 2
    root = brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return abs(float(w[0]) - root)


def coarse_dual_vs_scalar(alpha=10.0, seed=0):
    """Coarse L1 problem on coarse n=2 (one dof) against scalar minimisation."""
    rng = np.random.default_rng(seed)
    fine = build_uniform_mesh(8)
    decomp = build_decomposition(fine, build_uniform_mesh(2), 1, two_level=True)
    energy = DiscreteEnergy(fine, l1_model(alpha, l1_load()))
    v = _random_dofs(rng, energy.size, 0.3)
    Av = energy.A @ v
    P = sp.csr_matrix(decomp.coarse_level.prolongation)
    A0 = decomp.coarse_level.stiffness.toarray()
    Ev = energy.value(v)
    offset = Ev - float(energy.weights @ energy.nonlinearity.phi(v))
    prob = SubspaceProblem(A0, P.T @ Av, energy.weights, energy.nonlinearity, v, P, offset)
    c, _ = coarse_dual_afgm(prob, tol=1e-14)
    return abs(float(c[0]) - _scalar_l1_minimiser(energy, v, P @ np.ones(1), alpha))


def _scalar_l1_minimiser(energy, v, d, alpha):
    """argmin_t E(v + t d) by bisection on the right derivative (monotone for convex E)."""
    wg = float((energy.weights * energy.nonlinearity.g) @ d)
    wd = energy.weights * d

    def right_slope(t):
        u = v + t * d
        s = np.where(u == 0, np.sign(d), np.sign(u))
        return float(d @ (energy.A @ u)) - wg + alpha * float(s @ wd)

    lo, hi = -1.0, 1.0
    while right_slope(lo) >= 0:
        lo *= 2
    while right_slope(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if right_slope(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def check_oracles(rng):
    newton = max(newton_vs_bisection(alpha=a, base=b, g=g)
                 for a in (0.01, 1.0, 10.0) for b in (-0.5, 0.0, 0.4) for g in (0.0, 3.0))
    return [
        _upper("oracle/newton-vs-bisection", newton, 1e-10),
        _upper("oracle/coarse-dual-vs-scalar",
               max(coarse_dual_vs_scalar(a, s) for a in (1.0, 10.0, 100.0) for s in range(3)), 1e-8),
    ]


def check_monotonicity(rng):
    """Short Schwarz runs for every family and level: energies never increase."""
    out = []
    fine = build_uniform_mesh(16)
    coarse = build_uniform_mesh(4)
    for levels in (1, 2):
        decomp = build_decomposition(fine, coarse, 2, two_level=levels == 2)
        for name, model in sample_models().items():
            res = schwarz_solve(SchwarzConfig(levels=levels, iterations=10), fine, model, decomp)
            inc = float(np.max(np.diff(res.energies)))
            out.append(_upper(f"monotonicity/{levels}L/{name}", max(inc, 0.0),
                              1e-12 * max(1.0, abs(res.energies[0]))))
    return out


# ---------------------------------------------------------------------------
# Order-of-convergence fits


def fit_order(ns, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    h = 1.0 / np.asarray(ns, dtype=float)
    return float(np.polyfit(np.log(h), np.log(np.asarray(errors, dtype=float)), 1)[0])


def h1_errors(ns=(16, 32, 64, 128), alpha=10.0, m=3):
    errors = []
    for n in ns:
        mesh = build_uniform_mesh(n)
        energy = DiscreteEnergy(mesh, monomial_model(alpha, m, manufactured_rhs("monomial", alpha, m)))
        u_h, _ = solve_reference(energy)
        errors.append(h1_error(mesh, mesh.to_full(u_h), exact_gradient))
    return errors


def l1_interp_errors(ns=(8, 16, 32, 64)):
    def v(x):
        return np.cos(3 * x[..., 0]) * np.cos(3 * x[..., 1])

    return [l1_interpolation_error(build_uniform_mesh(n), v) for n in ns]


def check_orders(rng):
    ns = (16, 32, 64, 128)
    h1 = fit_order(ns, h1_errors(ns))
    l1 = fit_order((8, 16, 32, 64), l1_interp_errors())
    return [
        CheckResult("order/h1", abs(h1 - 1.0) <= 0.1, h1, 0.1, "slope, expected 1.0"),
        CheckResult("order/l1-interpolation", abs(l1 - 2.0) <= 0.1, l1, 0.1, "slope, expected 2.0"),
    ]


CHECKS = {
    "pou": check_pou,
    "reconstruction": check_reconstruction,
    "positivity": check_positivity,
    "derivatives": check_derivatives,
    "convexity": check_convexity,
    "strengthened": check_strengthened_convexity,
    "g-inequality": check_g_inequalities,
    "prox": check_prox,
    "oracles": check_oracles,
    "monotonicity": check_monotonicity,
    "order": check_orders,
}


def check_suite(selector: str | None = None, seed: int = 0) -> list[CheckResult]:
    """Run all checks (or those whose group starts with ``selector``)."""
    groups = [k for k in CHECKS if not selector or selector in ("all",) or k.startswith(selector)]
    if not groups:
        raise KeyError(f"no check group matches {selector!r}; groups: {', '.join(CHECKS)}")
    rng = np.random.default_rng(seed)
    results = []
    for key in groups:
        for res in CHECKS[key](rng):
            log.info(res.line())
            results.append(res)
    return results
