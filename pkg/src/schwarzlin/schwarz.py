"""The additive Schwarz outer iteration and full-space reference solutions."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .decomp import DomainDecomposition
from .errors import (
    AlgorithmicRegressionError,
    MaxIterationsError,
    SchwarzlinError,
    SubdomainSolveError,
)
from .fem import DiscreteEnergy
from .mesh import StructuredMesh
from .models import NonlinearModel
from .solvers import (
    SolverReport,
    SubspaceProblem,
    Termination,
    afgm,
    coarse_dual_afgm,
    damped_newton,
    estimate_lipschitz,
    relative_change,
)

__all__ = [
    "SchwarzConfig",
    "SchwarzResult",
    "default_tau",
    "schwarz_solve",
    "reference_solution",
    "solve_reference",
    "ReferenceCache",
]

log = logging.getLogger(__name__)

MONOTONICITY_SLACK = 1e-12


def default_tau(levels: int) -> float:
    """Step size from four-colouring: 1/4 one-level, 1/5 with the coarse space."""
    return 0.25 if levels == 1 else 0.2


@dataclass
class SchwarzConfig:
    levels: int = 1
    tau: float | None = None
    iterations: int = 30
    local_tol: float = 1e-12
    local_solver: str = "auto"  # "newton", "afgm" or "auto" (by model smoothness)
    max_inner: int = 200000
    seed: int = 0

    def __post_init__(self):
        if self.levels not in (1, 2):
            raise ValueError("levels must be 1 or 2")
        if self.tau is None:
            self.tau = default_tau(self.levels)
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if not self.local_tol > 0:
            raise ValueError("local tolerance must be positive")
        if self.local_solver not in ("auto", "newton", "afgm"):
            raise ValueError(f"unknown local solver {self.local_solver!r}")


@dataclass
class SchwarzResult:
    energies: list
    iterates: list = field(repr=False)
    reports: list = field(repr=False)  # per outer step: list of (subspace index, SolverReport)

    @property
    def max_inner_iterations(self) -> int:
        return max((rep.iterations for step in self.reports for _, rep in step), default=0)

    @property
    def solution(self):
        return self.iterates[-1]


class _Subspaces:
    """Iterate-independent data of every subspace, built once per run."""

    def __init__(self, energy: DiscreteEnergy, decomp: DomainDecomposition, smooth: bool):
        A = energy.A
        self.local = []
        for s in decomp.subdomains:
            Ak = A[s.dofs][:, s.dofs]
            Ak = Ak.toarray() if s.size <= 1500 else Ak.tocsr()
            L = None if smooth else estimate_lipschitz(Ak)
            self.local.append((s.dofs, Ak, energy.nonlinearity.subset(s.dofs), L))
        self.coarse = None
        if decomp.coarse_level is not None:
            lvl = decomp.coarse_level
            A0 = lvl.stiffness
            self.coarse = (sp.csr_matrix(lvl.prolongation), A0.toarray() if A0.shape[0] <= 1500 else A0)
        self.dual_lipschitz = None


def _local_problem(energy, v, Av, Ev, dofs, Ak, nonlinearity):
    wts = energy.weights[dofs]
    base = v[dofs]
    offset = Ev - float(wts @ nonlinearity.phi(base))
    return SubspaceProblem(Ak, Av[dofs], wts, nonlinearity, base, None, offset)


def _coarse_problem(energy, v, Av, Ev, P, A0):
    offset = Ev - float(energy.weights @ energy.nonlinearity.phi(v))
    return SubspaceProblem(A0, P.T @ Av, energy.weights, energy.nonlinearity, v, P, offset)


def schwarz_solve(config: SchwarzConfig, mesh: StructuredMesh, model: NonlinearModel,
                  decomp: DomainDecomposition, u0=None, energy: DiscreteEnergy | None = None,
                  callback=None) -> SchwarzResult:
    """Run ``config.iterations`` steps of the additive Schwarz method.

    Every local problem (and the coarse one when ``config.levels == 2``) is
    solved from the same iterate; the corrections are then summed in
    ascending subspace order and damped by ``tau``.

    Parameters
    ----------
    u0 : ndarray, optional
        Initial dof vector (interior vertices); zero by default.
    energy : DiscreteEnergy, optional
        Pre-built energy for ``(mesh, model)``, to share assembly across runs.
    callback : callable, optional
        Called as ``callback(n, u, E)`` after every outer step.
    """
    if config.levels == 2 and decomp.coarse_level is None:
        raise SchwarzlinError("two-level run requested on a one-level decomposition")
    energy = energy or DiscreteEnergy(mesh, model)
    smooth = model.smooth if config.local_solver == "auto" else config.local_solver == "newton"
    spaces = _Subspaces(energy, decomp, smooth)
    u = np.zeros(energy.size) if u0 is None else np.array(u0, dtype=float)
    E = energy.value(u)
    energies, iterates, reports = [E], [u.copy()], []
    use_coarse = config.levels == 2
    for n in range(config.iterations):
        Au = energy.A @ u
        update = np.zeros_like(u)
        step_reports = []
        if use_coarse:
            P, A0 = spaces.coarse
            prob = _coarse_problem(energy, u, Au, E, P, A0)
            try:
                if smooth:
                    c, rep = damped_newton(prob, tol=config.local_tol)
                else:
                    c, rep = coarse_dual_afgm(prob, tol=config.local_tol,
                                              lipschitz=spaces.dual_lipschitz)
            except SchwarzlinError as exc:
                raise SubdomainSolveError(0, exc) from exc
            update += P @ c
            step_reports.append((0, rep))
        for k, (dofs, Ak, nl, L) in enumerate(spaces.local, start=1):
            prob = _local_problem(energy, u, Au, E, dofs, Ak, nl)
            try:
                if smooth:
                    wk, rep = damped_newton(prob, tol=config.local_tol)
                else:
                    wk, rep = afgm(prob, tol=config.local_tol, lipschitz=L,
                                   max_iter=config.max_inner)
                    if rep.reason is not Termination.TOLERANCE:
                        raise MaxIterationsError(f"AFGM stopped: {rep.reason.value}")
            except SchwarzlinError as exc:
                raise SubdomainSolveError(k, exc) from exc
            update[dofs] += wk
            step_reports.append((k, rep))
        u = u + config.tau * update
        E_new = energy.value(u)
        if E_new > E + MONOTONICITY_SLACK * max(1.0, abs(E)):
            raise AlgorithmicRegressionError(
                f"energy increased at outer step {n + 1}: {E:.17g} -> {E_new:.17g}"
            )
        E = E_new
        energies.append(E)
        iterates.append(u.copy())
        reports.append(step_reports)
        if callback is not None:
            callback(n + 1, u, E)
    return SchwarzResult(energies, iterates, reports)


# ---------------------------------------------------------------------------
# Reference solutions


def _model_key(model: NonlinearModel, load_tag: str) -> str:
    payload = json.dumps({"model": model.name, "params": model.params, "load": load_tag},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


class ReferenceCache:
    """Text vector dumps with a ``ref-cache v1 <problem> <hash> <n>`` header."""

    def __init__(self, directory=None):
        directory = directory or os.environ.get("SCHWARZLIN_CACHE")
        self.directory = Path(directory) if directory else None

    def path(self, problem, key, n):
        return self.directory / f"ref-{problem}-{key}-{n}.txt"

    @staticmethod
    def header(problem, key, n):
        return f"ref-cache v1 {problem} {key} {n}"

    def load(self, problem, key, n):
        if self.directory is None:
            return None
        path = self.path(problem, key, n)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            if fh.readline().rstrip("\n") != self.header(problem, key, n):
                log.info("discarding stale reference cache %s", path)
                return None
            values = np.array([float(line) for line in fh if line.strip()])
        return values if values.size == (n - 1) ** 2 else None

    def store(self, problem, key, n, values):
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path(problem, key, n)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.header(problem, key, n) + "\n")
            fh.writelines(f"{v:.17e}\n" for v in values)
        tmp.replace(path)


def _polish_l1(energy: DiscreteEnergy, u):
    """Exact minimiser on the sign pattern of ``u``, or None if it is not optimal.

    On a fixed sign pattern the L1 energy is quadratic; the candidate is
    accepted only if it keeps the signs and satisfies the subgradient bound
    on the zero set.
    """
    alpha = energy.model.params["alpha"]
    g = energy.nonlinearity.g
    w = energy.weights
    support = np.flatnonzero(u != 0)
    signs = np.sign(u[support])
    cand = np.zeros_like(u)
    if support.size:
        A_ss = sp.csc_matrix(energy.A[support][:, support])
        cand[support] = spla.spsolve(A_ss, w[support] * (g[support] - alpha * signs))
    resid = energy.A @ cand - w * g
    zero = np.setdiff1d(np.arange(u.size), support)
    if np.all(np.sign(cand[support]) == signs) and np.all(
        np.abs(resid[zero]) <= w[zero] * alpha * (1 + 1e-12)
    ):
        return cand
    return None


def solve_reference(energy: DiscreteEnergy, init=None):
    """Minimise E_h over the full space; returns ``(u, SolverReport)``.

    Smooth models use damped Newton until the relative energy change drops
    below 1e-14 and the gradient norm below 1e-12.  The L1 model uses AFGM
    followed by an exact solve on the detected sign pattern.
    """
    problem = _full_problem(energy)
    if energy.model.smooth:
        u, rep = damped_newton(problem, init=init, tol=1e-14, max_iter=200, grad_tol=1e-16)
        iterations = rep.iterations
        while np.linalg.norm(energy.gradient(u)) >= 1e-12 and iterations < 200:
            u, more = damped_newton(problem, init=u, tol=0.0, max_iter=1, grad_tol=0.0)
            iterations += more.iterations
        if np.linalg.norm(energy.gradient(u)) >= 1e-12:
            raise MaxIterationsError(
                f"reference Newton stalled: |grad| = {np.linalg.norm(energy.gradient(u)):.3e}"
            )
    else:
        u, rep = afgm(problem, init=init, tol=1e-15, max_iter=500000)
        iterations = rep.iterations
        polished = _polish_l1(energy, u)
        if polished is not None and energy.value(polished) <= energy.value(u):
            u = polished
        elif rep.reason is not Termination.TOLERANCE:
            raise MaxIterationsError(f"reference AFGM did not converge ({iterations} steps)")
    return u, SolverReport(iterations, energy.value(u), Termination.TOLERANCE)


def reference_solution(mesh: StructuredMesh, model: NonlinearModel, load_tag: str = "",
                       cache: ReferenceCache | None = None, energy: DiscreteEnergy | None = None):
    """Cached full-space minimiser of E_h as a dof vector.

    ``load_tag`` names the load used to build ``model`` and becomes part of
    the cache key, since loads are arbitrary callables.
    """
    cache = cache or ReferenceCache()
    key = _model_key(model, load_tag)
    cached = cache.load(model.name, key, mesh.n)
    if cached is not None:
        return cached
    energy = energy or DiscreteEnergy(mesh, model)
    u, rep = solve_reference(energy)
    log.info("reference %s n=%d: %d iterations, E=%.17g", model.name, mesh.n, rep.iterations,
             rep.objective)
    cache.store(model.name, key, mesh.n, u)
    return u


def _full_problem(energy: DiscreteEnergy) -> SubspaceProblem:
    n = energy.size
    return SubspaceProblem(energy.A, np.zeros(n), energy.weights, energy.nonlinearity,
                           np.zeros(n), None, energy.boundary_constant)
