"""P1 assembly and the discrete energy E_h(u) = a(u,u)/2 + sum_x w_x phi(x, u(x)).

Public functions take nodal vectors over *all* vertices (boundary entries
must be zero).  :class:`DiscreteEnergy` is the workhorse used by the solvers
and works on dof vectors (interior vertices only).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ConvexityViolationError
from .mesh import StructuredMesh, nodal_weights
from .models import NonlinearModel

__all__ = [
    "element_stiffness",
    "assemble_full_stiffness",
    "assemble_stiffness",
    "DiscreteEnergy",
    "energy",
    "gradient",
    "hessian",
    "interpolate",
    "h1_error",
    "l2_error",
    "l1_interpolation_error",
]

# Edge midpoints in barycentric coordinates; weights |T|/3 each.
_MIDPOINT_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def element_stiffness(mesh: StructuredMesh) -> np.ndarray:
    """Local stiffness matrices, shape ``(num_elements, 3, 3)``."""
    p = mesh.coordinates[mesh.elements]
    grads = _element_gradients(p)
    area = 0.5 * np.abs(_cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]))
    return area[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _element_gradients(p):
    """Gradients of the three barycentric hats on each triangle ``p`` (E,3,2)."""
    d = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    grads = np.empty_like(p)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        e = p[:, c] - p[:, b]
        grads[:, a, 0] = -e[:, 1] / d
        grads[:, a, 1] = e[:, 0] / d
    return grads


def assemble_full_stiffness(mesh: StructuredMesh) -> sp.csr_matrix:
    key = "full_stiffness"
    if key not in mesh._cache:
        ke = element_stiffness(mesh)
        el = mesh.elements
        rows = np.repeat(el, 3, axis=1).ravel()
        cols = np.tile(el, (1, 3)).ravel()
        K = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(mesh.num_vertices,) * 2)
        K.eliminate_zeros()
        mesh._cache[key] = K
    return mesh._cache[key]


def assemble_stiffness(mesh: StructuredMesh) -> sp.csr_matrix:
    """Stiffness matrix a(phi_x, phi_y) on the interior dofs."""
    key = "stiffness"
    if key not in mesh._cache:
        K = assemble_full_stiffness(mesh)
        iv = mesh.interior_vertices
        A = K[iv][:, iv].tocsr()
        # Hypotenuse couplings cancel to rounding level; drop them.
        A.data[np.abs(A.data) < 1e-12] = 0.0
        A.eliminate_zeros()
        mesh._cache[key] = A
    return mesh._cache[key]


class DiscreteEnergy:
    """E_h restricted to dof vectors.

    ``value(u)`` includes the boundary-vertex contribution sum w_x phi(x, 0),
    which is constant on S_h.
    """

    def __init__(self, mesh: StructuredMesh, model: NonlinearModel):
        self.mesh = mesh
        self.model = model
        self.A = assemble_stiffness(mesh)
        w = nodal_weights(mesh)
        iv = mesh.interior_vertices
        self.weights = w[iv]
        self.nonlinearity = model.at(mesh.coordinates[iv])
        bdry = np.flatnonzero(mesh.is_boundary)
        bound = model.at(mesh.coordinates[bdry])
        self.boundary_constant = float(np.sum(w[bdry] * bound.phi(np.zeros(bdry.size))))

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def dirichlet(self, u):
        return 0.5 * float(u @ (self.A @ u))

    def separable(self, u):
        return float(self.weights @ self.nonlinearity.phi(u)) + self.boundary_constant

    def value(self, u):
        return self.dirichlet(u) + self.separable(u)

    def gradient(self, u):
        return self.A @ u + self.weights * self.nonlinearity.dphi(u)

    def hessian_diagonal(self, u):
        d2 = self.nonlinearity.d2phi(u)
        if np.any(d2 < 0):
            k = int(np.flatnonzero(d2 < 0)[0])
            raise ConvexityViolationError(f"negative second derivative at dof {k}")
        return self.weights * d2

    def hessian(self, u):
        return (self.A + sp.diags(self.hessian_diagonal(u))).tocsr()


def _checked_interior(mesh, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.num_vertices,):
        raise ValueError(f"expected a nodal vector of length {mesh.num_vertices}")
    if np.any(u[mesh.is_boundary] != 0):
        raise ValueError("nodal function does not vanish on the boundary")
    return u[mesh.interior_vertices]


def energy(mesh: StructuredMesh, model: NonlinearModel, u) -> float:
    return DiscreteEnergy(mesh, model).value(_checked_interior(mesh, u))


def gradient(mesh: StructuredMesh, model: NonlinearModel, u) -> np.ndarray:
    """Gradient of :func:`energy` with respect to the dof values."""
    return DiscreteEnergy(mesh, model).gradient(_checked_interior(mesh, u))


def hessian(mesh: StructuredMesh, model: NonlinearModel, u) -> sp.csr_matrix:
    return DiscreteEnergy(mesh, model).hessian(_checked_interior(mesh, u))


def interpolate(mesh: StructuredMesh, func) -> np.ndarray:
    """Nodal interpolant: ``func`` evaluated at every vertex."""
    return np.asarray(func(mesh.coordinates), dtype=float)


def _midpoints(mesh):
    p = mesh.coordinates[mesh.elements]
    return np.einsum("qa,ead->eqd", _MIDPOINT_BARY, p)


def h1_error(mesh: StructuredMesh, u, exact_grad) -> float:
    """|u - u*|_{H^1} by the edge-midpoint rule (exact for quadratics)."""
    p = mesh.coordinates[mesh.elements]
    grads = _element_gradients(p)
    grad_u = np.einsum("ea,ead->ed", np.asarray(u)[mesh.elements], grads)
    diff = exact_grad(_midpoints(mesh)) - grad_u[:, None, :]
    return float(np.sqrt(mesh.element_area / 3.0 * np.sum(diff**2)))


def l2_error(mesh: StructuredMesh, u, exact) -> float:
    vals = np.einsum("qa,ea->eq", _MIDPOINT_BARY, np.asarray(u)[mesh.elements])
    diff = exact(_midpoints(mesh)) - vals
    return float(np.sqrt(mesh.element_area / 3.0 * np.sum(diff**2)))


def l1_interpolation_error(mesh: StructuredMesh, func) -> float:
    """||v - I_h v||_{L^1} by the edge-midpoint rule."""
    u = interpolate(mesh, func)
    vals = np.einsum("qa,ea->eq", _MIDPOINT_BARY, u[mesh.elements])
    return float(mesh.element_area / 3.0 * np.sum(np.abs(func(_midpoints(mesh)) - vals)))
