"""Uniform right-triangle meshes of the unit square.

Vertex ``(i, j)`` sits at ``(i/n, j/n)`` and has global id ``j*(n+1) + i``.
Every grid square ``[i, i+1] x [j, j+1]`` is cut along the diagonal from its
lower-left to its upper-right corner, so a mesh with ``n = r*N`` is an exact
refinement of the mesh with ``N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import IncompatibleMeshesError, InvalidMeshError

__all__ = [
    "StructuredMesh",
    "build_uniform_mesh",
    "refinement_factor",
    "nodal_weights",
    "p1_prolongation",
]


@dataclass(frozen=True)
class StructuredMesh:
    """Triangulation of (0,1)^2 with ``n`` subdivisions per side."""

    n: int
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidMeshError(f"need an integer n >= 2, got {self.n!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_vertices(self) -> int:
        return (self.n + 1) ** 2

    @property
    def num_elements(self) -> int:
        return 2 * self.n**2

    @property
    def num_dofs(self) -> int:
        return (self.n - 1) ** 2

    def vertex_id(self, i, j):
        return np.asarray(j) * (self.n + 1) + np.asarray(i)

    @cached_property
    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer grid coordinates ``(i, j)`` of every vertex."""
        j, i = np.divmod(np.arange(self.num_vertices), self.n + 1)
        return i, j

    @cached_property
    def coordinates(self) -> np.ndarray:
        i, j = self.grid
        return np.column_stack([i, j]) / self.n

    @cached_property
    def elements(self) -> np.ndarray:
        """``(2n^2, 3)`` vertex ids, counter-clockwise."""
        n = self.n
        j, i = np.divmod(np.arange(n * n), n)
        v00 = self.vertex_id(i, j)
        v10 = v00 + 1
        v01 = v00 + n + 1
        v11 = v01 + 1
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        return np.stack([lower, upper], axis=1).reshape(-1, 3)

    @property
    def element_area(self) -> float:
        return 0.5 * self.h**2

    @cached_property
    def is_boundary(self) -> np.ndarray:
        i, j = self.grid
        return (i == 0) | (j == 0) | (i == self.n) | (j == self.n)

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        """Global ids of interior vertices; position in this array is the dof index."""
        return np.flatnonzero(~self.is_boundary)

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Dof index of every vertex, ``-1`` on the boundary."""
        idx = np.full(self.num_vertices, -1, dtype=np.intp)
        idx[self.interior_vertices] = np.arange(self.num_dofs)
        return idx

    def to_full(self, u_interior: np.ndarray) -> np.ndarray:
        """Embed a dof vector as a nodal vector with zero boundary values."""
        u = np.zeros(self.num_vertices, dtype=np.result_type(u_interior, float))
        u[self.interior_vertices] = u_interior
        return u

    def to_interior(self, u_full: np.ndarray) -> np.ndarray:
        return np.asarray(u_full)[self.interior_vertices]


def build_uniform_mesh(n: int) -> StructuredMesh:
    return StructuredMesh(n)


def refinement_factor(fine: StructuredMesh, coarse: StructuredMesh) -> int:
    """Number of fine cells per coarse cell along each axis."""
    if fine.n % coarse.n:
        raise IncompatibleMeshesError(
            f"fine mesh n={fine.n} does not refine coarse mesh n={coarse.n}"
        )
    return fine.n // coarse.n


def nodal_weights(mesh: StructuredMesh) -> np.ndarray:
    """Trapezoidal-rule weights ``sum_{T containing x} |T|/3`` per vertex."""
    key = "nodal_weights"
    if key not in mesh._cache:
        w = np.zeros(mesh.num_vertices)
        np.add.at(w, mesh.elements.ravel(), mesh.element_area / 3.0)
        w.flags.writeable = False
        mesh._cache[key] = w
    return mesh._cache[key]


def _hat_1d_pair(s, t):
    """Value of the P1 hat centred at the origin, at offsets ``(s, t)`` in cell units."""
    same = s * t >= 0
    val = np.where(same, 1.0 - np.maximum(np.abs(s), np.abs(t)), 1.0 - np.abs(s - t))
    return np.maximum(val, 0.0)


def p1_prolongation(coarse: StructuredMesh, fine: StructuredMesh, interior_only=True):
    """Sparse matrix evaluating coarse P1 functions at fine vertices.

    Rows index fine vertices (or fine dofs if ``interior_only``), columns
    coarse dofs (or coarse vertices).  Exact because the meshes are nested.
    """
    r = refinement_factor(fine, coarse)
    fi, fj = fine.grid
    rows, cols, vals = [], [], []
    # Each fine vertex touches at most the 4 corners of its coarse cell.
    ci = np.minimum(fi // r, coarse.n - 1)
    cj = np.minimum(fj // r, coarse.n - 1)
    for di in (0, 1):
        for dj in (0, 1):
            I, J = ci + di, cj + dj
            val = _hat_1d_pair((fi - I * r) / r, (fj - J * r) / r)
            keep = val > 0
            rows.append(np.flatnonzero(keep))
            cols.append(coarse.vertex_id(I[keep], J[keep]))
            vals.append(val[keep])
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(fine.num_vertices, coarse.num_vertices),
    )
    if interior_only:
        P = P[fine.interior_vertices][:, coarse.interior_vertices]
    return P.tocsr()
