"""Overlapping box decompositions, partition of unity, and the coarse level.

Subdomain ``k`` owns the coarse cell ``(I, J)``, ``k = J*N + I``.  Its
extended region is the cell dilated by ``overlap_layers`` fine cells in each
direction and clipped to the unit square; all index arithmetic is done on
the fine integer grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ColoringViolationError, CoveringError, IncompatibleMeshesError, MissingCoarseLevelError
from .fem import assemble_stiffness
from .mesh import StructuredMesh, p1_prolongation, refinement_factor

__all__ = [
    "Subdomain",
    "CoarseLevel",
    "DomainDecomposition",
    "build_decomposition",
    "build_partition_of_unity",
    "color_subdomains",
    "restrict",
    "extend_by_zero",
    "prolongate",
    "coarse_gradient_transpose",
    "coarse_interpolate_JH",
    "stable_decomposition_one_level",
    "stable_decomposition_two_level",
]


@dataclass
class Subdomain:
    index: int
    cell: tuple[int, int]
    # Closed fine-grid box [i0, i1] x [j0, j1] of the extended region.
    box: tuple[int, int, int, int]
    vertices: np.ndarray  # global ids of fine vertices strictly inside the box and inside Omega
    dofs: np.ndarray  # the same vertices as fine dof indices
    theta: np.ndarray | None = None  # partition-of-unity values at every fine vertex
    color: int = -1

    @property
    def size(self) -> int:
        return self.dofs.size


@dataclass
class CoarseLevel:
    mesh: StructuredMesh
    prolongation: sp.csr_matrix  # fine dofs x coarse dofs
    stiffness: sp.csr_matrix
    patches: list = field(repr=False)  # fine vertex ids of each closed coarse patch

    @property
    def size(self) -> int:
        return self.stiffness.shape[0]


@dataclass
class DomainDecomposition:
    fine: StructuredMesh
    coarse_n: int
    overlap_layers: int
    subdomains: list
    coarse_level: CoarseLevel | None = None

    @property
    def N(self) -> int:
        return len(self.subdomains)

    @property
    def delta(self) -> float:
        return self.overlap_layers * self.fine.h

    @property
    def two_level(self) -> bool:
        return self.coarse_level is not None

    @property
    def num_colors(self) -> int:
        return len({s.color for s in self.subdomains})


def build_decomposition(
    fine: StructuredMesh,
    coarse: StructuredMesh | int,
    overlap_layers: int,
    two_level: bool = False,
) -> DomainDecomposition:
    """Build the N = coarse.n**2 overlapping subdomains, their PoU and colours.

    ``coarse`` may be a bare cell count; ``1`` gives a single subdomain
    covering the whole square (one-level only).
    """
    coarse_n = coarse if isinstance(coarse, int) else coarse.n
    if coarse_n < 1 or fine.n % coarse_n:
        raise IncompatibleMeshesError(f"fine mesh n={fine.n} does not refine n={coarse_n}")
    r = fine.n // coarse_n
    if not 1 <= overlap_layers < r and coarse_n > 1:
        raise IncompatibleMeshesError(
            f"overlap of {overlap_layers} layers must be in [1, {r - 1}] for H/h = {r}"
        )
    n, L = fine.n, overlap_layers
    fi, fj = fine.grid
    subdomains = []
    for J in range(coarse_n):
        for I in range(coarse_n):
            box = (
                max(I * r - L, 0),
                min((I + 1) * r + L, n),
                max(J * r - L, 0),
                min((J + 1) * r + L, n),
            )
            inside = (
                (fi > box[0]) & (fi < box[1]) & (fj > box[2]) & (fj < box[3]) & ~fine.is_boundary
            )
            verts = np.flatnonzero(inside)
            subdomains.append(
                Subdomain(
                    index=len(subdomains),
                    cell=(I, J),
                    box=box,
                    vertices=verts,
                    dofs=fine.interior_index[verts],
                )
            )
    decomp = DomainDecomposition(fine, coarse_n, overlap_layers, subdomains)
    _check_covering(decomp)
    build_partition_of_unity(decomp)
    color_subdomains(decomp)
    if two_level:
        if isinstance(coarse, int):
            coarse = StructuredMesh(coarse)
        decomp.coarse_level = build_coarse_level(fine, coarse)
    return decomp


def _check_covering(decomp):
    counts = np.zeros(decomp.fine.num_dofs, dtype=int)
    for s in decomp.subdomains:
        counts[s.dofs] += 1
    if np.any(counts == 0):
        raise CoveringError(f"{np.count_nonzero(counts == 0)} fine dofs are not covered")


def build_partition_of_unity(decomp: DomainDecomposition) -> None:
    """Set ``theta`` on every subdomain from capped layer distances.

    d_k(x) is the number of fine layers between x and the part of the
    subdomain boundary lying inside Omega, capped at ``overlap_layers`` and
    scaled to [0, 1]; theta_k = d_k / sum_j d_j.
    """
    fine, L = decomp.fine, decomp.overlap_layers
    n = fine.n
    fi, fj = fine.grid
    dist = np.zeros((decomp.N, fine.num_vertices))
    for s in decomp.subdomains:
        i0, i1, j0, j1 = s.box
        inbox = (fi >= i0) & (fi <= i1) & (fj >= j0) & (fj <= j1)
        d = np.full(fine.num_vertices, float(L))
        # Sides clipped by the outer boundary are not interfaces.
        if i0 > 0:
            d = np.minimum(d, fi - i0)
        if i1 < n:
            d = np.minimum(d, i1 - fi)
        if j0 > 0:
            d = np.minimum(d, fj - j0)
        if j1 < n:
            d = np.minimum(d, j1 - fj)
        dist[s.index] = np.where(inbox, np.maximum(d, 0) / L, 0.0)
    total = dist.sum(axis=0)
    if np.any(total <= 0):
        raise CoveringError("partition of unity undefined: a vertex lies in no subdomain interior")
    theta = dist / total
    for s in decomp.subdomains:
        s.theta = theta[s.index]


def color_subdomains(decomp: DomainDecomposition) -> list[int]:
    """2x2 checkerboard colouring, validated against dof overlap."""
    for s in decomp.subdomains:
        I, J = s.cell
        s.color = (I % 2) + 2 * (J % 2)
    owner = {}
    for s in decomp.subdomains:
        mask = owner.setdefault(s.color, np.zeros(decomp.fine.num_dofs, dtype=bool))
        if np.any(mask[s.dofs]):
            raise ColoringViolationError(
                f"subdomain {s.index} overlaps another subdomain of colour {s.color}; "
                f"overlap of {decomp.overlap_layers} layers is too large"
            )
        mask[s.dofs] = True
    # Renumber colours densely so that N < 4 reports fewer colours.
    used = sorted({s.color for s in decomp.subdomains})
    remap = {c: k for k, c in enumerate(used)}
    for s in decomp.subdomains:
        s.color = remap[s.color]
    return [s.color for s in decomp.subdomains]


def build_coarse_level(fine: StructuredMesh, coarse: StructuredMesh) -> CoarseLevel:
    r = refinement_factor(fine, coarse)
    P = p1_prolongation(coarse, fine)
    fi, fj = fine.grid
    patches = []
    for vid in coarse.interior_vertices:
        I, J = vid % (coarse.n + 1), vid // (coarse.n + 1)
        a, b = fi - I * r, fj - J * r
        # Closed union of the six coarse triangles around (I, J).
        inpatch = (np.abs(a) <= r) & (np.abs(b) <= r) & (np.abs(a - b) <= r)
        patches.append(np.flatnonzero(inpatch))
    return CoarseLevel(coarse, P, assemble_stiffness(coarse), patches)


def restrict(subdomain: Subdomain, u: np.ndarray) -> np.ndarray:
    """Dof values of a fine dof vector on the subdomain."""
    return np.asarray(u)[subdomain.dofs]


def extend_by_zero(subdomain: Subdomain, w: np.ndarray, num_dofs: int) -> np.ndarray:
    w = np.asarray(w)
    if w.shape != subdomain.dofs.shape:
        raise ValueError(f"local vector has length {w.size}, subdomain has {subdomain.size} dofs")
    out = np.zeros(num_dofs, dtype=np.result_type(w, float))
    out[subdomain.dofs] = w
    return out


def _coarse(decomp_or_level):
    level = getattr(decomp_or_level, "coarse_level", decomp_or_level)
    if level is None:
        raise MissingCoarseLevelError("decomposition has no coarse level")
    return level


def prolongate(level, c: np.ndarray) -> np.ndarray:
    """Coarse dof vector -> fine dof vector (exact P1 embedding)."""
    return _coarse(level).prolongation @ c


def coarse_gradient_transpose(level, residual: np.ndarray) -> np.ndarray:
    return _coarse(level).prolongation.T @ residual


def coarse_interpolate_JH(level, u_full: np.ndarray) -> np.ndarray:
    """Positivity-preserving coarse interpolant, returned as coarse dof values.

    At each coarse interior vertex the value is max(min u, 0) + min(max u, 0)
    over the fine vertices of its closed patch.
    """
    level = _coarse(level)
    u_full = np.asarray(u_full)
    out = np.empty(len(level.patches))
    for k, patch in enumerate(level.patches):
        vals = u_full[patch]
        out[k] = max(vals.min(), 0.0) + min(vals.max(), 0.0)
    return out


def stable_decomposition_one_level(decomp: DomainDecomposition, w_full: np.ndarray) -> list:
    """Local parts w_k = I_h(theta_k w) on each subdomain's dofs."""
    w_full = np.asarray(w_full)
    return [s.theta[s.vertices] * w_full[s.vertices] for s in decomp.subdomains]


def stable_decomposition_two_level(decomp: DomainDecomposition, w_full: np.ndarray):
    """(w_0, [w_k]) with w_0 = J_H w and w_k = I_h(theta_k (w - R_0^* w_0))."""
    level = _coarse(decomp)
    fine = decomp.fine
    w0 = coarse_interpolate_JH(level, w_full)
    rest = np.asarray(w_full) - fine.to_full(prolongate(level, w0))
    return w0, stable_decomposition_one_level(decomp, rest)

