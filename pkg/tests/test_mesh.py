import numpy as np
import pytest

from schwarzlin.errors import IncompatibleMeshesError, InvalidMeshError
from schwarzlin.mesh import build_uniform_mesh, nodal_weights, p1_prolongation, refinement_factor


@pytest.mark.parametrize("n,vertices,elements,dofs", [(2, 9, 8, 1), (32, 33**2, 2 * 32**2, 961)])
def test_counts(n, vertices, elements, dofs):
    mesh = build_uniform_mesh(n)
    assert mesh.num_vertices == vertices
    assert mesh.num_elements == elements
    assert mesh.num_dofs == dofs
    assert mesh.h == 1.0 / n


def test_invalid_size():
    with pytest.raises(InvalidMeshError):
        build_uniform_mesh(1)


def test_element_areas_n4():
    mesh = build_uniform_mesh(4)
    p = mesh.coordinates[mesh.elements]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    np.testing.assert_allclose(areas, 1 / 32, rtol=0, atol=1e-15)
    assert mesh.element_area == 1 / 32


def test_incidence():
    mesh = build_uniform_mesh(8)
    counts = np.bincount(mesh.elements.ravel(), minlength=mesh.num_vertices)
    assert np.all(counts[mesh.interior_vertices] == 6)
    # sum over vertices of incident areas counts every triangle three times
    assert counts.sum() * mesh.element_area == pytest.approx(3.0, abs=1e-14)


def test_same_diagonal_everywhere():
    mesh = build_uniform_mesh(6)
    p = mesh.coordinates[mesh.elements]
    # each triangle has exactly one edge along (1, 1)
    for tri in p:
        edges = [tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2]]
        diag = [e for e in edges if abs(e[0]) > 0 and abs(e[1]) > 0]
        assert len(diag) == 1
        assert diag[0][0] * diag[0][1] > 0


@pytest.mark.parametrize("fine,coarse,r", [(32, 4, 8), (8, 8, 1)])
def test_refinement_factor(fine, coarse, r):
    assert refinement_factor(build_uniform_mesh(fine), build_uniform_mesh(coarse)) == r


def test_refinement_incompatible():
    with pytest.raises(IncompatibleMeshesError):
        refinement_factor(build_uniform_mesh(12), build_uniform_mesh(5))


def _weights_by_loop(mesh):
    w = np.zeros(mesh.num_vertices)
    for tri in mesh.coordinates[mesh.elements]:
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
        for v in tri:
            w[mesh.vertex_id(*np.rint(v * mesh.n).astype(int))] += area / 3
    return w


@pytest.mark.parametrize("n", [2, 5, 16])
def test_nodal_weights(n):
    mesh = build_uniform_mesh(n)
    w = nodal_weights(mesh)
    np.testing.assert_allclose(w, _weights_by_loop(mesh), rtol=0, atol=1e-16)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(w[mesh.interior_vertices], mesh.h**2, rtol=1e-14)


def test_single_triangle_corners():
    mesh = build_uniform_mesh(8)
    w = nodal_weights(mesh)
    counts = np.bincount(mesh.elements.ravel(), minlength=mesh.num_vertices)
    lonely = np.flatnonzero(counts == 1)
    assert set(lonely) == {mesh.vertex_id(8, 0), mesh.vertex_id(0, 8)}
    np.testing.assert_allclose(w[lonely], mesh.h**2 / 6, rtol=1e-14)


def test_interior_index_bijection():
    mesh = build_uniform_mesh(7)
    idx = mesh.interior_index[mesh.interior_vertices]
    assert sorted(idx) == list(range(36))
    assert np.all(mesh.interior_index[mesh.is_boundary] == -1)
    u = np.arange(36.0)
    np.testing.assert_array_equal(mesh.to_interior(mesh.to_full(u)), u)


def test_refine_then_embed_recovers_coarse():
    rng = np.random.default_rng(3)
    coarse, fine = build_uniform_mesh(4), build_uniform_mesh(16)
    P = p1_prolongation(coarse, fine, interior_only=False)
    c = rng.standard_normal(coarse.num_vertices)
    u = P @ c
    # reading the fine values at the coarse vertex positions gives c back
    back = u[[fine.vertex_id(4 * i, 4 * j) for j in range(5) for i in range(5)]]
    np.testing.assert_array_equal(back, c)


def test_mesh_is_immutable():
    mesh = build_uniform_mesh(4)
    with pytest.raises(Exception):
        mesh.n = 5
    with pytest.raises(ValueError):
        nodal_weights(mesh)[0] = 1.0
