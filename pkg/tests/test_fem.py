import numpy as np
import pytest
import scipy.sparse.linalg as spla

from schwarzlin.errors import ConvexityViolationError, NumericOverflowError, UnsupportedOperationError
from schwarzlin.fem import (
    DiscreteEnergy,
    assemble_stiffness,
    energy,
    gradient,
    h1_error,
    hessian,
    interpolate,
    l1_interpolation_error,
)
from schwarzlin.harness.checks import check_derivatives, fd_gradient_error, fd_hessian_error, fit_order
from schwarzlin.mesh import build_uniform_mesh, nodal_weights
from schwarzlin.models import (
    NonlinearModel,
    exact_gradient,
    exact_solution,
    l1_model,
    manufactured_rhs,
    monomial_model,
    poisson_boltzmann_model,
)


def _brute_dirichlet(mesh, u):
    """Element loop: sum over triangles of |T| |grad u|^2 with a 2x2 solve per triangle."""
    total = 0.0
    for tri in mesh.elements:
        p = mesh.coordinates[tri]
        M = np.array([p[1] - p[0], p[2] - p[0]])
        g = np.linalg.solve(M, [u[tri[1]] - u[tri[0]], u[tri[2]] - u[tri[0]]])
        area = 0.5 * abs(np.linalg.det(M))
        total += area * (g @ g)
    return total


def _u_star(mesh):
    u = interpolate(mesh, exact_solution)
    u[mesh.is_boundary] = 0.0  # sin(pi) is 1e-16, not 0
    return u


def test_interior_stencil():
    mesh = build_uniform_mesh(6)
    A = assemble_stiffness(mesh).toarray()
    k = mesh.interior_index[mesh.vertex_id(3, 3)]
    row = A[k]
    assert row[k] == pytest.approx(4.0, abs=1e-14)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        assert row[mesh.interior_index[mesh.vertex_id(3 + di, 3 + dj)]] == pytest.approx(-1.0, abs=1e-14)
    for di, dj in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
        assert row[mesh.interior_index[mesh.vertex_id(3 + di, 3 + dj)]] == 0.0
    assert np.count_nonzero(row) == 5


@pytest.mark.parametrize("n", [2, 4, 16])
def test_basis_energy_is_four(n):
    mesh = build_uniform_mesh(n)
    A = assemble_stiffness(mesh)
    np.testing.assert_allclose(A.diagonal(), 4.0, rtol=1e-14)


def test_stiffness_symmetric_and_linear():
    A = assemble_stiffness(build_uniform_mesh(10))
    assert abs(A - A.T).max() == 0.0
    assert np.all(A @ np.zeros(A.shape[0]) == 0)


def test_stiffness_against_element_loop():
    rng = np.random.default_rng(0)
    mesh = build_uniform_mesh(8)
    A = assemble_stiffness(mesh)
    u = mesh.to_full(rng.standard_normal(mesh.num_dofs))
    ui = mesh.to_interior(u)
    assert ui @ (A @ ui) == pytest.approx(_brute_dirichlet(mesh, u), rel=1e-12)


def test_energy_zero_for_monomial_at_zero():
    mesh = build_uniform_mesh(8)
    model = monomial_model(10.0, 3, manufactured_rhs("monomial", 10.0, 3))
    assert energy(mesh, model, np.zeros(mesh.num_vertices)) == 0.0


def test_pb_energy_at_zero_is_one():
    mesh = build_uniform_mesh(8)
    assert energy(mesh, poisson_boltzmann_model(1.0), np.zeros(mesh.num_vertices)) == pytest.approx(1.0, abs=1e-14)


def test_laplace_energy_brute_force_n4():
    mesh = build_uniform_mesh(4)
    u = _u_star(mesh)
    E = energy(mesh, monomial_model(0.0, 2), u)
    assert E == pytest.approx(0.5 * _brute_dirichlet(mesh, u), rel=1e-13)


def test_energy_rejects_boundary_values():
    mesh = build_uniform_mesh(4)
    u = np.ones(mesh.num_vertices)
    with pytest.raises(ValueError):
        energy(mesh, monomial_model(0.0, 2), u)


def test_pb_overflow_names_vertex():
    mesh = build_uniform_mesh(4)
    e = DiscreteEnergy(mesh, poisson_boltzmann_model(10.0))
    u = np.zeros(e.size)
    u[3] = 100.0
    with pytest.raises(NumericOverflowError) as info:
        e.value(u)
    assert info.value.vertex == 3


def test_gradient_finite_differences():
    rng = np.random.default_rng(1)
    mesh = build_uniform_mesh(12)
    for model in (monomial_model(10.0, 3, manufactured_rhs("monomial", 10.0, 3)),
                  poisson_boltzmann_model(1.0, manufactured_rhs("pb", 1.0))):
        e = DiscreteEnergy(mesh, model)
        u, v = 0.5 * rng.standard_normal(e.size), rng.standard_normal(e.size)
        errs = [abs((e.value(u + eps * v) - e.value(u - eps * v)) / (2 * eps) - e.gradient(u) @ v)
                for eps in (1e-3, 1e-4)]
        # central differences: error drops by ~100 when eps drops by 10
        assert errs[1] < errs[0] / 30
        assert fd_gradient_error(e, u, v) < 1e-7
        assert fd_hessian_error(e, u, v) < 1e-7


def test_pure_laplace_gradient_with_load():
    mesh = build_uniform_mesh(8)
    g = manufactured_rhs("monomial", 0.0, 2)
    model = monomial_model(0.0, 2, g)
    u = _u_star(mesh)
    e = DiscreteEnergy(mesh, model)
    expected = e.A @ mesh.to_interior(u) - e.weights * g(mesh.coordinates[mesh.interior_vertices])
    np.testing.assert_allclose(gradient(mesh, model, u), expected, atol=1e-14)


class _SignFlipped:
    """Energy whose gradient has an injected sign error."""

    def __init__(self, inner):
        self.inner = inner
        self.size = inner.size

    def value(self, u):
        return self.inner.value(u)

    def gradient(self, u):
        return -self.inner.gradient(u)

    def hessian(self, u):
        return self.inner.hessian(u)


def test_mutated_gradient_is_caught():
    mesh = build_uniform_mesh(16)
    good = DiscreteEnergy(mesh, poisson_boltzmann_model(1.0, manufactured_rhs("pb", 1.0)))
    rng = np.random.default_rng(0)
    res = {r.name: r.ok for r in check_derivatives(rng, {"good": good, "bad": _SignFlipped(good)})}
    assert res["gradient/good"] and res["hessian/good"]
    assert not res["gradient/bad"] and not res["hessian/bad"]


def test_gradient_unsupported_for_l1():
    mesh = build_uniform_mesh(4)
    with pytest.raises(UnsupportedOperationError):
        gradient(mesh, l1_model(1.0), np.zeros(mesh.num_vertices))


def test_hessian_monomial_quadratic():
    mesh = build_uniform_mesh(8)
    alpha = 3.0
    H = hessian(mesh, monomial_model(alpha, 2), _u_star(mesh))
    w = nodal_weights(mesh)[mesh.interior_vertices]
    expected = assemble_stiffness(mesh).toarray() + alpha * np.diag(w)
    np.testing.assert_allclose(H.toarray(), expected, atol=1e-14)


def test_hessian_pb_at_zero():
    mesh = build_uniform_mesh(8)
    H = hessian(mesh, poisson_boltzmann_model(1.0), np.zeros(mesh.num_vertices))
    D = H - assemble_stiffness(mesh)
    np.testing.assert_allclose(D.diagonal(), nodal_weights(mesh)[mesh.interior_vertices], rtol=1e-15)


def test_hessian_negative_curvature_rejected():
    mesh = build_uniform_mesh(4)
    bad = NonlinearModel(name="concave", params={}, psi=lambda y: -y**2, load=lambda x: 0 * x[..., 0],
                         dpsi=lambda y: -2 * y, d2psi=lambda y: -2 + 0 * y)
    with pytest.raises(ConvexityViolationError):
        DiscreteEnergy(mesh, bad).hessian(np.zeros(9))


def test_interpolate_affine_and_u_star_boundary():
    mesh = build_uniform_mesh(32)
    u = interpolate(mesh, exact_solution)
    assert np.max(np.abs(u[mesh.is_boundary])) < 1e-15

    def affine(x):
        return 1.0 + 2.0 * x[..., 0] - 3.0 * x[..., 1]

    def affine_grad(x):
        return np.broadcast_to(np.array([2.0, -3.0]), x.shape)

    v = interpolate(mesh, affine)
    np.testing.assert_allclose(v, affine(mesh.coordinates))
    assert h1_error(mesh, v, affine_grad) < 1e-12


def test_l1_interpolation_order():
    def v(x):
        return np.cos(3 * x[..., 0]) * np.cos(3 * x[..., 1])

    ns = (8, 16, 32, 64)
    errors = [l1_interpolation_error(build_uniform_mesh(n), v) for n in ns]
    assert fit_order(ns, errors) == pytest.approx(2.0, abs=0.1)


def test_h1_interpolation_order():
    ns = (8, 16, 32, 64)
    errors = []
    for n in ns:
        mesh = build_uniform_mesh(n)
        errors.append(h1_error(mesh, _u_star(mesh), exact_gradient))
    assert fit_order(ns, errors) == pytest.approx(1.0, abs=0.1)


def test_strong_convexity_samples():
    rng = np.random.default_rng(4)
    mesh = build_uniform_mesh(12)
    for model in (monomial_model(100.0, 6), poisson_boltzmann_model(10.0), l1_model(5.0)):
        e = DiscreteEnergy(mesh, model)
        for _ in range(20):
            u, v = 0.3 * rng.standard_normal((2, e.size))
            t = rng.uniform()
            d = u - v
            lhs = e.value(t * u + (1 - t) * v)
            rhs = t * e.value(u) + (1 - t) * e.value(v) - 0.5 * t * (1 - t) * d @ (e.A @ d)
            assert lhs <= rhs + 1e-10


def test_manufactured_consistency():
    # the load makes I_h u* nearly stationary: the residual vanishes in the discrete dual norm
    ns = (8, 16, 32)
    norms = []
    for n in ns:
        mesh = build_uniform_mesh(n)
        e = DiscreteEnergy(mesh, monomial_model(10.0, 3, manufactured_rhs("monomial", 10.0, 3)))
        r = e.gradient(mesh.to_interior(_u_star(mesh)))
        norms.append(np.sqrt(r @ spla.spsolve(e.A.tocsc(), r)))
    assert fit_order(ns, norms) >= 1.0
