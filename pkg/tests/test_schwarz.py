import numpy as np
import pytest
import scipy.sparse.linalg as spla

from schwarzlin.decomp import build_decomposition
from schwarzlin.errors import AlgorithmicRegressionError, SchwarzlinError, SubdomainSolveError
from schwarzlin.fem import DiscreteEnergy, h1_error
from schwarzlin.mesh import build_uniform_mesh
from schwarzlin.models import (
    exact_gradient,
    l1_load,
    l1_model,
    manufactured_rhs,
    monomial_model,
    poisson_boltzmann_model,
)
from schwarzlin.schwarz import (
    ReferenceCache,
    SchwarzConfig,
    default_tau,
    reference_solution,
    schwarz_solve,
    solve_reference,
)


def _setup(n=16, coarse=4, layers=2, two_level=False):
    fine = build_uniform_mesh(n)
    return fine, build_decomposition(fine, build_uniform_mesh(coarse), layers, two_level=two_level)


def _linear():
    return monomial_model(0.0, 2, manufactured_rhs("monomial", 0.0, 2))


def test_default_tau():
    assert default_tau(1) == 0.25
    assert default_tau(2) == 0.2
    assert SchwarzConfig(levels=2).tau == 0.2


@pytest.mark.parametrize("kwargs", [{"levels": 3}, {"tau": 0.0}, {"tau": 1.5}, {"local_tol": 0.0},
                                    {"local_solver": "cg"}])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        SchwarzConfig(**kwargs)


def test_linear_one_level_contracts():
    fine, decomp = _setup()
    e = DiscreteEnergy(fine, _linear())
    u_ref = spla.spsolve(e.A.tocsc(), e.weights * e.nonlinearity.g)
    res = schwarz_solve(SchwarzConfig(levels=1, iterations=10), fine, _linear(), decomp, energy=e)
    E_ref = e.value(u_ref)
    gaps = np.array(res.energies) - E_ref
    assert np.all(np.diff(res.energies) < 0)
    assert np.all(gaps[1:] / gaps[:-1] < 1)


def test_single_subdomain_exact_in_one_step():
    fine = build_uniform_mesh(8)
    decomp = build_decomposition(fine, 1, 1)
    assert len(decomp.subdomains) == 1
    model = poisson_boltzmann_model(1.0, manufactured_rhs("pb", 1.0))
    e = DiscreteEnergy(fine, model)
    res = schwarz_solve(SchwarzConfig(levels=1, tau=1.0, iterations=1), fine, model, decomp, energy=e)
    u_ref, _ = solve_reference(e)
    np.testing.assert_allclose(res.solution, u_ref, atol=1e-10)


def test_undamped_sum_raises_regression():
    fine, decomp = _setup()
    with pytest.raises(AlgorithmicRegressionError):
        schwarz_solve(SchwarzConfig(levels=1, tau=1.0, iterations=5), fine, _linear(), decomp)


def test_two_level_needs_coarse_space():
    fine, decomp = _setup()
    with pytest.raises(SchwarzlinError):
        schwarz_solve(SchwarzConfig(levels=2), fine, _linear(), decomp)


def test_inner_stall_names_subdomain():
    fine, decomp = _setup()
    with pytest.raises(SubdomainSolveError) as info:
        schwarz_solve(SchwarzConfig(levels=1, iterations=1, max_inner=1), fine,
                      l1_model(10.0, l1_load()), decomp)
    assert info.value.subdomain >= 1


def test_pb_newton_counts_small():
    fine = build_uniform_mesh(32)
    decomp = build_decomposition(fine, build_uniform_mesh(4), 4)
    model = poisson_boltzmann_model(0.01, manufactured_rhs("pb", 0.01))
    res = schwarz_solve(SchwarzConfig(levels=1, iterations=3), fine, model, decomp)
    assert res.max_inner_iterations == 2


@pytest.mark.parametrize("model,two_level", [
    (monomial_model(10.0, 3, manufactured_rhs("monomial", 10.0, 3)), True),
    (l1_model(10.0, l1_load()), True),
    (l1_model(10.0, l1_load()), False),
])
def test_runs_are_deterministic_and_above_reference(model, two_level):
    fine, decomp = _setup(two_level=two_level)
    cfg = SchwarzConfig(levels=2 if two_level else 1, iterations=4)
    a = schwarz_solve(cfg, fine, model, decomp)
    b = schwarz_solve(cfg, fine, model, decomp)
    assert a.energies == b.energies
    np.testing.assert_array_equal(a.solution, b.solution)
    e = DiscreteEnergy(fine, model)
    E_ref = e.value(solve_reference(e)[0])
    assert min(a.energies) >= E_ref - 1e-12 * max(1.0, abs(E_ref))


def test_callback_sees_every_step():
    fine, decomp = _setup()
    seen = []
    schwarz_solve(SchwarzConfig(iterations=3), fine, _linear(), decomp,
                  callback=lambda n, u, E: seen.append((n, E)))
    assert [n for n, _ in seen] == [1, 2, 3]


def test_reference_linear_matches_direct_solve():
    fine = build_uniform_mesh(32)
    model = _linear()
    e = DiscreteEnergy(fine, model)
    u, _ = solve_reference(e)
    direct = spla.spsolve(e.A.tocsc(), e.weights * e.nonlinearity.g)
    diff = fine.to_full(u - direct)
    assert h1_error(fine, diff, lambda x: np.zeros_like(x)) <= 1e-10


def test_reference_restart_is_cheap():
    fine = build_uniform_mesh(16)
    e = DiscreteEnergy(fine, monomial_model(10.0, 3, manufactured_rhs("monomial", 10.0, 3)))
    u, _ = solve_reference(e)
    _, rep = solve_reference(e, init=u)
    assert rep.iterations <= 2


def test_reference_accuracy_against_exact_solution():
    fine = build_uniform_mesh(32)
    u = solve_reference(DiscreteEnergy(fine, monomial_model(10.0, 3, manufactured_rhs("monomial", 10.0, 3))))[0]
    assert h1_error(fine, fine.to_full(u), exact_gradient) < 0.2


def test_cache_round_trip(tmp_path):
    fine = build_uniform_mesh(8)
    model = poisson_boltzmann_model(1.0, manufactured_rhs("pb", 1.0))
    cache = ReferenceCache(tmp_path)
    u = reference_solution(fine, model, "manufactured", cache=cache)
    files = list(tmp_path.glob("ref-pb-*-8.txt"))
    assert len(files) == 1
    assert files[0].read_text().startswith("ref-cache v1 pb ")
    np.testing.assert_array_equal(reference_solution(fine, model, "manufactured", cache=cache), u)


def test_cache_discards_stale_header(tmp_path):
    fine = build_uniform_mesh(8)
    model = poisson_boltzmann_model(1.0, manufactured_rhs("pb", 1.0))
    cache = ReferenceCache(tmp_path)
    u = reference_solution(fine, model, "manufactured", cache=cache)
    path = next(tmp_path.glob("ref-pb-*-8.txt"))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(["ref-cache v0 stale"] + ["0.0"] * (len(lines) - 1)) + "\n")
    assert cache.load("pb", path.name.split("-")[2], 8) is None
    np.testing.assert_allclose(reference_solution(fine, model, "manufactured", cache=cache), u)


def test_cache_disabled_without_directory(monkeypatch):
    monkeypatch.delenv("SCHWARZLIN_CACHE", raising=False)
    cache = ReferenceCache()
    assert cache.load("pb", "x", 8) is None
    cache.store("pb", "x", 8, np.zeros(49))
