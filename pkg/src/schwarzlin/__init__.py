"""One- and two-level additive Schwarz methods for convex semilinear problems."""

from .decomp import DomainDecomposition, build_decomposition
from .errors import SchwarzlinError
from .fem import DiscreteEnergy, assemble_stiffness, energy, gradient, hessian, interpolate
from .mesh import StructuredMesh, build_uniform_mesh, nodal_weights, refinement_factor
from .models import (
    NonlinearModel,
    l1_load,
    l1_model,
    manufactured_rhs,
    monomial_model,
    poisson_boltzmann_model,
)
from .schwarz import SchwarzConfig, SchwarzResult, reference_solution, schwarz_solve

__version__ = "0.1.0"

__all__ = [
    "DomainDecomposition",
    "build_decomposition",
    "SchwarzlinError",
    "DiscreteEnergy",
    "assemble_stiffness",
    "energy",
    "gradient",
    "hessian",
    "interpolate",
    "StructuredMesh",
    "build_uniform_mesh",
    "nodal_weights",
    "refinement_factor",
    "NonlinearModel",
    "l1_load",
    "l1_model",
    "manufactured_rhs",
    "monomial_model",
    "poisson_boltzmann_model",
    "SchwarzConfig",
    "SchwarzResult",
    "reference_solution",
    "schwarz_solve",
]
