"""Truncated Fock-space engine: spaces, operators, states and evolution."""

from .space import CompositeSpace, ModeSpec
from .operators import (DensityMatrix, Operator, StateVector, annihilation,
                        as_density, basis_state, build_annihilation, coherent_amplitudes,
                        commutator, embed, expectation, identity, number,
                        product_density, product_state, quadrature_x, sigma_minus,
                        sigma_plus, sigma_x, sigma_y, sigma_z, spin_op,
                        thermal_populations)
from .evolution import (EvolutionResult, LindbladModel, evolve_lindblad,
                        evolve_schrodinger, liouvillian, steady_state)

__all__ = [
    "CompositeSpace", "ModeSpec", "Operator", "StateVector", "DensityMatrix",
    "LindbladModel", "EvolutionResult", "annihilation", "as_density", "basis_state",
    "build_annihilation", "coherent_amplitudes", "commutator", "embed", "expectation",
    "identity", "number", "product_density", "product_state", "quadrature_x",
    "sigma_minus", "sigma_plus", "sigma_x", "sigma_y", "sigma_z", "spin_op",
    "thermal_populations", "evolve_lindblad", "evolve_schrodinger", "liouvillian",
    "steady_state",
]
