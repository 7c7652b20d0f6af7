"""Exact QFI dynamics of the tilted Bose-Hubbard chain for lattice gravimetry."""

from .analysis import (
    NormalizedQFI,
    PlateauEstimate,
    PowerLawFit,
    PowerLawRegressor,
    critical_point,
    localized_h_scaling,
    particle_scaling,
    plateau,
    qfi_time_series,
    resonance_coefficient,
    resonance_scan,
    size_scaling,
    time_grid,
)
from .basis import FockBasis, dimension, staggered_initial_state
from .hamiltonian import ModelParams, build_gradient_generator, build_hamiltonian
from .propagator import EvolvedPair, evolve, evolve_with_derivative
from .qfi import QfiSample, cramer_rao_bound, qfi_pure

__version__ = "0.1.0"

__all__ = [
    "EvolvedPair",
    "FockBasis",
    "ModelParams",
    "NormalizedQFI",
    "PlateauEstimate",
    "PowerLawFit",
    "PowerLawRegressor",
    "QfiSample",
    "build_gradient_generator",
    "build_hamiltonian",
    "cramer_rao_bound",
    "critical_point",
    "dimension",
    "evolve",
    "evolve_with_derivative",
    "localized_h_scaling",
    "particle_scaling",
    "plateau",
    "qfi_time_series",
    "qfi_pure",
    "resonance_coefficient",
    "resonance_scan",
    "size_scaling",
    "time_grid",
    "staggered_initial_state",
]
