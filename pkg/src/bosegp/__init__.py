"""Finite-cutoff operator engine for the dilute Bose gas in the Gross-Pitaevskii regime."""

from .errors import BoseGPError
from .fock import EXCITATION, PARTICLE, FockBasis, SparseOperator, build_basis, lattice_modes
from .scattering import Potential, solve_neumann, zero_energy_scattering

__all__ = [
    "BoseGPError",
    "EXCITATION",
    "PARTICLE",
    "FockBasis",
    "SparseOperator",
    "build_basis",
    "lattice_modes",
    "Potential",
    "solve_neumann",
    "zero_energy_scattering",
]

__version__ = "0.1.0"
