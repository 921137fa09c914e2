"""Quench dynamics of Rydberg atom arrays at exact-diagonalization scale."""

from .params import C6_DEFAULT, OMEGA_DEFAULT, QuenchParams
from .lattice import (LatticeSpec, apply_disorder, build_flattened_rect, build_ring,
                      build_square, interaction_matrix)
from .hilbert import BasisIndex, enumerate_basis, resonance_manifold
from .hamiltonian import build_hamiltonian
from .evolve import Trajectory, propagate_dense, propagate_krylov, quench_from_vacuum
from .observables import IslandSpec, ObservableSet, count_islands, time_average

__version__ = "0.1.0"

__all__ = [
    "C6_DEFAULT", "OMEGA_DEFAULT", "QuenchParams", "LatticeSpec", "apply_disorder",
    "build_flattened_rect", "build_ring", "build_square", "interaction_matrix",
    "BasisIndex", "enumerate_basis", "resonance_manifold", "build_hamiltonian",
    "Trajectory", "propagate_dense", "propagate_krylov", "quench_from_vacuum",
    "IslandSpec", "ObservableSet", "count_islands", "time_average",
]
