"""Finite-volume Anderson Hamiltonians on the discrete torus: Monte Carlo IDS/DOS/Wegner
estimators and numerical checks of the inequalities behind the Lifshitz-tail bound for the DOS."""

from .lattice import (
    BoxSpec,
    DisorderField,
    DistributionSpec,
    OperatorMatrix,
    SiteIndex,
    SublatticeSpec,
    assemble_hamiltonian,
    build_box,
    choose_decoupling_sublattice,
    mask_potential,
    sample_disorder,
)
from .spectral import EigenSystem, EnergyInterval, count_below, eigensolve, local_spectral_weight, operator_entry

__version__ = "0.1.0"
