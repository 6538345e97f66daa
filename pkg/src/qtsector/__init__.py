"""qtsector: invariant structure of quantum instruments, trajectory
simulation, and numerical verification of exponential sector selection."""

__version__ = "0.1.0"

from .instrument import (
    Instrument,
    apply_heisenberg,
    apply_schrodinger,
    load_instrument,
    save_instrument,
    superoperator_matrix,
    validate,
    word_probability,
)
from .invariant import InvariantStructure, compute_structure
from .sectors import SectorDecomposition, build_sectors, identifiability_horizon, kappa
from .trajectory import EnsembleRecords, RunConfig, lyapunov_w, q_vector, run_ensemble

__all__ = [
    "Instrument", "apply_heisenberg", "apply_schrodinger", "load_instrument",
    "save_instrument", "superoperator_matrix", "validate", "word_probability",
    "InvariantStructure", "compute_structure",
    "SectorDecomposition", "build_sectors", "identifiability_horizon", "kappa",
    "EnsembleRecords", "RunConfig", "lyapunov_w", "q_vector", "run_ensemble",
    "__version__",
]
