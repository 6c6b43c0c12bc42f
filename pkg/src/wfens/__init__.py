"""Wave-function ensembles for finite quantum systems.

States are sampled on the unit sphere of C^N, thermodynamics is built from
expectation values, and work is the change in expectation energy under
unitary driving.
"""
from .errors import (
    ConvergenceWarning,
    DimensionError,
    DomainError,
    InsufficientOverlapError,
    IntegrationError,
    WfensError,
)
from .statespace import HermitianOperator, ParameterizedHamiltonian, StateVector, linear_hamiltonian
from .ensembles import EnsembleSpec, draw_states, estimate_partition
from .dynamics import Protocol, propagate, work_endpoint, work_power_integral

__version__ = "0.1.0"

__all__ = [
    "ConvergenceWarning",
    "DimensionError",
    "DomainError",
    "EnsembleSpec",
    "HermitianOperator",
    "InsufficientOverlapError",
    "IntegrationError",
    "ParameterizedHamiltonian",
    "Protocol",
    "StateVector",
    "WfensError",
    "draw_states",
    "estimate_partition",
    "linear_hamiltonian",
    "propagate",
    "work_endpoint",
    "work_power_integral",
]
