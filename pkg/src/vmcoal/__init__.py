"""Vector-multiplicative coalescent: inversion, tree enumerators, kinetics, simulation and MST limits."""

from __future__ import annotations

from .compositions import format_composition, graded, parse_composition, shell
from .errors import (
    ConvergenceError,
    DomainError,
    InternalConsistencyError,
    PreconditionError,
    ValidationError,
    VmcoalError,
)
from .inversion import InversionResult, eta_fixed_point, invert_minimal, minimal_curve, psi
from .kinetics import (
    KineticsConfig,
    critical_time,
    gelation_time,
    integrate_truncated,
    second_moments,
    total_mass,
    zeta_closed,
    zeta_table,
)
from .linalg import RegionLabel, WeightMatrix, classify_region, perron_vector, spectral_radius
from .mst import mst_monte_carlo, mst_series
from .simulator import SimConfig, ensemble, simulate
from .trees import TreeMethod, enumerator, s_coefficient

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "InternalConsistencyError",
    "InversionResult",
    "KineticsConfig",
    "PreconditionError",
    "RegionLabel",
    "SimConfig",
    "TreeMethod",
    "ValidationError",
    "VmcoalError",
    "WeightMatrix",
    "classify_region",
    "critical_time",
    "ensemble",
    "enumerator",
    "eta_fixed_point",
    "format_composition",
    "gelation_time",
    "graded",
    "integrate_truncated",
    "invert_minimal",
    "minimal_curve",
    "mst_monte_carlo",
    "mst_series",
    "parse_composition",
    "perron_vector",
    "psi",
    "s_coefficient",
    "second_moments",
    "shell",
    "simulate",
    "spectral_radius",
    "total_mass",
    "zeta_closed",
    "zeta_table",
]
