"""Composite FE/DG discretization of heterogeneous elliptic problems on the
unit square with a dual-primal substructuring (FETI-DP) PCG solver."""

from .coeffield import CoefficientField, Inclusion
from .errors import ConfigurationError
from .fetidp import SolveReport, build_operators, pcg_solve, solve
from .problem import Discretization, build_spaces, discretize

__all__ = [
    "CoefficientField", "Inclusion", "ConfigurationError", "SolveReport",
    "build_operators", "pcg_solve", "solve", "Discretization", "build_spaces",
    "discretize",
]

__version__ = "0.1.0"
