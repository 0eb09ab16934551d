"""Numerical laboratory for viscous self-gravitating gaseous stars.

The package builds polytropic equilibria with a vacuum free boundary,
evolves radial perturbations of them in Lagrangian form with
density-degenerate viscosity, and measures the energy norms and decay
rates that govern nonlinear stability.
"""

__version__ = "0.1.0"

from .errors import (MassConstraintError, MeshInversionError, NumericalError,
                     StarSimError, ValidationError, VerificationFailure)
from .lane_emden import (DimensionlessSolution, LaneEmdenProfile,
                         build_profile, eval_profile, scale_to_mass,
                         solve_dimensionless)
from .params import ModelParams

__all__ = [
    "DimensionlessSolution", "LaneEmdenProfile", "MassConstraintError",
    "MeshInversionError", "ModelParams", "NumericalError", "StarSimError",
    "ValidationError", "VerificationFailure", "build_profile", "eval_profile",
    "scale_to_mass", "solve_dimensionless", "__version__",
]
