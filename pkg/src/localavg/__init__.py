"""Simulation and analysis of distributed gradient descent with local updates and model averaging."""

from .errors import (DimensionError, DivergenceError, DomainError, NumericFailure,
                     UnsupportedAuditError, ZeroMatrixError)
from .geometry import AffineSubspace, SubspaceCollection, separation_constant
from .objectives import BeckSyntheticProblem, LeastSquaresProblem, Objective
from .simulator import LocalUpdatePolicy, StopRule, audit_decrement, local_descent, run
from .tradeoff import lambert_w_minus, t_star_linear, t_star_sublinear

__version__ = "0.1.0"

__all__ = [
    "AffineSubspace", "BeckSyntheticProblem", "DimensionError", "DivergenceError", "DomainError",
    "LeastSquaresProblem", "LocalUpdatePolicy", "NumericFailure", "Objective", "StopRule",
    "SubspaceCollection", "UnsupportedAuditError", "ZeroMatrixError", "audit_decrement", "lambert_w_minus",
    "local_descent", "run", "separation_constant", "t_star_linear", "t_star_sublinear",
]
