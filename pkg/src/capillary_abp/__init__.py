"""Numerical verification of the ABP route to the capillary isoperimetric
inequality outside convex sets."""

__version__ = "0.1.0"

from ._validation import DomainError
from .capillary import PolytopalSet, capillary_energy, reference_energy, verify_theorem1
from .geometry import ConvexBody, cap_volume, unit_ball_volume
from .maingeo import (
    InequalityReport,
    layer_cake_check,
    lipschitz_profile_check,
    minimize_restricted_measure,
    psi_calculus_check,
    restricted_subdiff_measure,
    verify_main_inequality,
    verify_sphere_inequality,
)
from .measures import Budget, MeasureEstimate
from .subdiff import DiscreteBoundaryFunction, SubdifferentialPartition, verify_half_line

__all__ = [
    "Budget",
    "ConvexBody",
    "DiscreteBoundaryFunction",
    "DomainError",
    "InequalityReport",
    "MeasureEstimate",
    "PolytopalSet",
    "SubdifferentialPartition",
    "cap_volume",
    "capillary_energy",
    "layer_cake_check",
    "lipschitz_profile_check",
    "minimize_restricted_measure",
    "psi_calculus_check",
    "reference_energy",
    "restricted_subdiff_measure",
    "unit_ball_volume",
    "verify_half_line",
    "verify_main_inequality",
    "verify_sphere_inequality",
    "verify_theorem1",
]
