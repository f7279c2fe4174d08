"""Two-dimensional Neumann solves and the ABP chain on their solutions."""

from .abp import (
    abp_chain_report,
    check_subdiff_inclusion,
    check_viscosity_conditions,
    contact_set,
    gradient_image_measure,
)
from .fem import NeumannSolution, NeumannSolver, solve_neumann
from .mesh import GAMMA, SIGMA, MixedBoundaryMesh, cap_mesh, dumbbell_mesh, mesh_polygon, square_mesh

__all__ = [
    "GAMMA",
    "SIGMA",
    "MixedBoundaryMesh",
    "NeumannSolution",
    "NeumannSolver",
    "abp_chain_report",
    "cap_mesh",
    "check_subdiff_inclusion",
    "check_viscosity_conditions",
    "contact_set",
    "dumbbell_mesh",
    "gradient_image_measure",
    "mesh_polygon",
    "solve_neumann",
    "square_mesh",
]
