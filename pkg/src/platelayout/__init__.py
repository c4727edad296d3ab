"""Physics-driven CNN surrogate and particle-swarm layout optimization for heat-conducting plates."""

from .fdm import ConvergenceError, SolveResult, SolverConfig, direct_solve_small, solve_steady
from .field import (
    BoundaryCondition, CaseSpec, EmptyDomainError, GridMismatchError, GridSpec, HoleSpec, LayoutError,
    LayoutSpec, Mask, TemperatureField, apply_dirichlet, build_mask, builtin_case, initial_field,
    mean_temperature, random_layout,
)
from .stencil import ResidualField, data_loss, laplacian, physics_loss, physics_residual

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "SolveResult", "SolverConfig", "direct_solve_small", "solve_steady",
    "BoundaryCondition", "CaseSpec", "EmptyDomainError", "GridMismatchError", "GridSpec", "HoleSpec",
    "LayoutError", "LayoutSpec", "Mask", "TemperatureField", "apply_dirichlet", "build_mask",
    "builtin_case", "initial_field", "mean_temperature", "random_layout", "ResidualField", "data_loss",
    "laplacian", "physics_loss", "physics_residual",
]
