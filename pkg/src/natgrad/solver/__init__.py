"""Grid solver for the infinity-Laplacian Dirichlet problem with a natural gradient term."""

from .domain import Domain2D
from .kernels import BACKEND
from .solve import (
    Grid,
    GridProblem,
    SolveResult,
    SolverError,
    build_grid,
    discrete_inf_laplacian,
    solve_transformed,
    solve_with_gradient_term,
)

__all__ = [
    "BACKEND",
    "Domain2D",
    "Grid",
    "GridProblem",
    "SolveResult",
    "SolverError",
    "build_grid",
    "discrete_inf_laplacian",
    "solve_transformed",
    "solve_with_gradient_term",
]
