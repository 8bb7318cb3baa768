"""Matrix-free priorconditioned LSQR with lagged diffusivity."""

from .diffusion import Grid, SparseSpd, assemble_m, penalty_functional, penalty_gradient
from .estimators import LaggedDiffusivityRegressor, LSQRRegressor, PriorconditionedLSQR
from .krylov import (
    Criterion,
    SolveResult,
    SolverBreakdown,
    StoppingConfig,
    cg_normal,
    krylov_basis,
    lsqr,
    lsqr_explicit,
    mlsqr,
    projected_solution,
    solve_projected,
)
from .linops import DenseOperator, GaussianConvolution1D, LinearOperator, SeparableBlur2D
from .outer import OuterConfig, OuterReport, solve_nonlinear
from .penalty import PenaltyKind, PenaltySpec
from .problems import error_norm, make_deblur2d, make_deconv1d, make_ideal_preconditioner
from .spdsolve import ChebyshevSolver, CholeskySolver, FactorizationError, make_solver

__version__ = "0.1.0"

__all__ = [
    "Grid", "SparseSpd", "assemble_m", "penalty_functional", "penalty_gradient",
    "LSQRRegressor", "PriorconditionedLSQR", "LaggedDiffusivityRegressor",
    "Criterion", "SolveResult", "SolverBreakdown", "StoppingConfig", "cg_normal",
    "krylov_basis", "lsqr", "lsqr_explicit", "mlsqr", "projected_solution", "solve_projected",
    "LinearOperator", "DenseOperator", "GaussianConvolution1D", "SeparableBlur2D",
    "OuterConfig", "OuterReport", "solve_nonlinear", "PenaltyKind", "PenaltySpec",
    "make_deconv1d", "make_deblur2d", "make_ideal_preconditioner", "error_norm",
    "CholeskySolver", "ChebyshevSolver", "FactorizationError", "make_solver",
]
