"""malab: a numerical laboratory for ``det(D^2 u) = f`` with asymptotically periodic data.

Solvers (box Dirichlet problem, periodic corrector, radial quadrature
oracle) and an analyzer that fits the parabola-plus-periodic decomposition of
computed solutions and measures how fast the remainder decays.
"""

from .asymptotics import (AnnulusSpec, DecompositionFit, LevelSetReport, ParabolaPeriodicRegressor, abp_ratio,
                          check_detA, fit_decomposition, fractional_annuli, geometric_annuli, green_decay,
                          level_sets, quotient_scan)
from .calculus import (cofactor_divergence, det_and_cofactor, detroot, hessian, min_eigenvalue, second_quotient)
from .corrector import CellCorrector, CorrectorField, corrector_residual, normalize_periodic, solve_corrector
from .density import (AssumptionReport, DensitySpec, PeriodicDensitySpec, RadialDensitySpec, cell_average,
                      eval_density, verify_assumptions)
from .dirichlet import (BoundaryData, DirichletMongeAmpere, QuadraticProfile, SolveReport, boundary_from_profile,
                        newton_solve, poisson_initializer, residual)
from .exceptions import (AssumptionError, CompatibilityError, FieldFormatError, FitError, GridError, MalabError, NotSPDError,
                         QuadratureError, SolverError)
from .grid import BoxGrid, LatticeVector, PeriodicGrid, ScalarField, SymMatrixField
from .io import read_field, write_field
from .radial import (RadialSolution, parabola_deviation, radial_det_check, radial_sigma, radial_u, theorem_sigma)

__version__ = "0.1.0"

__all__ = [
    "AnnulusSpec", "DecompositionFit", "LevelSetReport", "ParabolaPeriodicRegressor", "abp_ratio", "check_detA",
    "fit_decomposition", "fractional_annuli", "geometric_annuli", "green_decay", "level_sets", "quotient_scan",
    "cofactor_divergence", "det_and_cofactor", "detroot", "hessian", "min_eigenvalue", "second_quotient",
    "CellCorrector", "CorrectorField", "corrector_residual", "normalize_periodic", "solve_corrector",
    "AssumptionReport", "DensitySpec", "PeriodicDensitySpec", "RadialDensitySpec", "cell_average", "eval_density",
    "verify_assumptions", "BoundaryData", "DirichletMongeAmpere", "QuadraticProfile", "SolveReport",
    "boundary_from_profile", "newton_solve", "poisson_initializer", "residual", "AssumptionError",
    "CompatibilityError", "FieldFormatError", "FitError", "GridError", "MalabError", "NotSPDError", "QuadratureError", "SolverError",
    "BoxGrid", "LatticeVector", "PeriodicGrid", "ScalarField", "SymMatrixField", "read_field", "write_field",
    "RadialSolution", "parabola_deviation", "radial_det_check", "radial_sigma", "radial_u", "theorem_sigma",
]
