"""Exception hierarchy.

The CLI maps these onto its exit codes, so every failure mode that a user can
trigger from a config file has its own class.
"""


class MalabError(Exception):
    """Base class for all package errors."""


class GridError(MalabError, ValueError):
    """Stencil or lattice does not fit the grid."""


class NotSPDError(MalabError, ValueError):
    """A matrix that must be symmetric positive definite is not."""


class AssumptionError(MalabError, ValueError):
    """Density data violates the structural hypotheses."""


class CompatibilityError(MalabError, ValueError):
    """Periodic right-hand side does not have the required cell average."""


class SolverError(MalabError, RuntimeError):
    """Nonlinear or linear iteration failed (stagnation, lost convexity, ...)."""


class QuadratureError(MalabError, RuntimeError):
    """Adaptive refinement did not reach the requested tolerance."""


class FitError(MalabError, ValueError):
    """Least-squares decomposition is degenerate."""


class FieldFormatError(MalabError, ValueError):
    """Field file is missing, truncated or not in the expected format."""
