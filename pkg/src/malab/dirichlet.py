"""Damped Newton solver for ``det(D^2 u) = f`` on a box with Dirichlet data.

Standard central differences are used (not a monotone wide stencil).  The
regime of interest has smooth, uniformly convex solutions, where Newton on the
standard scheme converges quadratically and is second-order accurate;
discrete convexity is monitored rather than enforced.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .calculus import det_and_cofactor, hessian_array, laplacian_array, min_eigenvalue
from .exceptions import GridError, NotSPDError, SolverError
from .grid import BoxGrid, PeriodicGrid, ScalarField
from .operators import assemble, nondivergence_stencil, solve_linear
from ._validation import check_box_field, check_same_grid


@dataclass
class QuadraticProfile:
    """``P(x) = x'Ax/2 + b.x + c`` with ``A`` symmetric positive definite."""

    A: np.ndarray
    b: np.ndarray = None
    c: float = 0.0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.A = 0.5 * (self.A + self.A.T)
        n = self.A.shape[0]
        self.b = np.zeros(n) if self.b is None else np.asarray(self.b, dtype=float)
        self.c = float(self.c)
        if n in (2, 3):
            lam = float(min_eigenvalue(self.A))
        else:
            lam = float(np.linalg.eigvalsh(self.A)[0])
        if not lam > 0:
            raise NotSPDError("not SPD: profile matrix A must be positive definite")

    @classmethod
    def identity(cls, n: int) -> "QuadraticProfile":
        return cls(np.eye(n))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.A, x) + x @ self.b + self.c

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "c": self.c}


@dataclass
class BoundaryData:
    """Dirichlet values on the boundary layer of a box grid.

    ``values`` is a full-grid array; only boundary entries are meaningful.
    """

    grid: BoxGrid
    values: np.ndarray
    provenance: str = "custom"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values[self.grid.boundary_mask()])):
            raise FloatingPointError("non-finite boundary data")

    def extended(self) -> np.ndarray:
        """Boundary values with zeros in the interior."""
        out = np.where(self.grid.boundary_mask(), self.values, 0.0)
        return out


def _periodic_lookup(grid: BoxGrid, xi: ScalarField) -> np.ndarray:
    pg = xi.grid
    if not isinstance(pg, PeriodicGrid) or pg.dim != grid.dim:
        raise GridError("lattice mismatch: corrector must live on a periodic grid of the same dimension")
    idx = []
    for axis, hp in enumerate(pg.spacings):
        k = grid.axis / hp
        kr = np.rint(k)
        if np.any(np.abs(k - kr) > 1e-9 * np.maximum(1.0, np.abs(k))):
            raise GridError("lattice mismatch: box nodes are not corrector nodes")
        idx.append(np.mod(kr.astype(np.int64), pg.nodes[axis]))
    mesh = np.meshgrid(*idx, indexing="ij")
    return xi.values[tuple(mesh)]


def boundary_from_profile(grid: BoxGrid, q: QuadraticProfile, xi: ScalarField = None) -> BoundaryData:
    """Boundary values ``P(x) + xi(x mod cell)``."""
    if q.dim != grid.dim:
        raise GridError("profile and grid dimensions differ")
    vals = q(grid.points()).reshape(grid.shape)
    provenance = "profile-generated"
    if xi is not None:
        vals = vals + _periodic_lookup(grid, xi)
    return BoundaryData(grid, vals, provenance)


def boundary_from_function(grid: BoxGrid, func, provenance: str = "custom") -> BoundaryData:
    return BoundaryData(grid, np.asarray(func(grid.points()), dtype=float).reshape(grid.shape), provenance)


def poisson_initializer(grid: BoxGrid, f: ScalarField, g: BoundaryData, tol: float = 1e-10,
                        max_linear: int = 20000, method: str = "bicgstab") -> ScalarField:
    """Solve ``Lap u0 = n f^{1/n}`` with boundary values ``g``.

    By AM-GM, ``Lap u >= n det(D^2 u)^{1/n}`` for convex ``u``, so ``u0`` lies
    above the Monge-Ampere solution and is a convex-friendly starting point.
    """
    check_box_field(f, grid)
    n = grid.dim
    sl = grid.interior_slices()
    fi = f.values[sl]
    if np.any(fi <= 0):
        raise SolverError("density must be positive on interior nodes")
    gext = g.extended()
    rhs = n * fi ** (1.0 / n) - laplacian_array(gext, grid.spacings, False)
    A = assemble(nondivergence_stencil(np.broadcast_to(np.eye(n), fi.shape + (n, n)), grid.spacings),
                 grid.shape, periodic=False)
    w, _ = solve_linear(-A, -rhs.ravel(), tol=tol, maxiter=max_linear, method="cg" if method == "bicgstab" else method)
    u = gext.copy()
    u[sl] = w.reshape(fi.shape)
    return ScalarField(grid, u)


@dataclass
class SolveReport:
    newton_iterations: int = 0
    residual: float = np.inf
    residual_history: list = field(default_factory=list)
    damping_history: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    convexity_violations: int = 0
    min_hessian_eigenvalue: float = np.nan
    eps_cvx: float = 0.0
    converged: bool = False
    wall_time: float = 0.0
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in d.items()}


def residual(u: ScalarField, f: ScalarField) -> np.ndarray:
    """``det(D^2 u) - f`` on interior nodes."""
    check_same_grid(u, f)
    grid = u.grid
    H = hessian_array(u.values, grid.spacings, grid.periodic, margin=1)
    det, _ = det_and_cofactor(H)
    if grid.periodic:
        return det - f.values
    return det - f.values[grid.interior_slices()]


class DirichletMongeAmpere(BaseEstimator):
    """Damped Newton iteration for the box Dirichlet problem.

    Parameters
    ----------
    tol : float
        Stop when ``sup |det(D^2 u_h) - f| <= tol`` on interior nodes.
    max_newton : int
    max_linear : int
        Iteration cap of each linear solve.
    damping_levels : int
        Step lengths tried are ``1, 1/2, ..., 2**-damping_levels``.
    linear_solver : {"bicgstab", "gmres", "direct"}
    linear_tol : float
        Relative residual of each linearized solve.
    cvx_factor : float
        Convexity slack ``eps_cvx = cvx_factor * h**2``.

    Attributes
    ----------
    solution_ : ScalarField
    report_ : SolveReport
    """

    def __init__(self, tol=1e-8, max_newton=20, max_linear=20000, damping_levels=8,
                 linear_solver="bicgstab", linear_tol=1e-10, cvx_factor=10.0):
        self.tol = tol
        self.max_newton = max_newton
        self.max_linear = max_linear
        self.damping_levels = damping_levels
        self.linear_solver = linear_solver
        self.linear_tol = linear_tol
        self.cvx_factor = cvx_factor

    def fit(self, f: ScalarField, boundary: BoundaryData, u0: ScalarField = None):
        grid = boundary.grid
        check_box_field(f, grid)
        t0 = time.perf_counter()
        report = SolveReport(eps_cvx=self.cvx_factor * grid.spacing**2)
        if u0 is None:
            u = poisson_initializer(grid, f, boundary, tol=self.linear_tol, max_linear=self.max_linear,
                                    method=self.linear_solver)
        else:
            check_box_field(u0, grid)
            u = u0.copy()
            u.values[grid.boundary_mask()] = boundary.values[grid.boundary_mask()]
        sl = grid.interior_slices()
        fi = f.values[sl]
        U = u.values

        def evaluate(values):
            H = hessian_array(values, grid.spacings, False, margin=1)
            det, cof = det_and_cofactor(H)
            return fi - det, cof, H

        r, cof, H = evaluate(U)
        res = float(np.max(np.abs(r)))
        report.residual_history.append(res)
        it = 0
        while res > self.tol:
            if it >= self.max_newton:
                report.residual, report.newton_iterations = res, it
                report.wall_time = time.perf_counter() - t0
                report.message = "max_newton reached"
                self.report_ = report
                raise SolverError(f"stagnation: Newton did not reach tol after {it} iterations (residual {res:.3e})")
            J = assemble(nondivergence_stencil(cof, grid.spacings), grid.shape, periodic=False)
            delta, lin_it = solve_linear(J, r.ravel(), tol=self.linear_tol, maxiter=self.max_linear,
                                         method=self.linear_solver)
            report.linear_iterations.append(int(lin_it))
            delta = delta.reshape(fi.shape)
            step = 1.0
            for _ in range(self.damping_levels + 1):
                trial = U.copy()
                trial[sl] += step * delta
                r_t, cof_t, H_t = evaluate(trial)
                res_t = float(np.max(np.abs(r_t)))
                if np.isfinite(res_t) and res_t < res:
                    break
                step *= 0.5
            else:
                report.residual, report.newton_iterations = res, it
                report.wall_time = time.perf_counter() - t0
                report.message = "stagnation"
                self.report_ = report
                raise SolverError("stagnation: damping exhausted without residual decrease")
            U, r, cof, H, res = trial, r_t, cof_t, H_t, res_t
            it += 1
            report.damping_history.append(step)
            report.residual_history.append(res)
        lam = min_eigenvalue(H)
        report.min_hessian_eigenvalue = float(lam.min())
        report.convexity_violations = int(np.count_nonzero(lam < -report.eps_cvx))
        report.newton_iterations = it
        report.residual = res
        report.wall_time = time.perf_counter() - t0
        self.solution_ = ScalarField(grid, U)
        self.report_ = report
        if report.convexity_violations:
            report.message = "lost convexity"
            raise SolverError(f"lost convexity at {report.convexity_violations} nodes")
        report.converged = True
        report.message = "converged"
        return self

    def residual_field(self, f: ScalarField) -> np.ndarray:
        return residual(self.solution_, f)


def newton_solve(grid: BoxGrid, f: ScalarField, g: BoundaryData, opts: dict = None, u0: ScalarField = None):
    """Functional front end: returns ``(u, SolveReport)``."""
    if g.grid != grid:
        raise GridError("boundary data lives on a different grid")
    est = DirichletMongeAmpere(**(opts or {}))
    est.fit(f, g, u0=u0)
    return est.solution_, est.report_
