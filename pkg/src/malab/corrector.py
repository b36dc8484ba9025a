"""Periodic corrector: ``det(I + D^2 xi) = f_p`` with ``xi`` periodic, mean zero.

The central-difference Monge-Ampere operator is not a discrete null
Lagrangian: on a periodic grid the discrete mean of ``det(I + D^2_h xi)``
exceeds one for every non-constant ``xi``.  The discrete problem with
``mean(f_p) = 1`` is therefore solvable only up to a scalar, and the solver
finds ``(xi, kappa)`` with ``det(I + D^2_h xi) = kappa f_p`` where
``kappa = 1 + O(h^2)``.  For data that depend on one coordinate only the
discrete operator is linear and ``kappa = 1`` exactly.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate
from sklearn.base import BaseEstimator

from .calculus import det_and_cofactor, hessian_array, min_eigenvalue
from .density import PeriodicDensitySpec, cell_average
from .exceptions import CompatibilityError, SolverError
from .grid import ScalarField
from .operators import assemble, nondivergence_stencil
from ._validation import check_periodic_field


def normalize_periodic(fp: PeriodicDensitySpec):
    """Return ``(f_p / avg(f_p), avg(f_p))``."""
    avg = cell_average(fp)
    if abs(avg - 1.0) < 1e-15:
        return fp, 1.0
    return fp.scaled(1.0 / avg), avg


@dataclass
class CorrectorField:
    xi: ScalarField
    residual: float
    mean: float
    kappa: float = 1.0
    raw_residual: float = np.nan
    min_eigenvalue: float = np.nan
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "mean": self.mean,
            "kappa": self.kappa,
            "raw_residual": self.raw_residual,
            "min_eigenvalue": self.min_eigenvalue,
            "iterations": self.iterations,
            "residual_history": list(self.residual_history),
            "wall_time": self.wall_time,
            "gauge": "mean-zero",
        }


def _shifted_hessian(xi: np.ndarray, spacings) -> np.ndarray:
    H = hessian_array(xi, spacings, True, margin=1)
    n = xi.ndim
    return H + np.eye(n)


def corrector_residual(xi, fp: ScalarField) -> float:
    """``sup |det(I + D^2 xi) - f_p|``.

    For a :class:`CorrectorField` the solved right-hand side ``kappa f_p`` is
    used; for a bare field ``f_p`` itself.
    """
    kappa = 1.0
    if isinstance(xi, CorrectorField):
        kappa = xi.kappa
        xi = xi.xi
    check_periodic_field(xi)
    if xi.grid != fp.grid:
        raise CompatibilityError("grid mismatch between corrector and density")
    det, _ = det_and_cofactor(_shifted_hessian(xi.values, xi.grid.spacings))
    return float(np.max(np.abs(det - kappa * fp.values)))


def _bordered_solve(K, rhs, diag, tol, maxiter):
    """GMRES on the system bordered by the mean constraint, sparse LU fallback.

    The border row removes the constant null mode of the periodic operator.
    """
    inv = np.concatenate([1.0 / diag, [1.0]])
    M = spla.LinearOperator(K.shape, matvec=lambda x: inv * x, dtype=float)
    sol, info = spla.gmres(K, rhs, rtol=tol, atol=0.0, restart=100, maxiter=maxiter, M=M)
    bn = np.linalg.norm(rhs)
    if info == 0 and np.all(np.isfinite(sol)) and np.linalg.norm(K @ sol - rhs) <= 100 * tol * bn:
        return sol
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            return spla.spsolve(K.tocsc(), rhs)
        except spla.MatrixRankWarning as exc:
            raise SolverError("singular corrector linearization") from exc


class CellCorrector(BaseEstimator):
    """Newton solver for the periodic cell problem.

    Parameters
    ----------
    tol : float
        Stop at ``sup |det(I + D^2 xi) - kappa f_p| <= tol``.
    max_newton : int
    damping_levels : int
        Step halvings allowed when ``I + D^2 xi`` loses positivity or the
        residual fails to decrease.
    mean_tol : float
        Required ``|mean(f_p) - 1|``.
    linear_tol, max_linear : float, int
        GMRES target and iteration cap for each bordered linear solve.

    Attributes
    ----------
    corrector_ : CorrectorField
    """

    def __init__(self, tol=1e-8, max_newton=30, damping_levels=8, mean_tol=1e-10,
                 linear_tol=1e-12, max_linear=5000):
        self.tol = tol
        self.max_newton = max_newton
        self.damping_levels = damping_levels
        self.mean_tol = mean_tol
        self.linear_tol = linear_tol
        self.max_linear = max_linear

    def fit(self, fp: ScalarField, xi0: ScalarField = None):
        check_periodic_field(fp)
        grid = fp.grid
        t0 = time.perf_counter()
        F = fp.values
        if np.any(F <= 0):
            raise CompatibilityError("periodic density must be positive")
        if abs(F.mean() - 1.0) > self.mean_tol:
            raise CompatibilityError(f"incompatible average: mean(f_p) = {F.mean():.12g}, expected 1")
        N = grid.size
        xi = np.zeros(grid.shape) if xi0 is None else xi0.values - xi0.values.mean()
        kappa = 1.0

        def evaluate(x, k):
            H = _shifted_hessian(x, grid.spacings)
            det, cof = det_and_cofactor(H)
            return k * F - det, cof, H

        r, cof, H = evaluate(xi, kappa)
        res = float(np.max(np.abs(r)))
        history = [res]
        ones = np.full((1, N), 1.0 / N)
        it = 0
        while res > self.tol:
            if it >= self.max_newton:
                raise SolverError(f"stagnation: corrector residual {res:.3e} after {it} iterations")
            L = assemble(nondivergence_stencil(cof, grid.spacings), grid.shape, periodic=True)
            # unknowns (delta, dkappa): L delta - F dkappa = r, mean(delta) = 0
            K = sp.bmat([[L, -F.reshape(-1, 1)], [ones, None]], format="csr")
            rhs = np.concatenate([r.ravel(), [0.0]])
            sol = _bordered_solve(K, rhs, L.diagonal(), self.linear_tol, self.max_linear)
            delta, dk = sol[:-1].reshape(grid.shape), sol[-1]
            step = 1.0
            for _ in range(self.damping_levels + 1):
                trial = xi + step * delta
                trial -= trial.mean()
                k_t = kappa + step * dk
                r_t, cof_t, H_t = evaluate(trial, k_t)
                res_t = float(np.max(np.abs(r_t)))
                if np.all(min_eigenvalue(H_t) > 0) and np.isfinite(res_t) and res_t < res:
                    break
                step *= 0.5
            else:
                raise SolverError("lost ellipticity: I + D^2 xi not positive definite after damping")
            xi, kappa, r, cof, H, res = trial, k_t, r_t, cof_t, H_t, res_t
            history.append(res)
            it += 1
        lam = float(min_eigenvalue(H).min())
        if lam <= 0:
            raise SolverError("lost ellipticity")
        xi = xi - xi.mean()
        field_ = ScalarField(grid, xi)
        self.corrector_ = CorrectorField(
            xi=field_,
            residual=res,
            mean=float(xi.mean()),
            kappa=float(kappa),
            raw_residual=corrector_residual(field_, fp),
            min_eigenvalue=lam,
            iterations=it,
            residual_history=history,
            wall_time=time.perf_counter() - t0,
        )
        return self

    def transform(self, points):
        """Corrector values at grid-node coordinates (wrapped into the cell)."""
        xi = self.corrector_.xi
        g = xi.grid
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = []
        for axis, h in enumerate(g.spacings):
            k = pts[:, axis] / h
            kr = np.rint(k)
            if np.any(np.abs(k - kr) > 1e-9 * np.maximum(1.0, np.abs(k))):
                raise CompatibilityError("points are not corrector grid nodes")
            idx.append(np.mod(kr.astype(np.int64), g.nodes[axis]))
        return xi.values[tuple(idx)]


def solve_corrector(fp_normalized: ScalarField, opts: dict = None) -> CorrectorField:
    return CellCorrector(**(opts or {})).fit(fp_normalized).corrector_


def separable_corrector_oracle(g, x, period: float = 1.0) -> np.ndarray:
    """Continuum corrector for ``f_p(x) = g(x_1)`` with mean one.

    ``xi_1'' = g - 1``, periodic, mean zero.  By Cauchy's formula for repeated
    integration ``xi_1(x) = int_0^x (x - t)(g(t) - 1) dt + c1 x + c2`` with
    ``c1``, ``c2`` fixed by periodicity and zero mean; each value is one
    adaptive quadrature.
    """
    a = float(period)

    def q(fun, lo, hi):
        return integrate.quad(fun, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]

    def e(t):
        return g(t) - 1.0

    # periodicity: xi(a) = xi(0)  ->  int_0^a (a - t) e dt + c1 a = 0
    c1 = -q(lambda t: (a - t) * e(t), 0.0, a) / a
    # zero mean: int_0^a xi = int_0^a (a - t)^2/2 e dt + c1 a^2/2 + c2 a = 0
    c2 = -(q(lambda t: 0.5 * (a - t) ** 2 * e(t), 0.0, a) + 0.5 * c1 * a * a) / a
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xm = np.mod(x, a)
    return np.array([q(lambda t, xv=xv: (xv - t) * e(t), 0.0, xv) + c1 * xv + c2 for xv in xm])
