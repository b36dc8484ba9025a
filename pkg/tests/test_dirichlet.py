import numpy as np
import pytest

from malab import (BoxGrid, DirichletMongeAmpere, GridError, NotSPDError, PeriodicGrid, QuadraticProfile, ScalarField,
                   SolverError, boundary_from_profile, newton_solve, poisson_initializer, residual)
from malab.dirichlet import boundary_from_function
from malab.pipeline import amgm_margin, manufactured_pair


def ones(g, c=1.0):
    return g.sample(lambda p: np.full(p.shape[:-1], c))


def test_profile_requires_spd():
    with pytest.raises(NotSPDError):
        QuadraticProfile(np.diag([1.0, -1.0]))


def test_flat_problem_needs_no_newton():
    g = BoxGrid(2, 1.0, 33)
    u, rep = newton_solve(g, ones(g), boundary_from_profile(g, QuadraticProfile.identity(2)), {"tol": 1e-8})
    assert rep.converged
    assert rep.newton_iterations <= 1
    assert np.abs(u.values - g.sample(lambda p: 0.5 * (p**2).sum(-1)).values).max() < 1e-9


def test_poisson_initializer_lies_above():
    g = BoxGrid(2, 1.0, 33)
    ustar, fstar = manufactured_pair(0.01)
    f = g.sample(fstar)
    bd = boundary_from_function(g, ustar)
    u0 = poisson_initializer(g, f, bd)
    u, _ = newton_solve(g, f, bd, {"tol": 1e-10})
    assert np.all(u0.values >= u.values - 1e-9)


def test_manufactured_solution_converges():
    g = BoxGrid(2, 1.0, 33)
    ustar, fstar = manufactured_pair(0.01)
    f = g.sample(fstar)
    est = DirichletMongeAmpere(tol=1e-10).fit(f, boundary_from_function(g, ustar))
    assert est.report_.converged
    assert est.report_.convexity_violations == 0
    assert np.abs(est.residual_field(f)).max() <= 1e-10
    assert np.abs(est.solution_.values - g.sample(ustar).values).max() < 5e-3


def test_residual_periodic_and_box():
    g = BoxGrid(2, 1.0, 9)
    u = g.sample(lambda p: 0.5 * (p**2).sum(-1))
    assert np.abs(residual(u, ones(g))).max() < 1e-12
    pg = PeriodicGrid(2, (1.0, 1.0), (8, 8))
    z = ScalarField(pg, np.zeros((8, 8)))
    assert np.abs(residual(z, ScalarField(pg, np.zeros((8, 8))))).max() == 0.0


def test_stagnation_raises():
    g = BoxGrid(2, 1.0, 33)
    ustar, fstar = manufactured_pair(0.01)
    with pytest.raises(SolverError, match="stagnation"):
        newton_solve(g, g.sample(fstar), boundary_from_function(g, ustar), {"tol": 1e-14, "max_newton": 1})


def test_nonpositive_density_rejected():
    g = BoxGrid(2, 1.0, 17)
    with pytest.raises(SolverError):
        newton_solve(g, ones(g, -1.0), boundary_from_profile(g, QuadraticProfile.identity(2)))


def test_boundary_grid_mismatch():
    g, h = BoxGrid(2, 1.0, 17), BoxGrid(2, 1.0, 33)
    with pytest.raises(GridError):
        newton_solve(g, ones(g), boundary_from_profile(h, QuadraticProfile.identity(2)))


def test_corrector_lattice_mismatch():
    g = BoxGrid(2, 1.0, 17)
    xi = ScalarField(PeriodicGrid(2, (1.0, 1.0), (7, 7)), np.zeros((7, 7)))
    with pytest.raises(GridError, match="lattice mismatch"):
        boundary_from_profile(g, QuadraticProfile.identity(2), xi)


def test_comparison_principle_3d():
    g = BoxGrid(3, 1.0, 17)
    bd = boundary_from_profile(g, QuadraticProfile.identity(3))
    tol = 1e-10
    u_hi, _ = newton_solve(g, g.sample(lambda p: 1.2 + 0.1 * np.sin(3 * p[..., 0])), bd, {"tol": tol})
    u_lo, _ = newton_solve(g, ones(g), bd, {"tol": tol})
    assert np.all(u_hi.values <= u_lo.values + 2 * tol)


def test_amgm_margin_nonnegative():
    g = BoxGrid(2, 1.0, 33)
    ustar, fstar = manufactured_pair(0.01)
    f = g.sample(fstar)
    u, _ = newton_solve(g, f, boundary_from_function(g, ustar), {"tol": 1e-10})
    assert amgm_margin(u, f) >= -1e-9


@pytest.mark.parametrize("method", ["gmres", "direct"])
def test_linear_solver_choices(method):
    g = BoxGrid(2, 1.0, 17)
    ustar, fstar = manufactured_pair(0.01)
    u, rep = newton_solve(g, g.sample(fstar), boundary_from_function(g, ustar), {"tol": 1e-10, "linear_solver": method})
    assert rep.converged
