import numpy as np
import pytest

from malab import (AnnulusSpec, AssumptionError, BoxGrid, FitError, GridError, ParabolaPeriodicRegressor,
                   PeriodicDensitySpec, RadialDensitySpec, SymMatrixField, abp_ratio, check_detA, fit_decomposition,
                   fractional_annuli, geometric_annuli, green_decay, level_sets, quotient_scan)
from malab.asymptotics import hessian_eigen_range, period_lattice, resolved_frequencies
from malab.radial import RadialSolution

A2 = np.array([[1.5, 0.3], [0.3, 0.8]])


def quad(A, b=None, c=0.0):
    b = np.zeros(A.shape[0]) if b is None else b
    return lambda p: 0.5 * np.einsum("...i,ij,...j->...", p, A, p) + p @ b + c


def test_annulus_validation():
    g = BoxGrid(2, 1.0, 17)
    with pytest.raises(GridError):
        AnnulusSpec(g, 0.5, 0.4)
    with pytest.raises(GridError):
        AnnulusSpec(g, 0.5, 1.5)
    with pytest.raises(GridError):
        AnnulusSpec(g, 0.001, 0.002)
    a = fractional_annuli(g, [0.25, 0.5, 0.75])
    assert len(a) == 2 and a[0].r1 == pytest.approx(0.5)
    geo = geometric_annuli(g, 3, 0.1)
    assert geo[-1].r1 == pytest.approx(1.0 - 4 * g.spacing)


def test_exact_parabola_recovered():
    g = BoxGrid(2, 4.0, 65)
    u = g.sample(quad(A2, np.array([0.2, -0.1]), 0.7))
    fit = fit_decomposition(u, fractional_annuli(g, [0.1, 0.3, 0.5, 0.7, 0.9]))
    assert np.allclose(fit.A, A2, atol=1e-10)
    assert np.allclose(fit.b, [0.2, -0.1], atol=1e-10)
    assert fit.c == pytest.approx(0.7, abs=1e-10)
    assert fit.residuals.max() < 1e-9
    assert fit.detA == pytest.approx(np.linalg.det(A2))


def test_periodic_part_recovered():
    fp = PeriodicDensitySpec(2, (1.0, 1.0), (((1, 0), 0.1, 0.0), ((1, 1), 0.0, 0.1)), 1.0)
    g = BoxGrid(2, 4.0, 129)
    v = lambda p: 0.01 * np.cos(2 * np.pi * p[..., 0]) - 0.02 * np.sin(2 * np.pi * (p[..., 0] + p[..., 1]))  # noqa: E731
    u = g.sample(lambda p: quad(A2)(p) + v(p))
    fit = fit_decomposition(u, fractional_annuli(g, [0.1, 0.3, 0.5, 0.7, 0.9]), fp, K=1)
    coeffs = {k: (c, s) for k, c, s in fit.fourier}
    assert coeffs[(1, 0)] == pytest.approx((0.01, 0.0), abs=1e-8)
    assert coeffs[(1, 1)] == pytest.approx((0.0, -0.02), abs=1e-8)
    assert fit.residuals.max() < 1e-8


def test_regressor_sklearn_api():
    rng = np.random.default_rng(0)
    X = rng.uniform(-3, 3, (400, 2))
    y = quad(A2)(X) + 0.05 * np.cos(2 * np.pi * X[:, 1] / 2.0)
    reg = ParabolaPeriodicRegressor(periods=(2.0, 2.0), order=1).fit(X, y)
    assert reg.score(X, y) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(reg.A_, A2, atol=1e-10)
    assert np.abs(reg.periodic_part(X) - 0.05 * np.cos(np.pi * X[:, 1])).max() < 1e-10
    assert reg.get_params()["order"] == 1


def test_regressor_degenerate():
    X = np.zeros((50, 2))
    with pytest.raises(FitError, match="degenerate"):
        ParabolaPeriodicRegressor().fit(X, np.zeros(50))


def test_non_spd_fit_flagged():
    g = BoxGrid(2, 2.0, 33)
    u = g.sample(lambda p: 0.5 * (p[..., 0] ** 2 - p[..., 1] ** 2))
    fit = fit_decomposition(u, fractional_annuli(g, [0.1, 0.3, 0.5, 0.8]))
    assert fit.profile is None
    assert "A not SPD" in fit.flags


def test_fit_input_checks():
    g = BoxGrid(2, 2.0, 33)
    u = g.sample(quad(A2))
    with pytest.raises(ValueError):
        fit_decomposition(u, fractional_annuli(g, [0.1, 0.3, 0.5]))
    with pytest.raises(ValueError):
        fit_decomposition(u, fractional_annuli(g, [0.1, 0.3, 0.5, 0.8]), K=20)


def test_resolved_frequencies_drop_fine_modes():
    kept, dropped = resolved_frequencies(2, 2, (1.0, 1.0), 0.2)
    assert all(max(abs(k) for k in f) <= 1 for f in kept)
    assert dropped


def test_radial_sigma_from_box_sample():
    sol = RadialSolution(RadialDensitySpec(0.1, 4.0), 3)
    g = BoxGrid(3, 2000.0, 65)
    u = g.sample(lambda p: sol.sample(p.reshape(-1, 3)).reshape(p.shape[:-1]))
    fit = fit_decomposition(u, geometric_annuli(g, 6, 100.0), K=0)
    assert 0.85 <= fit.sigma <= 1.15


def test_check_detA():
    g = BoxGrid(2, 2.0, 33)
    fit = fit_decomposition(g.sample(quad(np.eye(2))), fractional_annuli(g, [0.1, 0.3, 0.5, 0.8]))
    assert check_detA(fit, PeriodicDensitySpec.constant(2)) == pytest.approx(0.0, abs=1e-10)


def test_quotient_scan_and_eigen_range():
    g = BoxGrid(2, 4.0, 33)
    u = g.sample(quad(np.eye(2)))
    lattice = period_lattice((1.0, 1.0))
    stats = quotient_scan(u, lattice, fractional_annuli(g, [1e-9, 0.5, 1.0]))
    assert all(s.deviation < 1e-10 for s in stats)
    assert stats[-1].skipped > 0
    lo, hi = hessian_eigen_range(u, 2.0)
    assert lo == pytest.approx(1.0) and hi == pytest.approx(1.0)


def test_level_sets_flat_and_anisotropic():
    g = BoxGrid(2, 4.0, 129)
    Ms = [0.2, 0.4, 0.8, 1.6]
    flat = level_sets(g.sample(quad(np.eye(2))), Ms)
    tol = 2 * g.spacing / np.sqrt(2 * min(Ms))
    assert abs(flat.exponent - 1.0) <= tol
    aniso = level_sets(g.sample(quad(np.diag([4.0, 1.0]))), Ms)
    assert abs(aniso.exponent - 1.0) <= 0.1
    assert all(r.radius_ratio < 1.5 for r in aniso.rows)


def test_level_sets_off_center_minimum():
    g = BoxGrid(2, 4.0, 33)
    u = g.sample(lambda p: 0.5 * ((p - 3.0) ** 2).sum(-1))
    with pytest.raises(FitError, match="minimum not near center"):
        level_sets(u, [0.5])


def test_green_decay_identity():
    g = BoxGrid(3, 1.0, 49)
    gd = green_decay(g.sample(lambda p: 0.5 * (p**2).sum(-1)))
    assert -1.15 <= gd.slope <= -0.85


def test_green_requires_ellipticity():
    g = BoxGrid(3, 1.0, 17)
    u = g.sample(lambda p: 0.5 * (p[..., 0] ** 2 + p[..., 1] ** 2 - p[..., 2] ** 2))
    with pytest.raises(AssumptionError):
        green_decay(u)


def test_abp_ratio_bounded():
    ratios = []
    for m in (33, 65):
        g = BoxGrid(2, 0.5, m)
        a = SymMatrixField(g, np.broadcast_to(np.eye(2), (m - 2, m - 2, 2, 2)).copy(), margin=1)
        ratios.append(abp_ratio(a, g.sample(lambda p: np.ones(p.shape[:-1]))))
    assert 0 < ratios[1] < 1.0
    assert ratios[0] == pytest.approx(ratios[1], rel=0.05)
    g = BoxGrid(2, 0.5, 17)
    a = SymMatrixField(g, np.broadcast_to(np.eye(2), (15, 15, 2, 2)).copy(), margin=1)
    assert abp_ratio(a, g.sample(lambda p: np.zeros(p.shape[:-1]))) == 0.0
    bad = SymMatrixField(g, np.broadcast_to(-np.eye(2), (15, 15, 2, 2)).copy(), margin=1)
    with pytest.raises(AssumptionError):
        abp_ratio(bad, g.sample(lambda p: np.ones(p.shape[:-1])))
