import numpy as np
import pytest

from malab import (CellCorrector, CompatibilityError, PeriodicDensitySpec, PeriodicGrid, ScalarField, cell_average,
                   corrector_residual, normalize_periodic, solve_corrector)
from malab.corrector import separable_corrector_oracle
from malab.density import separable_spec


def fit(spec, nodes, **kw):
    nb, _ = normalize_periodic(spec)
    pg = PeriodicGrid(spec.dim, spec.periods, (nodes,) * spec.dim)
    return CellCorrector(**kw).fit(pg.sample(nb)).corrector_, nb


def test_flat_gives_zero():
    pg = PeriodicGrid(2, (1.0, 1.0), (16, 16))
    c = solve_corrector(ScalarField(pg, np.ones((16, 16))))
    assert np.all(c.xi.values == 0.0)
    assert c.iterations == 0


def test_incompatible_mean_rejected():
    pg = PeriodicGrid(2, (1.0, 1.0), (16, 16))
    with pytest.raises(CompatibilityError, match="incompatible average"):
        solve_corrector(ScalarField(pg, np.full((16, 16), 1.1)))


def test_normalize_scales_to_unit_mean():
    spec = PeriodicDensitySpec(2, (1.0, 1.0), (((1, 1), 0.1, 0.05),), 1.1)
    nb, avg = normalize_periodic(spec)
    assert cell_average(nb) == pytest.approx(1.0, abs=1e-12)
    assert avg == pytest.approx(cell_average(spec))


def test_separable_matches_oracle():
    spec = separable_spec([(1, 0.03, 0.04), (2, 0.02, 0.0)], dim=2)
    c, nb = fit(spec, 64)
    x = c.xi.grid.axes()[0]
    ref = separable_corrector_oracle(lambda t: float(nb(np.array([[t, 0.0]]))[0]), x)
    assert c.kappa == pytest.approx(1.0, abs=1e-12)
    # O(h^2) discretization error at 64 nodes
    assert np.abs(c.xi.values - ref[:, None]).max() < 4e-6
    assert abs(c.mean) <= 1e-12


def test_anisotropic_residual_and_kappa():
    spec = PeriodicDensitySpec(2, (1.0, 2.0), (((1, 1), 0.05, 0.02), ((0, 1), 0.03, 0.0)), 1.0)
    c, nb = fit(spec, 32, tol=1e-10)
    assert c.residual <= 1e-10
    assert abs(c.kappa - 1.0) < 1e-3
    assert c.min_eigenvalue > 0
    fp = PeriodicGrid(2, spec.periods, (32, 32)).sample(nb)
    assert corrector_residual(c.xi, fp) < 1e-3


def test_transform_wraps_nodes():
    spec = separable_spec([(1, 0.05, 0.0)], dim=2)
    nb, _ = normalize_periodic(spec)
    pg = PeriodicGrid(2, (1.0, 1.0), (16, 16))
    est = CellCorrector().fit(pg.sample(nb))
    pts = np.array([[0.25, 0.5], [1.25, -0.5]])
    v = est.transform(pts)
    assert v[0] == pytest.approx(v[1])
    with pytest.raises(CompatibilityError):
        est.transform(np.array([[0.1, 0.0]]))


def test_three_dimensional_corrector():
    spec = PeriodicDensitySpec(3, (4.0,) * 3, (((1, 0, 0), 0.05, 0.0), ((0, 1, 1), 0.03, 0.02)), 1.0)
    c, _ = fit(spec, 16)
    assert c.residual <= 1e-8
    assert abs(c.mean) <= 1e-12
