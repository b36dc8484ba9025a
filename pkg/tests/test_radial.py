import numpy as np
import pytest
from scipy import integrate

from malab import AssumptionError, RadialDensitySpec, parabola_deviation, radial_det_check, radial_sigma, radial_u, theorem_sigma
from malab.radial import RadialSolution, log_growth_table
from malab.rates import loglog_slope, power_law_limit


def nested_formula(spec, n, r):
    """Direct evaluation of n^{1/n} int_0^r (int_0^s t^{n-1} f dt)^{1/n} ds."""
    inner = lambda s: integrate.quad(lambda t: t ** (n - 1) * spec(np.array(t)), 0, s, epsabs=1e-13, limit=200)[0]  # noqa: E731
    pts = [1.0, 2.0] if r > 2 else None
    return n ** (1 / n) * integrate.quad(lambda s: inner(s) ** (1 / n), 0, r, epsabs=1e-12, limit=200, points=pts)[0]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_matches_nested_formula(n):
    spec = RadialDensitySpec(0.5, 3.0)
    for r in (0.5, 1.5, 3.0, 7.0):
        assert radial_u(spec, n, r) == pytest.approx(nested_formula(spec, n, r), rel=1e-9, abs=1e-11)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_det_identity(n):
    spec = RadialDensitySpec(0.4, 3.5)
    assert radial_det_check(spec, n, np.geomspace(0.5, 500, 30)) < 1e-8


def test_flat_is_parabola():
    sol = RadialSolution(RadialDensitySpec(0.0, 3.0), 3)
    assert sol.deviation(1e5) == 0.0
    assert sol.d2u(2.0) == pytest.approx(1.0)


def test_deviation_rejects_negative_radius():
    with pytest.raises(ValueError):
        RadialSolution(RadialDensitySpec(0.1, 3.0), 3).deviation(-1.0)


def test_deviation_is_consistent_across_breakpoints():
    sol = RadialSolution(RadialDensitySpec(0.2, 3.0), 3)
    a = sol.deviation(1000.0)
    fresh = RadialSolution(RadialDensitySpec(0.2, 3.0), 3).deviation(1000.0)
    assert a == fresh


def test_sample_uses_interpolant_accurately():
    spec = RadialDensitySpec(0.3, 3.0)
    sol = RadialSolution(spec, 3)
    pts = np.array([[0.3, 0.4, 0.0], [3.0, 4.0, 12.0], [10.0, 0.0, 0.0]])
    exact = np.array([sol.u(np.linalg.norm(p)) for p in pts])
    assert np.allclose(sol.sample(pts), exact, rtol=1e-10, atol=1e-12)


def test_decay_slope_beta4_n3():
    pd = parabola_deviation(RadialDensitySpec(0.1, 4.0), 3, np.geomspace(10, 1e5, 41))
    assert pd.extrapolated
    assert pd.slope(1e3, 1e5).slope == pytest.approx(-1.0, abs=0.05)


def test_counterexample_not_extrapolated():
    pd = parabola_deviation(RadialDensitySpec(1.0, 2.0), 3, np.geomspace(10, 1e5, 21))
    assert not pd.extrapolated
    rows = log_growth_table(RadialDensitySpec(1.0, 2.0), 3, [1e3, 1e5])
    assert rows[0]["deviation"] < rows[1]["deviation"]


def test_parabola_deviation_input_checks():
    spec = RadialDensitySpec(0.1, 3.0)
    with pytest.raises(ValueError):
        parabola_deviation(spec, 3, [10.0, 5.0])
    with pytest.raises(ValueError):
        parabola_deviation(spec, 3, [10.0, 2e6])


def test_sigma_helpers():
    assert radial_sigma(3, 4.0) == 1.0
    assert radial_sigma(5, 3.0) == 1.0
    assert theorem_sigma(5, 3.0) == 3.0
    with pytest.raises(AssumptionError):
        radial_sigma(3, 2.0)
    with pytest.raises(AssumptionError):
        theorem_sigma(2, 3.0)


def test_loglog_and_power_law_helpers():
    x = np.geomspace(1, 100, 20)
    assert loglog_slope(x, 3 * x**-1.5).slope == pytest.approx(-1.5)
    lim = power_law_limit(x, 2.0 + 5 * x**-1.0)
    assert lim.converged
    assert lim.limit == pytest.approx(2.0, abs=1e-10)
