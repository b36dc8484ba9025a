"""Radial solutions of ``det(D^2 u) = f(|x|)`` in any dimension.

For radial ``f`` the entire convex solution with ``u(0) = 0`` is

    u(r) = n^{1/n} int_0^r ( int_0^s t^{n-1} f(t) dt )^{1/n} ds .

Writing ``f = 1 + excess`` and ``D(s) = int_0^s t^{n-1} excess(t) dt`` gives
``u'(s) = s (1 + n D(s) s^{-n})^{1/n}``, so the deviation from the parabola,
``u(r) - r^2/2 = int_0^r (u'(s) - s) ds``, can be integrated directly with
``expm1``/``log1p`` and no catastrophic cancellation even at ``r = 1e6``.
Both integrals are adaptive (QUADPACK) on dyadic intervals ``[2^k, 2^{k+1}]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .density import RadialDensitySpec
from .exceptions import AssumptionError, QuadratureError
from .rates import PowerLawLimit, local_slopes, loglog_slope, power_law_limit

_EPSREL = 1e-13
_EPSABS = 1e-15


def _quad(func, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(func, a, b, epsabs=_EPSABS, epsrel=_EPSREL, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature did not converge on [{a}, {b}]: {exc}") from exc
    return val


def _dyadic_floor(s: float) -> float:
    """Largest breakpoint ``<= s`` among 0, 1, 2, 4, 8, ..."""
    if s < 1.0:
        return 0.0
    return float(2.0 ** np.floor(np.log2(s)))


class RadialSolution:
    """Quadrature tables for one radial density and dimension.

    Tables of ``D`` and of the parabola deviation at dyadic breakpoints are
    filled lazily and reused, so repeated evaluation is cheap.
    """

    def __init__(self, spec: RadialDensitySpec, n: int):
        if n < 2:
            raise AssumptionError("dimension must be at least 2")
        self.spec = spec
        self.n = int(n)
        self._D = {0.0: 0.0, 1.0: 0.0}
        self._dev = {0.0: 0.0}

    def _weighted_excess(self, t):
        return t ** (self.n - 1) * self.spec.excess(np.asarray(t, dtype=float))

    def _D_at_break(self, b: float) -> float:
        if b in self._D:
            return self._D[b]
        prev = b / 2.0
        val = self._D_at_break(prev) + _quad(self._weighted_excess, prev, b)
        self._D[b] = val
        return val

    def excess_moment(self, s: float) -> float:
        """``D(s) = int_0^s t^{n-1} (f(t) - 1) dt``."""
        if self.spec.is_flat or s <= 1.0:
            return 0.0
        b = _dyadic_floor(s)
        base = self._D_at_break(b)
        return base if s == b else base + _quad(self._weighted_excess, b, s)

    def slope_excess(self, s: float) -> float:
        """``u'(s) - s``."""
        if s <= 1.0 or self.spec.is_flat:
            return 0.0
        x = self.n * self.excess_moment(s) / s**self.n
        return s * np.expm1(np.log1p(x) / self.n)

    def _dev_at_break(self, b: float) -> float:
        if b in self._dev:
            return self._dev[b]
        prev = 0.0 if b <= 1.0 else b / 2.0
        val = self._dev_at_break(prev) + _quad(self.slope_excess, prev, b)
        self._dev[b] = val
        return val

    def deviation(self, r: float) -> float:
        """``u(r) - r^2 / 2``."""
        r = float(r)
        if r < 0:
            raise ValueError("r must be non-negative")
        if self.spec.is_flat or r <= 1.0:
            return 0.0
        b = _dyadic_floor(r)
        base = self._dev_at_break(b)
        return base if r == b else base + _quad(self.slope_excess, b, r)

    def u(self, r: float) -> float:
        return 0.5 * float(r) ** 2 + self.deviation(r)

    def du(self, r: float) -> float:
        return float(r) + self.slope_excess(r)

    def d2u(self, r: float) -> float:
        """``u''`` from ``(u'^n)' = n r^{n-1} f``."""
        r = float(r)
        if r == 0.0:
            return float(self.spec(np.array(0.0))) ** (1.0 / self.n)
        return r ** (self.n - 1) * float(self.spec(np.array(r))) / self.du(r) ** (self.n - 1)

    def table(self, radii) -> dict:
        radii = np.asarray(radii, dtype=float)
        return {
            "r": radii,
            "D": np.array([self.excess_moment(r) for r in radii]),
            "u": np.array([self.u(r) for r in radii]),
            "du": np.array([self.du(r) for r in radii]),
        }

    def interpolant(self, r_max: float, points_per_octave: int = 48) -> CubicHermiteSpline:
        """Hermite interpolant of the deviation on ``[0, r_max]``.

        Values and slopes both come from quadrature, so accuracy is limited by
        the node spacing only (fourth order).
        """
        inner = np.linspace(0.0, min(2.0, r_max), 129)
        if r_max > 2.0:
            octaves = np.log2(r_max / 2.0)
            outer = 2.0 * 2.0 ** np.linspace(0.0, octaves, max(2, int(np.ceil(octaves * points_per_octave)) + 1))
            nodes = np.unique(np.concatenate([inner, outer]))
        else:
            nodes = inner
        vals = np.empty_like(nodes)
        prev_r, prev_v = 0.0, 0.0
        for k, r in enumerate(nodes):
            if r <= 1.0 or self.spec.is_flat:
                vals[k] = 0.0
            else:
                lo = max(prev_r, 1.0)
                vals[k] = prev_v + _quad(self.slope_excess, lo, r)
            prev_r, prev_v = r, vals[k]
        slopes = np.array([self.slope_excess(r) for r in nodes])
        return CubicHermiteSpline(nodes, vals, slopes)

    def sample(self, points: np.ndarray) -> np.ndarray:
        """``u(|x|)`` at an array of points ``(N, n)`` via the Hermite table."""
        points = np.asarray(points, dtype=float)
        r = np.linalg.norm(points, axis=-1)
        spline = self.interpolant(max(float(r.max()), 2.0) * 1.0001)
        return 0.5 * r**2 + spline(r)


def radial_u(spec: RadialDensitySpec, n: int, r: float) -> float:
    return RadialSolution(spec, n).u(r)


def radial_det_check(spec: RadialDensitySpec, n: int, r_samples) -> float:
    """Sup over samples of ``|u'' (u'/r)^{n-1} - f(r)|``."""
    sol = RadialSolution(spec, n)
    r_samples = np.asarray(r_samples, dtype=float)
    if np.any(r_samples <= 0):
        raise ValueError("samples must be positive")
    worst = 0.0
    for r in r_samples:
        det = sol.d2u(r) * (sol.du(r) / r) ** (n - 1)
        worst = max(worst, abs(det - float(spec(np.array(r)))))
    return worst


@dataclass
class ParabolaDeviation:
    r: np.ndarray
    deviation: np.ndarray
    local_slope: np.ndarray
    c_star: float
    extrapolated: bool
    exponent: float
    n: int

    def slope(self, r_min: float = None, r_max: float = None):
        """Log-log slope of ``|deviation|`` over ``[r_min, r_max]``."""
        sel = np.ones(self.r.shape, dtype=bool)
        if r_min is not None:
            sel &= self.r >= r_min
        if r_max is not None:
            sel &= self.r <= r_max
        return loglog_slope(self.r[sel], np.abs(self.deviation[sel]))

    def rows(self):
        for r, d, s in zip(self.r, self.deviation, self.local_slope):
            yield {"r": float(r), "deviation": float(d), "local_slope": float(s)}


def parabola_deviation(spec: RadialDensitySpec, n: int, radii) -> ParabolaDeviation:
    """Series ``u(r) - r^2/2 - c*`` with ``c*`` extrapolated to ``r = inf``.

    ``c*`` comes from Richardson extrapolation of a power law fitted through
    the largest radii.  When the deviation does not converge (``beta <= 2``)
    the power law degenerates to ``a log r + c*``; ``c*`` is then the
    intercept of that law through the two largest radii, ``exponent`` is 0 and
    ``extrapolated`` is False.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be increasing")
    if radii[-1] > 1e6:
        raise ValueError("max radius is 1e6")
    sol = RadialSolution(spec, n)
    raw = np.array([sol.deviation(r) for r in radii])
    if spec.is_flat:
        lim = PowerLawLimit(0.0, np.inf, True)
    else:
        lim = power_law_limit(radii, raw)
        if not lim.converged and radii.size >= 2:
            # p -> 0 limit of c + K r^{-p}: the law a log r + c through the two largest radii
            (r1, r2), (y1, y2) = radii[-2:], raw[-2:]
            a = (y2 - y1) / np.log(r2 / r1)
            lim = PowerLawLimit(float(y2 - a * np.log(r2)), 0.0, False)
    dev = raw - lim.limit
    return ParabolaDeviation(
        r=radii,
        deviation=dev,
        local_slope=local_slopes(radii, dev),
        c_star=lim.limit,
        extrapolated=lim.converged,
        exponent=lim.exponent,
        n=n,
    )


def radial_sigma(n: int, beta: float) -> float:
    """Decay exponent of the radial oracle: ``min(beta - 2, n - 2)``.

    Follows from ``u'(r) - r ~ d/(n - beta) r^{1-beta} + C0 r^{1-n}``.
    """
    if beta <= 2:
        raise AssumptionError("outside theorem hypothesis: beta must exceed 2")
    if n < 3:
        raise AssumptionError("outside theorem hypothesis: n must be at least 3")
    return float(min(beta - 2.0, n - 2.0))


def theorem_sigma(n: int, beta: float) -> float:
    """The exponent stated by the classification theorem, ``min(beta, n - 2)``."""
    if beta <= 2 or n < 3:
        raise AssumptionError("outside theorem hypothesis")
    return float(min(beta, n - 2.0))


def log_growth_table(spec: RadialDensitySpec, n: int, radii) -> list:
    """Rows ``(r, deviation, deviation / log r)`` for the sharpness counterexample."""
    sol = RadialSolution(spec, n)
    rows = []
    for r in np.asarray(radii, dtype=float):
        d = sol.deviation(r)
        rows.append({"r": float(r), "deviation": d, "ratio": d / np.log(r)})
    return rows
