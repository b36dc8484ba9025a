"""Decay-rate estimation by log-log regression and power-law extrapolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    npoints: int


def loglog_slope(x, y) -> SlopeFit:
    """Least-squares slope of ``log y`` against ``log x``.

    Non-positive entries of ``y`` are dropped.  ``stderr`` is NaN when fewer
    than three points remain.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if lx.size < 2:
        return SlopeFit(np.nan, np.nan, np.nan, int(lx.size))
    if lx.size == 2:
        s = (ly[1] - ly[0]) / (lx[1] - lx[0])
        return SlopeFit(float(s), np.nan, float(ly[0] - s * lx[0]), 2)
    res = stats.linregress(lx, ly)
    return SlopeFit(float(res.slope), float(res.stderr), float(res.intercept), int(lx.size))


def local_slopes(x, y) -> np.ndarray:
    """Pointwise ``d log|y| / d log x`` by (non-uniform) central differences."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        ly = np.log(y)
        if x.size < 2:
            return np.full(x.shape, np.nan)
        return np.gradient(ly, np.log(x))


@dataclass
class PowerLawLimit:
    limit: float
    exponent: float
    converged: bool


def power_law_limit(x, y, min_exponent: float = 0.05, max_exponent: float = 20.0) -> PowerLawLimit:
    """Limit of ``y(x) = c + K x^{-p}`` as ``x -> inf``.

    The exponent ``p`` is fitted through the three largest abscissae, then ``c``
    follows by Richardson extrapolation from the two largest.  Sequences that
    do not converge (logarithmic or power growth) give ``converged=False`` and
    ``limit=0``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if x.size < 3:
        return PowerLawLimit(0.0, np.nan, False)
    x1, x2, x3 = x[-3:]
    y1, y2, y3 = y[-3:]
    d21, d32 = y2 - y1, y3 - y2
    if d21 == 0.0:
        if d32 == 0.0:
            return PowerLawLimit(float(y3), np.inf, True)
        return PowerLawLimit(0.0, np.nan, False)
    target = d32 / d21

    def ratio(p):
        return (x3**-p - x2**-p) / (x2**-p - x1**-p) - target

    lo, hi = ratio(min_exponent), ratio(max_exponent)
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo * hi > 0:
        return PowerLawLimit(0.0, np.nan, False)
    p = optimize.brentq(ratio, min_exponent, max_exponent, xtol=1e-14)
    a3, a2 = x3**p, x2**p
    c = (a3 * y3 - a2 * y2) / (a3 - a2)
    return PowerLawLimit(float(c), float(p), True)
