"""Asymptotic analysis of computed solutions.

The expected far-field shape of an entire solution is a parabola plus a
periodic function plus a decaying remainder,

    u(x) = x'Ax/2 + b.x + c + v(x) + O(|x|^{-sigma}).

This module fits that decomposition on annuli of a box grid, measures the
remainder decay, and runs the geometric diagnostics used alongside it:
second incremental quotients along period vectors, sub-level-set geometry,
decay of the Green's function of the linearized operator, and the ratio of
the Aleksandrov-Bakelman-Pucci bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator, RegressorMixin

from .calculus import det_and_cofactor, hessian_array, max_eigenvalue, min_eigenvalue, second_quotient_array
from .density import DensitySpec, PeriodicDensitySpec, cell_average, dual_frequencies
from .dirichlet import QuadraticProfile
from .exceptions import AssumptionError, FitError, GridError, NotSPDError
from .grid import BoxGrid, LatticeVector, ScalarField, SymMatrixField
from .operators import assemble, divergence_stencil, nondivergence_stencil, solve_linear
from .rates import loglog_slope
from ._validation import check_box_field, check_points


# ---------------------------------------------------------------------------
# annuli
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnulusSpec:
    """Nodes of a box grid with ``r0 <= |x| < r1`` (centred at the origin)."""

    grid: BoxGrid
    r0: float
    r1: float

    def __post_init__(self):
        if not (0 < self.r0 < self.r1 <= self.grid.half_width * (1 + 1e-12)):
            raise GridError(f"annulus [{self.r0}, {self.r1}) must satisfy 0 < r0 < r1 <= L")
        if not np.any(self.mask):
            raise GridError(f"annulus [{self.r0}, {self.r1}) contains no nodes")

    @property
    def mask(self) -> np.ndarray:
        r = self.grid.radius()
        return (r >= self.r0) & (r < self.r1)

    @property
    def mean_radius(self) -> float:
        return float(self.grid.radius()[self.mask].mean())

    def to_dict(self) -> dict:
        return {"r0": self.r0, "r1": self.r1, "nodes": int(np.count_nonzero(self.mask))}


def geometric_annuli(grid: BoxGrid, count: int, r_min: float, r_max: float = None,
                     boundary_cells: int = 4) -> list:
    """``count`` annuli with geometrically spaced edges in ``[r_min, r_max]``.

    ``r_max`` defaults to ``L - boundary_cells * h`` so that the boundary
    layer is excluded.
    """
    if r_max is None:
        r_max = grid.half_width - boundary_cells * grid.spacing
    if not 0 < r_min < r_max:
        raise GridError("need 0 < r_min < r_max")
    edges = np.geomspace(r_min, r_max, count + 1)
    return [AnnulusSpec(grid, float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


def fractional_annuli(grid: BoxGrid, fractions) -> list:
    """Annuli with edges ``fractions * L``."""
    L = grid.half_width
    fr = np.asarray(fractions, dtype=float)
    return [AnnulusSpec(grid, float(a * L), float(b * L)) for a, b in zip(fr[:-1], fr[1:])]


# ---------------------------------------------------------------------------
# parabola + periodic regression
# ---------------------------------------------------------------------------


def resolved_frequencies(dim: int, order: int, periods, spacing: float, min_nodes: float = 4.0) -> tuple:
    """Dual frequencies of order ``<= order`` with at least ``min_nodes`` nodes per wavelength.

    Returns ``(kept, dropped)``.
    """
    kept, dropped = [], []
    a = np.asarray(periods, dtype=float)
    for k in dual_frequencies(dim, order):
        wave = np.abs(np.asarray(k)) / a
        if np.all(wave * spacing * min_nodes <= 1.0 + 1e-12):
            kept.append(k)
        else:
            dropped.append(k)
    return kept, dropped


class ParabolaPeriodicRegressor(RegressorMixin, BaseEstimator):
    """Least squares on quadratics, linears, a constant and lattice Fourier modes.

    Parameters
    ----------
    periods : sequence of float or None
        Lattice periods; ``None`` fits the parabola only.
    order : int
        Fourier truncation ``K``: frequencies with ``max|k_i| <= K``.
    frequencies : list of tuple or None
        Explicit frequency list, overriding ``order``.
    rcond : float
        Relative singular-value cutoff; smaller values mean "degenerate fit".

    Attributes
    ----------
    profile_ : QuadraticProfile or None
        ``None`` when the fitted ``A`` is not SPD (see ``flags_``).
    A_, b_, c_ : fitted parabola
    fourier_ : list of (freq, cos, sin)
    flags_ : list of str
    """

    def __init__(self, periods=None, order=2, frequencies=None, rcond=1e-10):
        self.periods = periods
        self.order = order
        self.frequencies = frequencies
        self.rcond = rcond

    def _freqs(self, dim):
        if self.periods is None:
            return []
        if self.frequencies is not None:
            return [tuple(int(v) for v in k) for k in self.frequencies]
        return dual_frequencies(dim, self.order) if self.order > 0 else []

    def _design(self, X):
        n = X.shape[1]
        cols = []
        for i in range(n):
            for j in range(i, n):
                cols.append(X[:, i] * X[:, j] * (0.5 if i == j else 1.0))
        cols += [X[:, i] for i in range(n)]
        cols.append(np.ones(X.shape[0]))
        if self.freqs_:
            W = 2 * np.pi * np.asarray(self.freqs_, dtype=float) / np.asarray(self.periods, dtype=float)
            ph = X @ W.T
            for q in range(W.shape[0]):
                cols += [np.cos(ph[:, q]), np.sin(ph[:, q])]
        return np.column_stack(cols)

    def fit(self, X, y):
        X = check_points(X)
        y = np.asarray(y, dtype=float).ravel()
        if y.size != X.shape[0]:
            raise ValueError("X and y have different lengths")
        n = X.shape[1]
        self.n_features_in_ = n
        self.freqs_ = self._freqs(n)
        D = self._design(X)
        if D.shape[0] < D.shape[1]:
            raise FitError("degenerate fit: fewer samples than basis functions")
        scale = np.linalg.norm(D, axis=0)
        if np.any(scale == 0):
            raise FitError("degenerate fit: a basis function vanishes on the samples")
        coef, _, rank, sv = np.linalg.lstsq(D / scale, y, rcond=None)
        self.condition_ = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
        if rank < D.shape[1] or sv[-1] < self.rcond * sv[0]:
            raise FitError(f"degenerate fit: condition number {self.condition_:.3e}")
        coef = coef / scale
        self.coef_ = coef
        nq = n * (n + 1) // 2
        A = np.zeros((n, n))
        iu = np.triu_indices(n)
        A[iu] = coef[:nq]
        A = A + np.triu(A, 1).T
        self.A_ = A
        self.b_ = coef[nq:nq + n]
        self.c_ = float(coef[nq + n])
        fc = coef[nq + n + 1:]
        self.fourier_ = [(k, float(fc[2 * q]), float(fc[2 * q + 1])) for q, k in enumerate(self.freqs_)]
        self.flags_ = []
        try:
            self.profile_ = QuadraticProfile(A, self.b_, self.c_)
        except NotSPDError:
            self.profile_ = None
            self.flags_.append("A not SPD")
        return self

    def predict(self, X):
        X = check_points(X, self.n_features_in_)
        return self._design(X) @ self.coef_

    def periodic_part(self, X):
        """``v(x)``: the Fourier part of the fit (mean zero by construction)."""
        X = check_points(X, self.n_features_in_)
        if not self.freqs_:
            return np.zeros(X.shape[0])
        D = self._design(X)
        k0 = self.n_features_in_ * (self.n_features_in_ + 3) // 2 + 1
        return D[:, k0:] @ self.coef_[k0:]


@dataclass
class DecompositionFit:
    """Fitted ``P + v`` plus the per-annulus size of the remainder.

    ``residuals`` are sup norms of ``u - P - v`` per annulus.  ``offset`` is the
    constant that best explains the signed annulus means of the remainder as
    ``offset + K r^{-p}``; ``sigma`` is minus the log-log slope of
    ``sup|u - P - v - offset|`` against mean annulus radius over the annuli
    other than the fitting one, with its least-squares standard error.
    """

    profile: QuadraticProfile | None
    A: np.ndarray
    b: np.ndarray
    c: float
    fourier: list
    periods: tuple
    order: int
    annuli: list
    radii: np.ndarray
    residuals: np.ndarray
    mean_residuals: np.ndarray
    corrected_residuals: np.ndarray
    offset: float
    sigma: float
    sigma_stderr: float
    fit_annulus: int
    condition: float
    flags: list = field(default_factory=list)

    @property
    def detA(self) -> float:
        return float(np.linalg.det(self.A))

    def predict(self, X) -> np.ndarray:
        """``P(x) + v(x)`` at points ``(N, n)``."""
        X = check_points(X, self.A.shape[0])
        out = 0.5 * np.einsum("ni,ij,nj->n", X, self.A, X) + X @ self.b + self.c
        if self.fourier:
            a = np.asarray(self.periods, dtype=float)
            for k, cc, ss in self.fourier:
                ph = X @ (2 * np.pi * np.asarray(k, dtype=float) / a)
                out = out + cc * np.cos(ph) + ss * np.sin(ph)
        return out

    def annulus_residual(self, u: ScalarField, annulus: AnnulusSpec) -> float:
        """``sup |u - P - v|`` over the nodes of ``annulus``."""
        m = annulus.mask.ravel()
        return float(np.abs(u.values.ravel()[m] - self.predict(u.grid.points()[m])).max())

    def rows(self):
        for k, a in enumerate(self.annuli):
            yield {
                "r0": a.r0,
                "r1": a.r1,
                "mean_radius": float(self.radii[k]),
                "sup_residual": float(self.residuals[k]),
                "mean_residual": float(self.mean_residuals[k]),
                "corrected_residual": float(self.corrected_residuals[k]),
                "fit_annulus": int(k == self.fit_annulus),
            }

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "c": self.c,
            "detA": self.detA,
            "spd": self.profile is not None,
            "periods": list(self.periods) if self.periods is not None else None,
            "order": self.order,
            "fourier": [{"freq": list(k), "cos": c, "sin": s} for k, c, s in self.fourier],
            "annuli": list(self.rows()),
            "offset": self.offset,
            "sigma": self.sigma,
            "sigma_stderr": self.sigma_stderr,
            "condition": self.condition,
            "flags": list(self.flags),
            "gauge": "mean-zero periodic part",
        }


def _offset_power_fit(r, m):
    """Fit ``m = c + K r^{-p}``; returns ``c`` (0 when the fit fails)."""
    if r.size < 4:
        return 0.0, False
    p0 = (float(m[-1]), float((m[0] - m[-1]) * r[0]), 1.0)
    try:
        with np.errstate(all="ignore"):
            popt, _ = optimize.curve_fit(lambda x, c, K, p: c + K * x ** (-p), r, m, p0=p0,
                                         bounds=([-np.inf, -np.inf, 0.05], [np.inf, np.inf, 10.0]),
                                         maxfev=20000)
    except (RuntimeError, ValueError):
        return 0.0, False
    return float(popt[0]), True


def fit_decomposition(u: ScalarField, annuli: list, fp: PeriodicDensitySpec = None, K: int = 2,
                      extrapolate: bool = True, min_nodes_per_wave: float = 4.0) -> DecompositionFit:
    """Fit ``P + v`` on the outermost annulus and measure the remainder on all.

    Parameters
    ----------
    u : ScalarField on a BoxGrid
    annuli : list of AnnulusSpec
        At least three; the one with the largest outer radius is the fitting
        annulus.
    fp : PeriodicDensitySpec, optional
        Supplies the lattice periods; ``None`` or a spec without
        trigonometric terms fits the parabola only.
    K : int
        Fourier truncation order, at most ``nodes_per_axis / 4``.  Modes with
        fewer than ``min_nodes_per_wave`` nodes per wavelength are dropped and
        listed in ``flags``.
    extrapolate : bool
        Remove the constant offset of the remainder before measuring decay.
    """
    check_box_field(u)
    grid = u.grid
    if len(annuli) < 3:
        raise ValueError("need at least three annuli")
    if K > grid.nodes_per_axis / 4:
        raise ValueError("Fourier order K must not exceed nodes_per_axis / 4")
    if any(a.grid != grid for a in annuli):
        raise GridError("annuli live on a different grid")
    annuli = sorted(annuli, key=lambda a: a.r1)
    flags = []
    periods = None
    freqs = []
    if fp is not None and fp.terms and K > 0:
        periods = fp.periods
        freqs, dropped = resolved_frequencies(grid.dim, K, periods, grid.spacing, min_nodes_per_wave)
        if dropped:
            flags.append(f"{len(dropped)} Fourier modes unresolved at h={grid.spacing:.4g}, dropped")
    X = grid.points()
    y = u.values.ravel()
    outer = annuli[-1].mask.ravel()
    reg = ParabolaPeriodicRegressor(periods=periods, order=K, frequencies=freqs if periods else None)
    reg.fit(X[outer], y[outer])
    flags += reg.flags_
    rem = y - reg.predict(X)
    radii = np.array([a.mean_radius for a in annuli])
    sup = np.array([np.abs(rem[a.mask.ravel()]).max() for a in annuli])
    mean = np.array([rem[a.mask.ravel()].mean() for a in annuli])
    inner = slice(0, len(annuli) - 1)
    offset = 0.0
    if extrapolate and np.max(np.abs(mean[inner])) > 1e-12 * max(1.0, float(np.abs(y).max())):
        offset, ok = _offset_power_fit(radii[inner], mean[inner])
        if not ok:
            flags.append("offset extrapolation failed; offset 0")
    corrected = np.array([np.abs(rem[a.mask.ravel()] - offset).max() for a in annuli])
    sf = loglog_slope(radii[inner], corrected[inner])
    return DecompositionFit(
        profile=reg.profile_, A=reg.A_, b=reg.b_, c=reg.c_, fourier=reg.fourier_, periods=periods,
        order=K, annuli=annuli, radii=radii, residuals=sup, mean_residuals=mean,
        corrected_residuals=corrected, offset=offset, sigma=-sf.slope, sigma_stderr=sf.stderr,
        fit_annulus=len(annuli) - 1, condition=reg.condition_, flags=flags,
    )


def check_detA(fit: DecompositionFit, spec) -> float:
    """``det(A) - cell average of f_p``."""
    base = spec.base if isinstance(spec, DensitySpec) else spec
    return fit.detA - cell_average(base)


# ---------------------------------------------------------------------------
# second quotients
# ---------------------------------------------------------------------------


@dataclass
class QuotientStats:
    r0: float
    r1: float
    minimum: float
    maximum: float
    deviation: float
    evaluated: int
    skipped: int


def quotient_scan(u: ScalarField, lattice: list, annuli: list) -> list:
    """Per-annulus extremes of the second quotients along lattice vectors.

    Nodes where ``x +- e`` leaves the box are skipped and counted.
    ``deviation`` is ``sup |quotient - 1|``.
    """
    check_box_field(u)
    qs = [second_quotient_array(u, e) for e in lattice]
    out = []
    for a in annuli:
        m = a.mask
        vals = np.concatenate([q[m] for q in qs])
        ok = np.isfinite(vals)
        good = vals[ok]
        if good.size == 0:
            out.append(QuotientStats(a.r0, a.r1, np.nan, np.nan, np.nan, 0, int(vals.size)))
            continue
        out.append(QuotientStats(a.r0, a.r1, float(good.min()), float(good.max()),
                                 float(np.abs(good - 1.0).max()), int(good.size), int(vals.size - good.size)))
    return out


def period_lattice(periods, max_coefficient: int = 1) -> list:
    """Lattice vectors with coefficients in ``{-k..k}``, one of each +-e pair."""
    return [LatticeVector(k, periods) for k in dual_frequencies(len(periods), max_coefficient)]


def hessian_eigen_range(u: ScalarField, half_width: float) -> tuple:
    """Min and max Hessian eigenvalues over nodes with ``|x|_inf <= half_width``."""
    grid = u.grid
    H = hessian_array(u.values, grid.spacings, False, margin=1)
    pts = np.stack(np.meshgrid(*([grid.axis[1:-1]] * grid.dim), indexing="ij"), axis=-1)
    sel = np.max(np.abs(pts), axis=-1) <= half_width * (1 + 1e-12)
    return float(min_eigenvalue(H[sel]).min()), float(max_eigenvalue(H[sel]).max())


# ---------------------------------------------------------------------------
# level sets
# ---------------------------------------------------------------------------


@dataclass
class LevelSetRow:
    M: float
    volume: float
    axes: np.ndarray
    radius_ratio: float
    truncated: bool


@dataclass
class LevelSetReport:
    rows: list
    exponent: float
    exponent_stderr: float
    dim: int

    def table(self):
        for r in self.rows:
            d = {"M": r.M, "volume": r.volume, "radius_ratio": r.radius_ratio, "truncated": r.truncated}
            for k, v in enumerate(r.axes):
                d[f"axis{k + 1}"] = float(v)
            yield d

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "exponent_stderr": self.exponent_stderr,
                "expected": self.dim / 2, "rows": list(self.table())}


def level_sets(u: ScalarField, M_values, profile: QuadraticProfile = None, center_tolerance: float = None) -> LevelSetReport:
    """Geometry of ``{u < M}`` after normalizing ``u`` to ``min u = 0``.

    When ``profile`` is given its affine part ``b.x + c`` is subtracted first.
    Volumes count nodes times ``h^n``.  Each set is mapped to unit-determinant
    shape by the inverse square root of its second-moment matrix; the ratio of
    the circumscribed to the inscribed radius of the image (about the
    centroid) is reported.  Sets touching the boundary are flagged
    ``truncated`` and left out of the growth-exponent fit.
    """
    check_box_field(u)
    grid = u.grid
    n = grid.dim
    v = u.values.copy()
    X = grid.points().reshape(grid.shape + (n,))
    if profile is not None:
        v = v - (X @ profile.b + profile.c)
    kmin = np.unravel_index(np.argmin(v), v.shape)
    tol = grid.half_width / 4 if center_tolerance is None else center_tolerance
    if np.linalg.norm(X[kmin]) > tol:
        raise FitError("minimum not near center: subtract the fitted affine part first")
    v = v - v[kmin]
    bmask = grid.boundary_mask()
    hn = grid.spacing**n
    rows = []
    for M in np.sort(np.asarray(M_values, dtype=float)):
        inside = v < M
        cnt = int(np.count_nonzero(inside))
        truncated = bool(np.any(inside & bmask))
        if cnt < n + 1:
            rows.append(LevelSetRow(float(M), cnt * hn, np.full(n, np.nan), np.nan, truncated))
            continue
        P = X[inside]
        cen = P.mean(axis=0)
        C = np.cov((P - cen).T, bias=True)
        w, V = np.linalg.eigh(C)
        if w[0] <= 0:
            rows.append(LevelSetRow(float(M), cnt * hn, np.full(n, np.nan), np.nan, truncated))
            continue
        # semi-axes of the solid ellipsoid with the same second moments
        axes = np.sqrt((n + 2) * w)[::-1]
        T = V @ np.diag(w ** -0.5) @ V.T * np.prod(w) ** (1 / (2 * n))
        outside = ~inside
        # outside nodes adjacent to the set
        ring = np.zeros_like(inside)
        for ax in range(n):
            for s in (1, -1):
                ring |= np.roll(inside, s, axis=ax)
        ring &= outside
        Y_in = (P - cen) @ T.T
        r_out = float(np.linalg.norm(Y_in, axis=1).max())
        if np.any(ring):
            Y_ring = (X[ring] - cen) @ T.T
            r_in = float(np.linalg.norm(Y_ring, axis=1).min())
        else:
            r_in = np.nan
        rows.append(LevelSetRow(float(M), cnt * hn, axes, r_out / r_in, truncated))
    good = [r for r in rows if not r.truncated and r.volume > 0]
    sf = loglog_slope([r.M for r in good], [r.volume for r in good])
    return LevelSetReport(rows, sf.slope, sf.stderr, n)


# ---------------------------------------------------------------------------
# Green's function decay
# ---------------------------------------------------------------------------


@dataclass
class GreenDecayFit:
    slope: float
    stderr: float
    amplitude: float
    offset: float
    window: tuple
    points: int
    r: np.ndarray = field(repr=False, default=None)
    G: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "amplitude": self.amplitude,
                "offset": self.offset, "window": list(self.window), "points": self.points}


def green_function(u: ScalarField, source: tuple = None, tol: float = 1e-10) -> tuple:
    """Discrete Green's function of ``-d_i(cof(D^2 u)_ij d_j .)`` with zero boundary.

    Returns ``(G, r)`` on the nodes two layers inside the box, with ``r`` the
    distance to ``source`` (a node index, default the centre).
    """
    check_box_field(u)
    grid = u.grid
    n = grid.dim
    m = grid.nodes_per_axis
    if source is None:
        source = (m // 2,) * n
    source = tuple(int(k) for k in source)
    if any(min(k, m - 1 - k) < m // 4 for k in source):
        raise GridError("source must be at least m/4 nodes from the boundary")
    H = hessian_array(u.values, grid.spacings, False, margin=1)
    _, cof = det_and_cofactor(H)
    if np.any(min_eigenvalue(cof) <= 0):
        raise AssumptionError("operator loses ellipticity: cofactor matrix not positive definite")
    A = assemble(divergence_stencil(cof, grid.spacings), grid.shape, periodic=False, margin=2)
    shape = tuple(k - 4 for k in grid.shape)
    rhs = np.zeros(shape)
    rhs[tuple(k - 2 for k in source)] = 1.0 / grid.spacing**n
    G, _ = solve_linear(A, rhs.ravel(), tol=tol, method="cg")
    G = G.reshape(shape)
    ax = grid.axis[2:-2]
    pts = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1)
    r = np.linalg.norm(pts - grid.axis[list(source)], axis=-1)
    return G, r


def green_decay(u: ScalarField, source: tuple = None, window: tuple = None, tol: float = 1e-10) -> GreenDecayFit:
    """Power-law decay exponent of the Green's function away from its pole.

    Fits ``G ~ K r^slope - c0`` on nodes with distance in ``window`` (default
    ``[4h, L/2]``), where the constant ``c0`` absorbs the boundary correction
    (regular part) of the Dirichlet Green's function.  The standard error is
    that of the slope parameter.
    """
    grid = u.grid
    if grid.dim != 3:
        raise GridError("green_decay requires n = 3")
    G, r = green_function(u, source, tol)
    h, L = grid.spacing, grid.half_width
    lo, hi = (4 * h, L / 2) if window is None else window
    sel = (r >= lo * (1 - 1e-12)) & (r <= hi * (1 + 1e-12))
    rs, gs = r[sel], G[sel]
    if rs.size < 4 or np.any(gs <= 0):
        raise FitError("degenerate fit: Green's function not positive on the window")
    K0 = float(gs[np.argmin(rs)] * rs.min())
    # relative residuals: every distance carries equal weight
    popt, pcov = optimize.curve_fit(lambda x, K, p, c0: K * x ** (-p) - c0, rs, gs,
                                    p0=(K0, 1.0, 0.0), sigma=gs, maxfev=20000)
    stderr = float(np.sqrt(pcov[1, 1])) if np.all(np.isfinite(pcov)) else np.nan
    return GreenDecayFit(-float(popt[1]), stderr, float(popt[0]), float(popt[2]), (float(lo), float(hi)),
                         int(rs.size), rs, gs)


# ---------------------------------------------------------------------------
# ABP ratio
# ---------------------------------------------------------------------------


def abp_ratio(a_field: SymMatrixField, g: ScalarField, tol: float = 1e-12) -> float:
    """``sup|v| / (diam * ||g||_{L^n})`` for ``a_ij D_ij v = g``, ``v = 0`` on the boundary.

    ``a_field`` lives on the interior nodes (margin 1); ``g`` on the full box.
    """
    check_box_field(g)
    grid = g.grid
    if a_field.grid != grid or a_field.margin != 1:
        raise GridError("coefficient field must live on the interior nodes of the same grid")
    n = grid.dim
    a = a_field.values
    if np.any(min_eigenvalue(a) <= 0):
        raise AssumptionError("ellipticity check failed: coefficient matrix not positive definite")
    gi = g.values[grid.interior_slices()]
    norm = float(np.sum(np.abs(gi) ** n) * grid.spacing**n) ** (1.0 / n)
    if norm == 0.0:
        return 0.0
    A = assemble(nondivergence_stencil(a, grid.spacings), grid.shape, periodic=False)
    v, _ = solve_linear(-A, -gi.ravel(), tol=tol, method="bicgstab")
    diam = 2 * grid.half_width * np.sqrt(n)
    return float(np.abs(v).max() / (diam * norm))
