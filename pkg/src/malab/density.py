"""Right-hand sides ``f`` that are asymptotically periodic.

The periodic part is stored through its ``n``-th root as a trigonometric
polynomial on the dual lattice, and the decaying perturbation is added to that
root.  Every decay bound therefore holds by construction and can be checked
with closed-form derivatives instead of finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .exceptions import AssumptionError, QuadratureError
from .grid import PeriodicGrid


@dataclass(frozen=True)
class PeriodicDensitySpec:
    """``f_p^{1/n}(x) = mean + sum_k c_k cos(2 pi k.x/a) + s_k sin(2 pi k.x/a)``.

    Parameters
    ----------
    dim : int
    periods : sequence of float
        Cell lengths ``a_1, ..., a_n``.
    terms : sequence of (freq, cos_amp, sin_amp)
        ``freq`` is an integer vector; ``k.x/a`` means ``sum_i k_i x_i / a_i``.
    mean : float
        Constant term of the root.
    d0 : float
        Two-sided bound ``d0^{-1} <= f_p <= d0``.
    """

    dim: int
    periods: tuple = None
    terms: tuple = ()
    mean: float = 1.0
    d0: float = 2.0

    def __post_init__(self):
        periods = (1.0,) * self.dim if self.periods is None else self.periods
        periods = tuple(float(a) for a in np.broadcast_to(periods, (self.dim,)))
        object.__setattr__(self, "periods", periods)
        terms = []
        for t in self.terms:
            freq, ca = t[0], float(t[1])
            sa = float(t[2]) if len(t) > 2 else 0.0
            freq = tuple(int(k) for k in freq)
            if len(freq) != self.dim:
                raise AssumptionError("frequency vector has wrong length")
            if not any(freq):
                raise AssumptionError("use `mean` for the constant term")
            terms.append((freq, ca, sa))
        object.__setattr__(self, "terms", tuple(terms))
        if any(a <= 0 for a in periods):
            raise AssumptionError("periods must be positive")

    @classmethod
    def constant(cls, dim: int, value: float = 1.0, periods=None, d0: float = None):
        d0 = max(value, 1.0 / value) * 1.5 if d0 is None else d0
        return cls(dim, periods, (), value ** (1.0 / dim), d0)

    # -- closed-form evaluation --------------------------------------------
    def _phases(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        if not self.terms:
            return x, np.zeros((0, self.dim)), np.zeros(x.shape[:-1] + (0,))
        K = np.array([t[0] for t in self.terms], dtype=float)
        W = 2 * np.pi * K / np.array(self.periods)
        return x, W, x @ W.T

    def root(self, x) -> np.ndarray:
        """``f_p^{1/n}`` at points ``x`` of shape ``(..., n)``."""
        x, W, ph = self._phases(x)
        out = np.full(x.shape[:-1], float(self.mean))
        for k, (_, ca, sa) in enumerate(self.terms):
            out = out + ca * np.cos(ph[..., k]) + sa * np.sin(ph[..., k])
        return out

    def root_grad(self, x) -> np.ndarray:
        x, W, ph = self._phases(x)
        out = np.zeros(x.shape)
        for k, (_, ca, sa) in enumerate(self.terms):
            amp = -ca * np.sin(ph[..., k]) + sa * np.cos(ph[..., k])
            out = out + amp[..., None] * W[k]
        return out

    def root_hess(self, x) -> np.ndarray:
        x, W, ph = self._phases(x)
        out = np.zeros(x.shape + (self.dim,))
        for k, (_, ca, sa) in enumerate(self.terms):
            amp = -(ca * np.cos(ph[..., k]) + sa * np.sin(ph[..., k]))
            out = out + amp[..., None, None] * np.outer(W[k], W[k])
        return out

    def __call__(self, x) -> np.ndarray:
        """``f_p`` itself."""
        return self.root(x) ** self.dim

    def root_bounds(self) -> tuple:
        """Crude analytic bracket of the root: ``mean +- sum |amplitudes|``."""
        amp = sum(np.hypot(ca, sa) for _, ca, sa in self.terms)
        return self.mean - amp, self.mean + amp

    def scaled(self, factor: float) -> "PeriodicDensitySpec":
        """Spec of ``factor * f_p``."""
        s = factor ** (1.0 / self.dim)
        terms = tuple((k, s * ca, s * sa) for k, ca, sa in self.terms)
        return PeriodicDensitySpec(self.dim, self.periods, terms, s * self.mean, self.d0)


def _radial_profile_derivs(r2: np.ndarray, amp: float, beta: float):
    """``g(s) = amp * s**(-beta/2)`` and its first three derivatives at ``s = 1 + r2``."""
    s = 1.0 + r2
    p = -beta / 2
    g0 = amp * s**p
    g1 = amp * p * s ** (p - 1)
    g2 = amp * p * (p - 1) * s ** (p - 2)
    g3 = amp * p * (p - 1) * (p - 2) * s ** (p - 3)
    return g0, g1, g2, g3


@dataclass(frozen=True)
class DensitySpec:
    """``f^{1/n} = f_p^{1/n} + amp_d * (1 + |x|^2)^{-beta/2}``."""

    base: PeriodicDensitySpec
    amp_d: float = 0.0
    beta: float = 3.0
    d1: float = 2.0

    def __post_init__(self):
        if self.amp_d < 0:
            raise AssumptionError("perturbation amplitude must be non-negative")
        if not self.beta > 2:
            raise AssumptionError("beta must exceed 2")

    @property
    def dim(self) -> int:
        return self.base.dim

    def perturbation(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.amp_d * (1.0 + np.sum(x**2, axis=-1)) ** (-self.beta / 2)

    def root(self, x) -> np.ndarray:
        return self.base.root(x) + self.perturbation(x)

    def __call__(self, x) -> np.ndarray:
        return self.root(x) ** self.dim

    def perturbation_derivative_norms(self, x) -> np.ndarray:
        """Euclidean/Frobenius norms of the j-th derivative tensors, j = 0..3.

        Returns an array of shape ``(4,) + x.shape[:-1]``.
        """
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        r2 = np.sum(x**2, axis=-1)
        g0, g1, g2, g3 = _radial_profile_derivs(r2, self.amp_d, self.beta)
        eye = np.eye(n)
        # d_i phi = 2 g' x_i
        grad = 2 * g1[..., None] * x
        # d_ij phi = 4 g'' x_i x_j + 2 g' delta_ij
        hess = 4 * g2[..., None, None] * x[..., :, None] * x[..., None, :] + 2 * g1[..., None, None] * eye
        # d_ijk phi = 8 g''' x_i x_j x_k + 4 g'' (delta_ij x_k + delta_ik x_j + delta_jk x_i)
        xxx = x[..., :, None, None] * x[..., None, :, None] * x[..., None, None, :]
        sym = (
            eye[:, :, None] * x[..., None, None, :]
            + eye[:, None, :] * x[..., None, :, None]
            + eye[None, :, :] * x[..., :, None, None]
        )
        third = 8 * g3[..., None, None, None] * xxx + 4 * g2[..., None, None, None] * sym
        return np.stack(
            [
                np.abs(g0),
                np.linalg.norm(grad, axis=-1),
                np.sqrt(np.sum(hess**2, axis=(-2, -1))),
                np.sqrt(np.sum(third**2, axis=(-3, -2, -1))),
            ]
        )


def eval_density(spec: DensitySpec | PeriodicDensitySpec, x) -> np.ndarray:
    """``f(x)``, closed form."""
    return spec(x)


@dataclass
class AssumptionReport:
    f_min: float
    f_max: float
    root_min: float
    decay_sup: list
    decay_sup_j3: float
    bounds_ok: bool
    positivity_ok: bool
    decay_ok: bool
    sample_count: int
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.bounds_ok and self.positivity_ok and self.decay_ok

    def to_dict(self) -> dict:
        return {
            "f_min": self.f_min,
            "f_max": self.f_max,
            "root_min": self.root_min,
            "decay_sup": list(self.decay_sup),
            "decay_sup_j3": self.decay_sup_j3,
            "bounds_ok": self.bounds_ok,
            "positivity_ok": self.positivity_ok,
            "decay_ok": self.decay_ok,
            "passed": self.passed,
            "sample_count": self.sample_count,
            "notes": list(self.notes),
        }


def sample_points(dim: int, count: int, radius: float = 1e3, seed: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy points in the ball of given radius.

    Radii are log-distributed so that the unit scale, where weighted decay
    ratios peak, is sampled as densely as the far field.
    """
    sob = qmc.Sobol(dim + 1, scramble=True, seed=seed)
    # Sobol balance needs a power of two
    m = int(np.ceil(np.log2(max(count, 2))))
    U = sob.random_base2(m)[:count]
    r = np.expm1(U[:, 0] * np.log1p(radius))
    from scipy.special import ndtri

    G = ndtri(np.clip(U[:, 1:], 1e-12, 1 - 1e-12))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    return r[:, None] * G


def verify_assumptions(spec: DensitySpec, sample_count: int = 4096, seed: int = 0) -> AssumptionReport:
    """Check two-sided bounds and weighted decay of ``f^{1/n} - f_p^{1/n}``.

    Violations are reported through the flags, never raised.
    """
    if sample_count < 1000:
        raise AssumptionError("sample_count must be at least 1000")
    n = spec.dim
    ball = sample_points(n, sample_count, 1e3, seed)
    ray = np.zeros((400, n))
    ray[:, 0] = np.concatenate([[0.0], np.logspace(-3, 3, 399)])
    cell_grid = PeriodicGrid(n, spec.base.periods, (max(8, int(round(4096 ** (1 / n)))),) * n)
    cell = cell_grid.points()
    pts = np.concatenate([ball, ray, cell])

    root_p = spec.base.root(cell)
    root_min = float(min(root_p.min(), spec.base.root(pts).min()))
    f_vals = spec(pts)
    f_min, f_max = float(f_vals.min()), float(f_vals.max())

    norms = spec.perturbation_derivative_norms(pts)
    r = np.linalg.norm(pts, axis=-1)
    weighted = [float(np.max((1 + r) ** (spec.beta + j) * norms[j])) for j in range(4)]

    positivity_ok = bool(spec.amp_d < root_min) and root_min > 0
    bounds_ok = bool(f_min >= 1.0 / spec.d1 and f_max <= spec.d1)
    fp_vals = spec.base(cell)
    d0 = spec.base.d0
    notes = []
    if fp_vals.min() < 1.0 / d0 or fp_vals.max() > d0:
        bounds_ok = False
        notes.append("periodic part outside [1/d0, d0]")
    decay_ok = all(w <= spec.d1 for w in weighted[:3])
    notes.append("j=3 weighted supremum reported, not enforced")
    return AssumptionReport(
        f_min=f_min,
        f_max=f_max,
        root_min=root_min,
        decay_sup=weighted[:3],
        decay_sup_j3=weighted[3],
        bounds_ok=bounds_ok,
        positivity_ok=positivity_ok,
        decay_ok=decay_ok,
        sample_count=len(pts),
        notes=notes,
    )


def cell_average(spec: PeriodicDensitySpec, tol: float = 1e-10, max_levels: int = 20) -> float:
    """Average of ``f_p`` over one cell.

    Composite trapezoidal rule on the periodic cell (spectrally accurate for
    trigonometric integrands), doubling the resolution until two successive
    values agree to ``tol``.
    """
    n = spec.dim
    m = 4
    prev = None
    for _ in range(max_levels):
        if m**n > 2**24:
            break
        g = PeriodicGrid(n, spec.periods, (m,) * n)
        val = float(np.mean(spec(g.points())))
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        m *= 2
    raise QuadratureError("cell average did not converge")


@dataclass(frozen=True)
class RadialDensitySpec:
    """Radial ``f``: 1 on [0, 1], quintic bridge on [1, 2], ``1 + d r^{-beta}`` beyond 2.

    The bridge matches value, first and second derivative at both ends.
    ``beta = 2`` is admitted here (the sharpness counterexample).
    """

    amp_d: float = 0.0
    beta: float = 2.0

    def __post_init__(self):
        if self.amp_d < 0:
            raise AssumptionError("amplitude must be non-negative")
        if self.beta <= 0:
            raise AssumptionError("beta must be positive")

    @property
    def bridge_coefficients(self) -> np.ndarray:
        """Coefficients (highest first) of the excess ``f - 1`` on [1, 2]."""
        d, b = self.amp_d, self.beta
        y = [0.0, 0.0, 0.0, d * 2.0**-b, -b * d * 2.0 ** (-b - 1), b * (b + 1) * d * 2.0 ** (-b - 2)]
        rows = []
        for t in (1.0, 2.0):
            rows.append([t ** (5 - k) for k in range(6)])
        for t in (1.0, 2.0):
            rows.append([(5 - k) * t ** (4 - k) if k < 5 else 0.0 for k in range(6)])
        for t in (1.0, 2.0):
            rows.append([(5 - k) * (4 - k) * t ** (3 - k) if k < 4 else 0.0 for k in range(6)])
        M = np.array([rows[0], rows[2], rows[4], rows[1], rows[3], rows[5]])
        return np.linalg.solve(M, np.array(y))

    def excess(self, r) -> np.ndarray:
        """``f(r) - 1`` evaluated without cancellation."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        mid = (r > 1) & (r <= 2)
        tail = r > 2
        if self.amp_d:
            out[mid] = np.polyval(self.bridge_coefficients, r[mid])
            out[tail] = self.amp_d * r[tail] ** (-self.beta)
        return out

    def __call__(self, r) -> np.ndarray:
        return 1.0 + self.excess(r)

    @property
    def is_flat(self) -> bool:
        return self.amp_d == 0.0


def dual_frequencies(dim: int, order: int) -> list:
    """Half of the nonzero integer vectors with ``max|k_i| <= order`` (one of each +-k pair)."""
    out = []
    for k in np.ndindex(*([2 * order + 1] * dim)):
        kv = tuple(int(i) - order for i in k)
        if not any(kv):
            continue
        first = next(v for v in kv if v != 0)
        if first > 0:
            out.append(kv)
    return out


def separable_spec(profile: Sequence, dim: int = 2, period: float = 1.0) -> PeriodicDensitySpec:
    """Periodic spec depending on ``x_1`` only; ``profile`` lists (freq, cos, sin) in x_1."""
    terms = []
    for k, ca, *rest in profile:
        freq = (int(k),) + (0,) * (dim - 1)
        terms.append((freq, ca, rest[0] if rest else 0.0))
    return PeriodicDensitySpec(dim, (period,) * dim, tuple(terms), 1.0)
