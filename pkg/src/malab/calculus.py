"""Finite-difference calculus and closed-form symmetric-matrix helpers.

All stencils are second-order central differences.  On a box grid they are
evaluated only at nodes with a full stencil; on a periodic grid indexing
wraps around.
"""

from __future__ import annotations

import numpy as np

from .exceptions import GridError, NotSPDError
from .grid import LatticeVector, ScalarField, SymMatrixField, shrink


def shifted(values: np.ndarray, offset, margin: int, periodic: bool) -> np.ndarray:
    """View of ``values`` displaced by ``offset`` nodes.

    For box grids the result covers the nodes at least ``margin`` away from
    the boundary, and ``|offset_i| <= margin`` is required.
    """
    if periodic:
        out = values
        for axis, k in enumerate(offset):
            if k:
                out = np.roll(out, -k, axis=axis)
        return out
    sl = []
    for k, m in zip(offset, values.shape):
        if abs(k) > margin:
            raise GridError("stencil out of range")
        sl.append(slice(margin + k, m - margin + k))
    return values[tuple(sl)]


def hessian_array(values: np.ndarray, spacings, periodic: bool, margin: int = 1) -> np.ndarray:
    """Central-difference Hessian, shape ``interior_shape + (n, n)``."""
    n = values.ndim
    if not periodic and min(values.shape) < 2 * margin + 1:
        raise GridError("insufficient grid")
    if periodic and min(values.shape) < 3:
        raise GridError("insufficient grid")
    zero = (0,) * n
    centre = shifted(values, zero, margin, periodic)
    H = np.empty(centre.shape + (n, n))
    for i in range(n):
        ei = tuple(1 if a == i else 0 for a in range(n))
        mi = tuple(-k for k in ei)
        hi = spacings[i]
        H[..., i, i] = (
            shifted(values, ei, margin, periodic) + shifted(values, mi, margin, periodic) - 2 * centre
        ) / hi**2
        for j in range(i + 1, n):
            hj = spacings[j]

            def off(si, sj):
                return tuple(si if a == i else (sj if a == j else 0) for a in range(n))

            mixed = (
                shifted(values, off(1, 1), margin, periodic)
                - shifted(values, off(1, -1), margin, periodic)
                - shifted(values, off(-1, 1), margin, periodic)
                + shifted(values, off(-1, -1), margin, periodic)
            ) / (4 * hi * hj)
            H[..., i, j] = mixed
            H[..., j, i] = mixed
    return H


def hessian(u: ScalarField) -> SymMatrixField:
    """Discrete Hessian of ``u``.

    Box grids: defined on interior nodes (``margin=1``).  Periodic grids:
    defined everywhere.  Exact on polynomials of degree two.
    """
    grid = u.grid
    margin = 0 if grid.periodic else 1
    H = hessian_array(u.values, grid.spacings, grid.periodic, margin=max(margin, 1))
    return SymMatrixField(grid, H, margin=margin)


def laplacian_array(values: np.ndarray, spacings, periodic: bool) -> np.ndarray:
    n = values.ndim
    zero = (0,) * n
    centre = shifted(values, zero, 1, periodic)
    out = np.zeros_like(centre)
    for i in range(n):
        ei = tuple(1 if a == i else 0 for a in range(n))
        mi = tuple(-k for k in ei)
        out += (shifted(values, ei, 1, periodic) + shifted(values, mi, 1, periodic) - 2 * centre) / spacings[i] ** 2
    return out


def det_and_cofactor(S: np.ndarray):
    """Determinant and cofactor matrix of (stacks of) 2x2 or 3x3 matrices.

    Closed-form expansion; ``S @ cof(S).T == det(S) I``.  For symmetric input
    the cofactor matrix is symmetric.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[-1]
    if n == 2:
        a, b, c, d = S[..., 0, 0], S[..., 0, 1], S[..., 1, 0], S[..., 1, 1]
        det = a * d - b * c
        cof = np.empty_like(S)
        cof[..., 0, 0] = d
        cof[..., 0, 1] = -c
        cof[..., 1, 0] = -b
        cof[..., 1, 1] = a
        return det, cof
    if n == 3:
        r0, r1, r2 = S[..., 0, :], S[..., 1, :], S[..., 2, :]
        cof = np.stack([np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)], axis=-2)
        det = np.einsum("...i,...i->...", r0, cof[..., 0, :])
        return det, cof
    raise ValueError(f"only n in {{2, 3}} supported, got {n}")


def determinant(S: np.ndarray) -> np.ndarray:
    return det_and_cofactor(S)[0]


def _stable_2x2_min(a, b, d):
    return 0.5 * (a + d) - np.hypot(0.5 * (a - d), b)


def min_eigenvalue(S: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of symmetric 2x2 / 3x3 matrices, closed form.

    The 3x3 case uses the trigonometric solution of the characteristic cubic.
    When the two smallest roots are close the cubic is ill-conditioned, so the
    well-separated largest eigenpair is deflated and the remaining 2x2 block is
    solved instead.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[-1]
    if n == 2:
        return _stable_2x2_min(S[..., 0, 0], S[..., 0, 1], S[..., 1, 1])
    if n != 3:
        raise ValueError(f"only n in {{2, 3}} supported, got {n}")
    return _eig3(S)[0]


def max_eigenvalue(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.shape[-1] == 2:
        a, b, d = S[..., 0, 0], S[..., 0, 1], S[..., 1, 1]
        return 0.5 * (a + d) + np.hypot(0.5 * (a - d), b)
    return -_eig3(-S)[0]


def _eig3(S: np.ndarray):
    S = np.asarray(S, dtype=float)
    batch = S.shape[:-2]
    S = S.reshape(-1, 3, 3)
    q = np.trace(S, axis1=-2, axis2=-1) / 3.0
    p1 = S[:, 0, 1] ** 2 + S[:, 0, 2] ** 2 + S[:, 1, 2] ** 2
    p2 = (S[:, 0, 0] - q) ** 2 + (S[:, 1, 1] - q) ** 2 + (S[:, 2, 2] - q) ** 2 + 2 * p1
    p = np.sqrt(p2 / 6.0)
    lam_min = q.copy()
    ok = p > 0
    if np.any(ok):
        Sp, qp, pp = S[ok], q[ok], p[ok]
        B = (Sp - qp[:, None, None] * np.eye(3)) / pp[:, None, None]
        r = np.clip(determinant(B) / 2.0, -1.0, 1.0)
        phi = np.arccos(r) / 3.0
        lmin = qp + 2 * pp * np.cos(phi + 2 * np.pi / 3)
        lmax = qp + 2 * pp * np.cos(phi)
        close = r >= 0
        if np.any(close):
            lmin[close] = _deflated_min(Sp[close], lmax[close], lmin[close])
        lam_min[ok] = lmin
    return (lam_min.reshape(batch),)


def _deflated_min(S: np.ndarray, lmax: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    M = S - lmax[:, None, None] * np.eye(3)
    cands = np.stack(
        [np.cross(M[:, 0], M[:, 1]), np.cross(M[:, 0], M[:, 2]), np.cross(M[:, 1], M[:, 2])], axis=1
    )
    norms = np.linalg.norm(cands, axis=-1)
    best = np.argmax(norms, axis=1)
    top = norms[np.arange(len(S)), best]
    # rank(M) < 2 only for matrices that are scalar to rounding; keep the cubic root there
    good = top > 0
    out = fallback.copy()
    if not np.any(good):
        return out
    S, cands, best, top = S[good], cands[good], best[good], top[good]
    v = cands[np.arange(len(S)), best] / top[:, None]
    k = np.argmin(np.abs(v), axis=1)
    ek = np.eye(3)[k]
    w1 = np.cross(v, ek)
    w1 /= np.linalg.norm(w1, axis=-1)[:, None]
    w2 = np.cross(v, w1)
    Sw1 = np.einsum("nij,nj->ni", S, w1)
    Sw2 = np.einsum("nij,nj->ni", S, w2)
    a = np.einsum("ni,ni->n", w1, Sw1)
    b = np.einsum("ni,ni->n", w1, Sw2)
    d = np.einsum("ni,ni->n", w2, Sw2)
    out[good] = _stable_2x2_min(a, b, d)
    return out


def detroot(S: np.ndarray) -> np.ndarray:
    """``det(S)**(1/n)`` for symmetric positive definite ``S``."""
    S = np.asarray(S, dtype=float)
    if np.any(min_eigenvalue(S) <= 0):
        raise NotSPDError("not SPD")
    return determinant(S) ** (1.0 / S.shape[-1])


def second_quotient(u: ScalarField, e: LatticeVector, x) -> float:
    """``(u(x+e) + u(x-e) - 2u(x)) / |e|^2`` at node index ``x``."""
    grid = u.grid
    off = e.node_offset(grid.spacings)
    if not any(off):
        raise GridError("lattice vector must be nonzero")
    x = tuple(int(k) for k in x)
    plus = tuple(a + b for a, b in zip(x, off))
    minus = tuple(a - b for a, b in zip(x, off))
    if grid.periodic:
        plus, minus = grid.wrap(plus), grid.wrap(minus)
    else:
        m = grid.nodes_per_axis
        for idx in (plus, minus, x):
            if any(k < 0 or k >= m for k in idx):
                raise GridError("stencil out of range")
    v = u.values
    return float((v[plus] + v[minus] - 2 * v[x]) / e.norm**2)


def second_quotient_array(u: ScalarField, e: LatticeVector) -> np.ndarray:
    """Second quotient at every node; NaN where ``x +- e`` leaves a box grid."""
    grid = u.grid
    off = e.node_offset(grid.spacings)
    if not any(off):
        raise GridError("lattice vector must be nonzero")
    v = u.values
    if grid.periodic:
        plus = v
        minus = v
        for axis, k in enumerate(off):
            plus = np.roll(plus, -k, axis=axis)
            minus = np.roll(minus, k, axis=axis)
        return (plus + minus - 2 * v) / e.norm**2
    out = np.full(v.shape, np.nan)
    m = grid.nodes_per_axis
    core, hi, lo = [], [], []
    for k in off:
        a = abs(k)
        if 2 * a >= m:
            return out
        core.append(slice(a, m - a))
        hi.append(slice(a + k, m - a + k))
        lo.append(slice(a - k, m - a - k))
    out[tuple(core)] = (v[tuple(hi)] + v[tuple(lo)] - 2 * v[tuple(core)]) / e.norm**2
    return out


def cofactor_divergence(u: ScalarField) -> ScalarField:
    """Node-wise ``max_j |sum_i d_i cof(D^2 u)_ij|`` by central differences.

    On a box grid the result lives on the sub-grid two layers in from the
    boundary.  Vanishes in the continuum for every smooth ``u``.
    """
    grid = u.grid
    H = hessian(u).values
    _, C = det_and_cofactor(H)
    n = grid.dim
    if grid.periodic:
        div = np.zeros(C.shape[:-1])
        for i in range(n):
            Ci = C[..., i, :]
            div += (np.roll(Ci, -1, axis=i) - np.roll(Ci, 1, axis=i)) / (2 * grid.spacings[i])
        out_grid, vals = grid, np.max(np.abs(div), axis=-1)
    else:
        if min(C.shape[:-2]) < 3:
            raise GridError("insufficient grid")
        div = 0.0
        for i in range(n):
            Ci = C[..., i, :]
            sl_p = tuple(slice(2, None) if a == i else slice(1, -1) for a in range(n))
            sl_m = tuple(slice(None, -2) if a == i else slice(1, -1) for a in range(n))
            div = div + (Ci[sl_p] - Ci[sl_m]) / (2 * grid.spacing)
        out_grid, vals = shrink(grid, 2), np.max(np.abs(div), axis=-1)
    return ScalarField(out_grid, vals)
