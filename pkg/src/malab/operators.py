"""Sparse assembly of linear second-order operators and the linear solves.

Two forms are needed:

* non-divergence ``sum_ij a_ij D_ij`` with the same central stencils as
  :func:`malab.calculus.hessian` (Newton linearizations, ABP solves);
* divergence ``-sum_ij d_i (a_ij d_j .)`` in flux form (Green's functions).

Box grids carry homogeneous Dirichlet conditions on the boundary layer,
periodic grids wrap.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SolverError


def _unit(n, i, s=1):
    return tuple(s if a == i else 0 for a in range(n))


def nondivergence_stencil(coeff: np.ndarray, spacings) -> list:
    """``(offset, weight_array)`` pairs for ``sum_ij a_ij D_ij`` at each node."""
    n = coeff.shape[-1]
    zero = (0,) * n
    centre = np.zeros(coeff.shape[:-2])
    terms = []
    for i in range(n):
        w = coeff[..., i, i] / spacings[i] ** 2
        terms.append((_unit(n, i, 1), w))
        terms.append((_unit(n, i, -1), w))
        centre = centre - 2 * w
        for j in range(i + 1, n):
            # a_ij D_ij + a_ji D_ji with D_ij the four-point cross stencil
            w = 2 * coeff[..., i, j] / (4 * spacings[i] * spacings[j])

            def off(si, sj):
                return tuple(si if a == i else (sj if a == j else 0) for a in range(n))

            terms += [(off(1, 1), w), (off(-1, -1), w), (off(1, -1), -w), (off(-1, 1), -w)]
    terms.append((zero, centre))
    return terms


def assemble(stencil: list, shape: tuple, periodic: bool, margin: int = 1) -> sp.csr_matrix:
    """Sparse matrix of a stencil acting on the unknown nodes.

    Box grids: unknowns are nodes at least ``margin`` layers inside, and
    neighbours outside that set are treated as zero (Dirichlet).  Periodic
    grids: unknowns are all nodes.
    """
    n = len(shape)
    if periodic:
        ushape = tuple(shape)
        lin = np.arange(int(np.prod(ushape))).reshape(ushape)
        rows_all, cols_all, vals_all = [], [], []
        for offset, w in stencil:
            cols = lin
            for axis, k in enumerate(offset):
                if k:
                    cols = np.roll(cols, -k, axis=axis)
            w = np.broadcast_to(w, ushape)
            rows_all.append(lin.ravel())
            cols_all.append(cols.ravel())
            vals_all.append(w.ravel())
        N = lin.size
    else:
        ushape = tuple(m - 2 * margin for m in shape)
        N = int(np.prod(ushape))
        lin = np.arange(N).reshape(ushape)
        pad = np.full(tuple(m + 2 for m in ushape), -1, dtype=np.int64)
        pad[tuple(slice(1, -1) for _ in range(n))] = lin
        rows_all, cols_all, vals_all = [], [], []
        for offset, w in stencil:
            sl = tuple(slice(1 + k, 1 + k + m) for k, m in zip(offset, ushape))
            cols = pad[sl]
            w = np.broadcast_to(w, ushape)
            keep = cols >= 0
            rows_all.append(lin[keep])
            cols_all.append(cols[keep])
            vals_all.append(w[keep])
    A = sp.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))), shape=(N, N)
    )
    return A.tocsr()


def divergence_stencil(coeff: np.ndarray, spacings) -> list:
    """Flux-form ``-sum_ij d_i(a_ij d_j)`` for coefficients given on a padded grid.

    ``coeff`` has one extra layer on every side of the unknown nodes; the
    weights returned live on the unknown nodes.  Diagonal fluxes use face
    averages, mixed fluxes central differences of ``a_ij d_j``.
    """
    n = coeff.shape[-1]
    inner = tuple(slice(1, -1) for _ in range(n))

    def at(offset, i, j):
        sl = tuple(slice(1 + k, coeff.shape[a] - 1 + k) for a, k in enumerate(offset))
        return coeff[sl + (i, j)]

    zero = (0,) * n
    centre = np.zeros(coeff[inner].shape[:-2])
    terms = []
    for i in range(n):
        h2 = spacings[i] ** 2
        aii = at(zero, i, i)
        ap = 0.5 * (aii + at(_unit(n, i, 1), i, i))
        am = 0.5 * (aii + at(_unit(n, i, -1), i, i))
        terms.append((_unit(n, i, 1), -ap / h2))
        terms.append((_unit(n, i, -1), -am / h2))
        centre = centre + (ap + am) / h2
        for j in range(n):
            if j == i:
                continue
            # -d_i(a_ij d_j u) ~ -[a_ij(x+e_i) D0_j u(x+e_i) - a_ij(x-e_i) D0_j u(x-e_i)] / (2h_i)
            c = 1.0 / (4 * spacings[i] * spacings[j])
            aip = at(_unit(n, i, 1), i, j)
            aim = at(_unit(n, i, -1), i, j)

            def off(si, sj):
                return tuple(si if a == i else (sj if a == j else 0) for a in range(n))

            terms += [
                (off(1, 1), -c * aip),
                (off(1, -1), c * aip),
                (off(-1, 1), c * aim),
                (off(-1, -1), -c * aim),
            ]
    terms.append((zero, centre))
    return terms


def _jacobi(A: sp.csr_matrix):
    d = A.diagonal()
    if np.any(d == 0):
        raise SolverError("zero diagonal in linear operator")
    inv = 1.0 / d
    return spla.LinearOperator(A.shape, matvec=lambda x: inv * x, dtype=float)


def solve_linear(A, b, tol: float = 1e-10, maxiter: int = 20000, method: str = "bicgstab", x0=None):
    """Solve ``A x = b``; returns ``(x, iterations)``.

    ``bicgstab``: non-symmetric Krylov solver with diagonal preconditioning.
    ``cg``: for symmetric definite operators.  ``direct``: sparse LU.
    """
    b = np.asarray(b, dtype=float)
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return np.zeros_like(b), 0
    if method == "direct":
        x = spla.spsolve(A.tocsc(), b)
        return x, 1
    count = [0]

    def cb(_):
        count[0] += 1

    M = _jacobi(A)
    if method == "bicgstab":
        x, info = spla.bicgstab(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=cb)
    elif method == "cg":
        x, info = spla.cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=cb)
    elif method == "gmres":
        x, info = spla.gmres(A, b, x0=x0, rtol=tol, atol=0.0, restart=200, maxiter=maxiter, M=M, callback=cb, callback_type="pr_norm")
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    if method == "bicgstab" and info < 0:
        # breakdown: restart from the last iterate with GMRES
        start = x if np.all(np.isfinite(x)) else x0
        x, info = spla.gmres(A, b, x0=start, rtol=tol, atol=0.0, restart=200, maxiter=maxiter, M=M, callback=cb,
                             callback_type="pr_norm")
    if info != 0 or not np.all(np.isfinite(x)):
        rel = np.linalg.norm(A @ x - b) / bn if np.all(np.isfinite(x)) else np.inf
        # bicgstab can stall just above the target; accept a near miss
        if not (np.isfinite(rel) and rel < 100 * tol):
            raise SolverError(f"linear solver {method} did not converge (info={info}, rel. residual={rel:.2e})")
    return x, count[0]
