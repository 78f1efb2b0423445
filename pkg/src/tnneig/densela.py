"""Dense symmetric linear algebra for small matrices.

Self-contained implementations (no LAPACK): Cholesky factorization and
solves, symmetric eigendecomposition via Householder tridiagonalization
followed by implicit-shift QL, and the symmetric generalized eigenproblem
A y = lambda B y reduced through the Cholesky factor of B.  Sizes here are
tiny (k <= 16 subspace matrices, quadrature Jacobi matrices up to ~100), so
O(n^3) with plain numpy inner products is plenty.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import NotPositiveDefiniteError

_EPS = float(np.finfo(float).eps)


def _check_square(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def cholesky(s: np.ndarray) -> np.ndarray:
    """Lower-triangular L with S = L L^T; raises on non-positive pivots."""
    s = _check_square(s, "cholesky input")
    n = s.shape[0]
    low = np.zeros_like(s)
    for j in range(n):
        pivot = s[j, j] - np.dot(low[j, :j], low[j, :j])
        if not (pivot > 0.0) or not math.isfinite(pivot):
            raise NotPositiveDefiniteError(j)
        low[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            low[j + 1:, j] = (s[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def solve_lower(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L x = b by forward substitution (b may have multiple columns)."""
    b = np.array(b, dtype=float)
    vec = b.ndim == 1
    x = b.reshape(b.shape[0], -1)
    n = low.shape[0]
    for i in range(n):
        x[i] = (x[i] - low[i, :i] @ x[:i]) / low[i, i]
    return x[:, 0] if vec else x


def solve_upper(upp: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve U x = b by back substitution."""
    b = np.array(b, dtype=float)
    vec = b.ndim == 1
    x = b.reshape(b.shape[0], -1)
    n = upp.shape[0]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - upp[i, i + 1:] @ x[i + 1:]) / upp[i, i]
    return x[:, 0] if vec else x


def cho_solve(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = b given the Cholesky factor L."""
    return solve_upper(low.T, solve_lower(low, b))


def _tridiagonalize(a):
    """Householder reduction; returns (d, e, q) with q^T a q tridiagonal.

    d holds the diagonal, e[i] the off-diagonal coupling i and i+1
    (e[n-1] unused).  Follows the classic tred2 scheme with vectorized
    inner products.
    """
    a = a.copy()
    n = a.shape[0]
    d = np.zeros(n)
    e = np.zeros(n)
    flag = np.zeros(n)  # nonzero marks a Householder transform at that level
    for i in range(n - 1, 0, -1):
        if i > 1:
            u = a[i, :i].copy()
            scale = np.sum(np.abs(u))
            if scale == 0.0:
                e[i - 1] = u[i - 1]
                continue
            u /= scale
            h = np.dot(u, u)
            f = u[i - 1]
            g = -math.copysign(math.sqrt(h), f)
            e[i - 1] = scale * g
            h -= f * g
            u[i - 1] = f - g
            p = (a[:i, :i] @ u) / h
            kk = np.dot(u, p) / (2.0 * h)
            q = p - kk * u
            a[:i, :i] -= np.outer(q, u) + np.outer(u, q)
            a[i, :i] = u          # Householder vector
            a[:i, i] = u / h      # scaled copy for accumulation
            flag[i] = h
        else:
            e[0] = a[1, 0]
    # accumulate the orthogonal transform into a
    for i in range(n):
        if flag[i] != 0.0:
            g = a[i, :i] @ a[:i, :i]
            a[:i, :i] -= np.outer(a[:i, i], g)
        d[i] = a[i, i]
        a[i, i] = 1.0
        a[i, :i] = 0.0
        a[:i, i] = 0.0
    return d, e, a


def _ql_implicit(d, e, z, max_sweeps=50):
    """Implicit-shift QL on a symmetric tridiagonal; rotations fold into z."""
    n = d.size
    e = e.copy()
    e[n - 1] = 0.0
    for l in range(n):
        sweeps = 0
        while True:
            m = n - 1
            for mm in range(l, n - 1):
                dd = abs(d[mm]) + abs(d[mm + 1])
                if abs(e[mm]) <= _EPS * dd:
                    m = mm
                    break
            if m == l:
                break
            sweeps += 1
            if sweeps > max_sweeps:
                raise RuntimeError("QL iteration failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zf = z[:, i + 1].copy()
                z[:, i + 1] = s * z[:, i] + c * zf
                z[:, i] = c * z[:, i] - s * zf
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, z


def sym_eig(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (mu, q) with mu ascending and q orthogonal, q^T s q = diag(mu).
    """
    s = _check_square(s, "sym_eig input")
    n = s.shape[0]
    if n == 1:
        return s[0, :1].copy(), np.ones((1, 1))
    s = 0.5 * (s + s.T)
    d, e, q = _tridiagonalize(s)
    d, q = _ql_implicit(d, e, q)
    order = np.argsort(d, kind="stable")
    return d[order], np.ascontiguousarray(q[:, order])


def sym_generalized_eig(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve A y = lambda B y for symmetric A and SPD B.

    Returns (lam, y) with lam ascending and columns of y B-orthonormal.
    Eigenvectors inside a numerically repeated eigenvalue cluster are
    re-orthonormalized in the B inner product.
    """
    a = _check_square(a, "A")
    b = _check_square(b, "B")
    low = cholesky(b)
    c = solve_lower(low, solve_lower(low, a).T)
    lam, v = sym_eig(0.5 * (c + c.T))
    y = solve_upper(low.T, v)
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale > 0:
        gap_tol = 1e-9 * scale
        start = 0
        for stop in range(1, lam.size + 1):
            if stop == lam.size or lam[stop] - lam[stop - 1] > gap_tol:
                if stop - start > 1:
                    _b_orthonormalize(y, b, start, stop)
                start = stop
    return lam, y


def _b_orthonormalize(y, b, start, stop):
    """Modified Gram-Schmidt in the B inner product on columns [start, stop)."""
    for j in range(start, stop):
        col = y[:, j]
        for i in range(start, j):
            col -= (y[:, i] @ (b @ col)) * y[:, i]
        nrm = math.sqrt(col @ (b @ col))
        y[:, j] = col / nrm
