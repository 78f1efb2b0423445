"""One-dimensional Gauss quadrature rules.

Three families are provided:

* Gauss-Legendre on [-1, 1] and composite Gauss-Legendre on [a, b],
* Gauss-Hermite on the whole line with weight exp(-z^2),
* Gauss-Laguerre on the half line with weight exp(-z).

Nodes are found by Newton iteration on the three-term recurrence of the
(orthonormal) polynomial family; weights come from the Christoffel function
1 / sum_j p_j(x)^2, which is stable for large point counts.  If Newton does
not converge the rule falls back to Golub-Welsch (eigenvalues of the Jacobi
matrix).  Constructed rules are immutable and cached per (kind, parameters).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import QuadratureError

_NEWTON_TOL = 1e-15
_NEWTON_MAX_ITERS = 100
# rescale recurrence values beyond this magnitude to avoid overflow at high N
_SCALE_LIMIT = 1e130


@dataclass(frozen=True)
class QuadratureRule:
    """Immutable node/weight pair with metadata describing its family."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str                      # "legendre" | "legendre_composite" | "hermite" | "laguerre"
    params: tuple = field(default=())

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise QuadratureError("nodes and weights must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))):
            raise QuadratureError("non-finite quadrature data")
        if np.any(np.diff(nodes) <= 0):
            raise QuadratureError("quadrature nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise QuadratureError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.size

    def integrate(self, f) -> float:
        """Apply the rule to a callable (weight function implied by kind)."""
        return float(np.dot(self.weights, f(self.nodes)))


def _legendre_eval(n: int, x: np.ndarray):
    """Values and derivatives of the Legendre polynomial P_n on [-1, 1]."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if n == 0:
        return p_prev, np.zeros_like(x)
    for j in range(1, n):
        p_prev, p = p, ((2 * j + 1) * x * p - j * p_prev) / (j + 1)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def _scaled_recurrence(x, n, family):
    """Run the orthonormal recurrence up to degree n with overflow rescaling.

    Returns (p_{n-1}, p_n, dp_n, log_eta, christoffel_sum) where all values
    carry a common per-node factor eta = exp(log_eta) and christoffel_sum is
    eta^2 * sum_{j<n} p_j(x)^2.
    """
    x = np.asarray(x, dtype=float)
    if family == "hermite":
        p_prev = np.zeros_like(x)
        p = np.full_like(x, math.pi ** -0.25)
    elif family == "laguerre":
        p_prev = np.zeros_like(x)
        p = np.ones_like(x)
    else:
        raise ValueError(family)
    log_eta = np.zeros_like(x)
    total = p * p
    for j in range(n):
        if family == "hermite":
            p_next = x * math.sqrt(2.0 / (j + 1)) * p - math.sqrt(j / (j + 1)) * p_prev
        else:
            p_next = ((2 * j + 1 - x) * p - j * p_prev) / (j + 1)
        p_prev, p = p, p_next
        if j < n - 1:
            total = total + p * p
        big = np.abs(p) > _SCALE_LIMIT
        if np.any(big):
            c = np.where(big, 1.0 / _SCALE_LIMIT, 1.0)
            p_prev = p_prev * c
            p = p * c
            total = total * c * c
            log_eta = log_eta + np.where(big, -math.log(_SCALE_LIMIT), 0.0)
    if family == "hermite":
        dp = math.sqrt(2.0 * n) * p_prev
    else:
        dp = n * (p - p_prev) / x
    return p_prev, p, dp, log_eta, total


def _newton_nodes(guess, n, family):
    """Polish node guesses by Newton iteration; returns (nodes, converged)."""
    x = np.array(guess, dtype=float)
    converged = np.zeros(x.shape, dtype=bool)
    for _ in range(_NEWTON_MAX_ITERS):
        _, p, dp, _, _ = _scaled_recurrence(x, n, family)
        dx = p / dp
        x = x - dx
        converged = np.abs(dx) <= _NEWTON_TOL * (1.0 + np.abs(x))
        if np.all(converged):
            break
    return x, bool(np.all(converged))


def _christoffel_weights(x, n, family):
    _, _, _, log_eta, total = _scaled_recurrence(x, n, family)
    # w = 1 / sum_j p_j^2 = eta^2 / total; work in logs to dodge underflow
    log_w = 2.0 * log_eta - np.log(total)
    w = np.exp(log_w)
    if np.any(w == 0.0):
        raise QuadratureError(f"{family} weights underflow at N={n}")
    return w


def _jacobi_matrix(n, family):
    if family == "legendre":
        diag = np.zeros(n)
        j = np.arange(1, n, dtype=float)
        off = j / np.sqrt(4 * j * j - 1.0)
        mass = 2.0
    elif family == "hermite":
        diag = np.zeros(n)
        off = np.sqrt(np.arange(1, n, dtype=float) / 2.0)
        mass = math.sqrt(math.pi)
    elif family == "laguerre":
        diag = 2.0 * np.arange(n, dtype=float) + 1.0
        off = np.arange(1, n, dtype=float)
        mass = 1.0
    else:
        raise ValueError(family)
    return diag, off, mass


def _golub_welsch(n, family):
    """Jacobi-matrix eigendecomposition fallback for node finding."""
    from . import densela

    diag, off, mass = _jacobi_matrix(n, family)
    jac = np.diag(diag)
    if n > 1:
        jac += np.diag(off, 1) + np.diag(off, -1)
    vals, vecs = densela.sym_eig(jac)
    return vals, mass * vecs[0, :] ** 2


def _symmetrize(x, w):
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    if x.size % 2 == 1:
        x[x.size // 2] = 0.0
    return x, w


@functools.lru_cache(maxsize=None)
def gauss_legendre(n: int) -> QuadratureRule:
    """N-point Gauss-Legendre rule on [-1, 1]; exact for degree <= 2N-1."""
    if n < 1:
        raise QuadratureError("gauss_legendre requires N >= 1")
    i = np.arange(1, n + 1, dtype=float)
    x = np.cos(math.pi * (i - 0.25) / (n + 0.5))
    converged = False
    with np.errstate(all="ignore"):
        for _ in range(_NEWTON_MAX_ITERS):
            p, dp = _legendre_eval(n, x)
            dx = p / dp
            x = x - dx
            if np.all(np.abs(dx) <= _NEWTON_TOL * (1.0 + np.abs(x))):
                converged = True
                break
    converged = converged and bool(np.all(np.isfinite(x)))
    if converged:
        x = np.sort(x)
        _, dp = _legendre_eval(n, x)
        w = 2.0 / ((1.0 - x * x) * dp * dp) if n > 1 else np.full(1, 2.0)
    else:
        x, w = _golub_welsch(n, "legendre")
    x, w = _symmetrize(x, w)
    return QuadratureRule(x, w, "legendre", (n,))


@functools.lru_cache(maxsize=None)
def composite_legendre(a: float, b: float, m_sub: int, n: int) -> QuadratureRule:
    """Composite rule: M equal subintervals of [a, b], N Gauss points in each."""
    if not (a < b):
        raise QuadratureError(f"composite_legendre requires a < b, got [{a}, {b}]")
    if m_sub < 1 or n < 1:
        raise QuadratureError("composite_legendre requires M >= 1 and N >= 1")
    base = gauss_legendre(n)
    h = (b - a) / m_sub
    edges = a + h * np.arange(m_sub)
    nodes = (edges[:, None] + 0.5 * h * (base.nodes[None, :] + 1.0)).ravel()
    weights = np.broadcast_to(0.5 * h * base.weights, (m_sub, n)).ravel().copy()
    return QuadratureRule(nodes, weights, "legendre_composite", (a, b, m_sub, n))


def _hermite_guesses(n):
    m = (n + 1) // 2
    g = np.empty(m)
    for i in range(m):
        if i == 0:
            z = math.sqrt(2 * n + 1) - 1.85575 * (2 * n + 1) ** (-1 / 6)
        elif i == 1:
            z = g[0] - 1.14 * n ** 0.426 / g[0]
        elif i == 2:
            z = 1.86 * g[1] - 0.86 * g[0]
        elif i == 3:
            z = 1.91 * g[2] - 0.91 * g[1]
        else:
            z = 2.0 * g[i - 1] - g[i - 2]
        g[i] = z
    return g  # positive roots, descending


@functools.lru_cache(maxsize=None)
def gauss_hermite(n: int) -> QuadratureRule:
    """N-point Gauss-Hermite rule: integrates p(z) exp(-z^2) exactly for deg <= 2N-1."""
    if n < 1:
        raise QuadratureError("gauss_hermite requires N >= 1")
    if n == 1:
        return QuadratureRule(np.zeros(1), np.full(1, math.sqrt(math.pi)), "hermite", (1,))
    half, ok = _newton_nodes(_hermite_guesses(n), n, "hermite")
    half = np.sort(half)
    if n % 2:
        # smallest of the (n+1)//2 non-negative roots is the center root 0
        half[0] = 0.0
        x = np.concatenate([-half[:0:-1], half])
    else:
        x = np.concatenate([-half[::-1], half])
    ok = ok and bool(np.all(np.diff(x) > 0))
    if ok:
        w = _christoffel_weights(x, n, "hermite")
    else:
        x, w = _golub_welsch(n, "hermite")
    x, w = _symmetrize(x, w)
    return QuadratureRule(x, w, "hermite", (n,))


def _laguerre_guesses(n):
    g = np.empty(n)
    for i in range(n):
        if i == 0:
            z = 3.0 / (1.0 + 2.4 * n)
        elif i == 1:
            z = g[0] + 15.0 / (1.0 + 2.5 * n)
        else:
            ai = float(i - 1)
            z = g[i - 1] + ((1.0 + 2.55 * ai) / (1.9 * ai)) * (g[i - 1] - g[i - 2])
        g[i] = z
    return g  # ascending


@functools.lru_cache(maxsize=None)
def gauss_laguerre(n: int) -> QuadratureRule:
    """N-point Gauss-Laguerre rule: integrates p(z) exp(-z) exactly for deg <= 2N-1."""
    if n < 1:
        raise QuadratureError("gauss_laguerre requires N >= 1")
    x, ok = _newton_nodes(_laguerre_guesses(n), n, "laguerre")
    ok = ok and bool(np.all(np.diff(x) > 0)) and bool(np.all(x > 0))
    if ok:
        w = _christoffel_weights(x, n, "laguerre")
    else:
        x, w = _golub_welsch(n, "laguerre")
        if np.any(x <= 0):
            raise QuadratureError("laguerre fallback produced non-positive nodes")
    return QuadratureRule(x, w, "laguerre", (n,))
