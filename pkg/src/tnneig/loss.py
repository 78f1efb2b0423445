"""Subspace trace loss trace(B^-1 A) and its matrix adjoints.

The loss never forms B^-1 explicitly: with B = L L^T, trace(B^-1 A) is the
trace of the solution C of B C = A.  The adjoints for symmetric
perturbations are dLoss = sum(G_A o dA) + sum(G_B o dB) with

    G_A = B^-1,      G_B = -B^-1 A B^-1,

both symmetric and computed by Cholesky solves.  Early in training the k
networks can be nearly linearly dependent, making B numerically indefinite;
a small escalating diagonal jitter (logged, treated as a constant in the
gradient) keeps the factorization alive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import densela
from .assembly import AssembledPair
from .errors import NotPositiveDefiniteError, TrainingStepError

JITTER_START = 1e-12
JITTER_MAX = 1e-6
JITTER_GROWTH = 10.0


@dataclass
class JitterEvent:
    delta: float             # relative jitter level that succeeded
    added: float             # absolute value added to the diagonal


def _factor_with_jitter(b: np.ndarray, log: list | None):
    try:
        return densela.cholesky(b), b
    except NotPositiveDefiniteError:
        pass
    k = b.shape[0]
    scale = np.trace(b) / k
    delta = JITTER_START
    while delta <= JITTER_MAX:
        shifted = b + (delta * scale) * np.eye(k)
        try:
            low = densela.cholesky(shifted)
        except NotPositiveDefiniteError:
            delta *= JITTER_GROWTH
            continue
        if log is not None:
            log.append(JitterEvent(delta=delta, added=delta * scale))
        return low, shifted
    diag = np.diagonal(b)
    raise TrainingStepError(
        "mass matrix not positive definite even after jitter escalation",
        diagnostics={"trace": float(np.trace(b)),
                     "min_diag": float(diag.min()),
                     "max_diag": float(diag.max()),
                     "jitter_max": JITTER_MAX},
    )


def trace_loss(pair: AssembledPair, jitter_log: list | None = None) -> float:
    """trace(B^-1 A) via Cholesky solve of B C = A."""
    low, _ = _factor_with_jitter(pair.b, jitter_log)
    c = densela.cho_solve(low, pair.a)
    return float(np.trace(c))


def loss_adjoints(pair: AssembledPair, jitter_log: list | None = None):
    """(G_A, G_B) with dLoss = sum(G_A o dA) + sum(G_B o dB)."""
    low, _ = _factor_with_jitter(pair.b, jitter_log)
    k = pair.b.shape[0]
    b_inv = densela.cho_solve(low, np.eye(k))
    g_a = 0.5 * (b_inv + b_inv.T)
    m = g_a @ pair.a @ g_a
    g_b = -0.5 * (m + m.T)
    return g_a, g_b


def trace_loss_with_adjoints(pair: AssembledPair, jitter_log: list | None = None):
    """One factorization serving both the value and the adjoints."""
    low, _ = _factor_with_jitter(pair.b, jitter_log)
    k = pair.b.shape[0]
    b_inv = densela.cho_solve(low, np.eye(k))
    g_a = 0.5 * (b_inv + b_inv.T)
    value = float(np.sum(g_a * pair.a))   # trace(B^-1 A) for symmetric A
    m = g_a @ pair.a @ g_a
    g_b = -0.5 * (m + m.T)
    return value, g_a, g_b
