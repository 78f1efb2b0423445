"""Optimizers for the training loop: Adam and L-BFGS with strong Wolfe.

Adam handles the long exploratory phase; L-BFGS (two-loop recursion,
history 20, strong Wolfe line search with c1 = 1e-4, c2 = 0.9) polishes the
final digits.  Both operate on flat parameter vectors and are fully
deterministic given their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingStepError


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Standard bias-corrected Adam update; returns the new parameter vector."""
    if params.shape != grad.shape:
        raise ValueError("parameter/gradient length mismatch")
    if not np.all(np.isfinite(grad)):
        bad = int(np.argwhere(~np.isfinite(grad))[0])
        raise TrainingStepError(f"non-finite gradient entry at index {bad}",
                                diagnostics={"index": bad})
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class LbfgsResult:
    x: np.ndarray
    fval: float
    grad: np.ndarray
    iterations: int
    status: str                    # "max_iters" | "gradient" | "line_search"
    history: list = field(default_factory=list)   # accepted (iteration, f)


_C1 = 1e-4
_C2 = 0.9
_MAX_TRIALS = 25


def _cubic_interp(a, fa, dfa, b, fb, dfb):
    """Minimizer of the cubic through (a, fa, dfa), (b, fb, dfb)."""
    d1 = dfa + dfb - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - dfa * dfb
    if rad < 0.0:
        return 0.5 * (a + b)
    d2 = np.sqrt(rad) * np.sign(b - a)
    t = b - (b - a) * (dfb + d2 - d1) / (dfb - dfa + 2.0 * d2)
    if not np.isfinite(t):
        return 0.5 * (a + b)
    lo, hi = min(a, b), max(a, b)
    span = hi - lo
    return min(max(t, lo + 0.1 * span), hi - 0.1 * span)


def _zoom(phi, a_lo, f_lo, d_lo, a_hi, f_hi, d_hi, f0, d0, budget):
    for _ in range(budget):
        a = _cubic_interp(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
        f, d, state = phi(a)
        if not np.isfinite(f) or f > f0 + _C1 * a * d0 or f >= f_lo:
            a_hi, f_hi, d_hi = a, f, d
        else:
            if abs(d) <= -_C2 * d0:
                return a, f, d, state
            if d * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
            a_lo, f_lo, d_lo = a, f, d
        if abs(a_hi - a_lo) < 1e-16 * max(1.0, abs(a_lo)):
            break
    return None


def _wolfe_search(phi, f0, d0):
    """Strong Wolfe line search (bracket then zoom); phi(a) -> (f, slope, state)."""
    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = 1.0
    trials = 0
    while trials < _MAX_TRIALS:
        f, d, state = phi(a)
        trials += 1
        if not np.isfinite(f):
            # shrink toward the last finite point rather than fail outright
            result = _zoom(phi, a_prev, f_prev, d_prev, a, np.inf, 0.0,
                           f0, d0, _MAX_TRIALS - trials)
            return result
        if f > f0 + _C1 * a * d0 or (trials > 1 and f >= f_prev):
            return _zoom(phi, a_prev, f_prev, d_prev, a, f, d,
                         f0, d0, _MAX_TRIALS - trials)
        if abs(d) <= -_C2 * d0:
            return a, f, d, state
        if d >= 0.0:
            return _zoom(phi, a, f, d, a_prev, f_prev, d_prev,
                         f0, d0, _MAX_TRIALS - trials)
        a_prev, f_prev, d_prev = a, f, d
        a *= 2.0
    return None


def lbfgs_minimize(objective, x0: np.ndarray, max_iters: int,
                   history_size: int = 20, grad_tol: float = 1e-10) -> LbfgsResult:
    """Minimize objective(x) -> (value, gradient) from x0.

    Accepted iterates are monotone non-increasing; stops on max_iters, on
    gradient norm <= grad_tol, or when the strong Wolfe search fails (the
    best iterate so far is returned with status "line_search").
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = objective(x)
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    status = "max_iters"
    accepted = []
    it = 0
    for it in range(1, max_iters + 1):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= grad_tol:
            status = "gradient"
            it -= 1
            break
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = np.dot(s_hist[-1], y_hist[-1]) / np.dot(y_hist[-1], y_hist[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * np.dot(y, q)
            q += (a - b) * s
        direction = -q
        d0 = float(np.dot(g, direction))
        if d0 >= 0.0:
            # reset to steepest descent if curvature info went stale
            s_hist.clear(); y_hist.clear(); rho_hist.clear()
            direction = -g
            d0 = float(np.dot(g, direction))
            if d0 >= 0.0:
                status = "gradient"
                it -= 1
                break

        def phi(a, _x=x, _dir=direction):
            xa = _x + a * _dir
            fa, ga = objective(xa)
            return fa, float(np.dot(ga, _dir)), (xa, fa, ga)

        found = _wolfe_search(phi, f, d0)
        if found is None:
            status = "line_search"
            it -= 1
            break
        alpha, f_new, _, (x_new, _, g_new) = found
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-14 * float(np.dot(y, y) or 1.0):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > history_size:
                s_hist.pop(0); y_hist.pop(0); rho_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        accepted.append((it, f))
    return LbfgsResult(x, f, g, it, status, accepted)
