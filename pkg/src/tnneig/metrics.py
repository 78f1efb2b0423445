"""Eigenvalue and eigenfunction error metrics.

Eigenvalue errors are plain relative errors after pairing by ascending
order.  Eigenfunction errors project the exact state u onto the span of the
approximate eigenfunctions belonging to the same (exact) eigenvalue: the
L2 error uses the L2-orthogonal projection P,

    err_L2 = ||u - P u|| / ||u||,

and the H1 error uses the projection Q in the gradient inner product,

    err_H1 = |u - Q u|_H1 / |u|_H1,

each computed from Gram/cross systems solved by Cholesky.  Every function
involved is separable (a sum of products of 1D factors), so all inner
products split into products of 1D quadratures on per-dimension physical
rules; unbounded directions integrate on generous truncated intervals.
Rotated references in d = 2 fall back to a dense tensor grid for the cross
terms; higher-dimensional rotated problems report eigenvalue errors only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import densela, quadrature, tnn
from .errors import NotPositiveDefiniteError, TnnEigError
from .forms import W_ONE, Weight1D


class SingularEigenspaceError(TnnEigError):
    """The approximate eigenspace is numerically linearly dependent."""


def eigenvalue_errors(approx, exact) -> np.ndarray:
    """Relative errors |approx - exact| / |exact|, both lists ascending."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if approx.shape != exact.shape:
        raise ValueError("approximate and exact eigenvalue lists differ in length")
    if np.any(exact == 0.0):
        raise ValueError("relative error undefined for a zero exact eigenvalue")
    return np.abs(approx - exact) / np.abs(exact)


@dataclass
class SeparableFunction:
    """sum_r coeffs[r] prod_i f_{i,r}(x_i); factors(i, x) -> (values, derivs)."""

    coeffs: np.ndarray
    factors: Callable[[int, np.ndarray], tuple[np.ndarray, np.ndarray]]
    d: int


def from_callables(factor_pairs, coeffs=None) -> SeparableFunction:
    """Build from per-dimension lists of (f, df) callables.

    factor_pairs[i][r] is the (value, derivative) pair of rank r in
    dimension i; ranks must agree across dimensions.
    """
    d = len(factor_pairs)
    rank = len(factor_pairs[0])
    coeffs = np.ones(rank) if coeffs is None else np.asarray(coeffs, dtype=float)

    def factors(i, x):
        vals = np.stack([np.asarray(f(x), dtype=float) for f, _ in factor_pairs[i]])
        ders = np.stack([np.asarray(df(x), dtype=float) for _, df in factor_pairs[i]])
        return vals, ders

    return SeparableFunction(coeffs, factors, d)


def from_model(model: tnn.TnnModel, weights,
               measure_weights: list[Weight1D] | None = None) -> SeparableFunction:
    """The combination sum_ell weights[ell] Psi_ell as a rank k*p function."""
    weights = np.asarray(weights, dtype=float)
    mws = measure_weights or [W_ONE] * model.d
    coeffs = (weights[:, None] * model.coeffs).ravel()

    def factors(i, x):
        vals, ders = [], []
        for ell in range(model.k):
            v, dv = tnn.component_values_at(model, ell, i, x, mws[i])
            vals.append(v)
            ders.append(dv)
        return np.concatenate(vals, axis=0), np.concatenate(ders, axis=0)

    return SeparableFunction(coeffs, factors, model.d)


def metric_rules(specs, unbounded_halfwidth: float = 12.0,
                 halfline_length: float = 60.0):
    """Dense physical 1D rules suitable for post-training inner products."""
    rules = []
    for spec in specs:
        if spec.kind == "whole_line":
            rules.append(quadrature.composite_legendre(
                -unbounded_halfwidth, unbounded_halfwidth, 96, 12))
        elif spec.kind == "half_line":
            rules.append(quadrature.composite_legendre(0.0, halfline_length, 96, 12))
        elif spec.kind == "periodic_angle":
            rules.append(quadrature.composite_legendre(
                0.0, spec.period, max(spec.m_sub, 16), max(spec.n_quad, 12)))
        else:
            rules.append(quadrature.composite_legendre(
                spec.a, spec.b, max(spec.m_sub, 16), max(spec.n_quad, 12)))
    return rules


def _evaluate(fns, rules):
    vals = [[] for _ in rules]
    ders = [[] for _ in rules]
    for fn in fns:
        for i, rule in enumerate(rules):
            v, dv = fn.factors(i, rule.nodes)
            vals[i].append(v)
            ders[i].append(dv)
    return vals, ders


def _pair_table(rule, fa, fb):
    return np.einsum("rq,sq,q->rs", fa, fb, rule.weights)


def _inner_products(fns, rules):
    """All pairwise L2 inner products and H1 seminorm inner products."""
    nf = len(fns)
    d = len(rules)
    vals, ders = _evaluate(fns, rules)
    l2 = np.zeros((nf, nf))
    h1 = np.zeros((nf, nf))
    for a in range(nf):
        for b in range(a, nf):
            m_val = [_pair_table(rules[i], vals[i][a], vals[i][b]) for i in range(d)]
            m_der = [_pair_table(rules[i], ders[i][a], ders[i][b]) for i in range(d)]
            prod_all = np.ones_like(m_val[0])
            for m in m_val:
                prod_all = prod_all * m
            l2[a, b] = l2[b, a] = fns[a].coeffs @ prod_all @ fns[b].coeffs
            acc = np.zeros_like(prod_all)
            for s in range(d):
                term = m_der[s].copy()
                for i in range(d):
                    if i != s:
                        term = term * m_val[i]
                acc += term
            h1[a, b] = h1[b, a] = fns[a].coeffs @ acc @ fns[b].coeffs
    return l2, h1


def _residual_error(uu, cross, gram):
    try:
        low = densela.cholesky(gram)
    except NotPositiveDefiniteError as exc:
        raise SingularEigenspaceError(
            "eigenspace Gram matrix is singular (linearly dependent functions)"
        ) from exc
    proj = float(cross @ densela.cho_solve(low, cross))
    resid_sq = max(uu - proj, 0.0)
    return float(np.sqrt(resid_sq / uu))


def projection_errors(exact: SeparableFunction, eigenspace: list[SeparableFunction],
                      rules) -> tuple[float, float]:
    """(err_L2, err_H1) of the exact state against span(eigenspace)."""
    if not eigenspace:
        raise ValueError("eigenspace must contain at least one function")
    l2, h1 = _inner_products([exact] + list(eigenspace), rules)
    err_l2 = _residual_error(l2[0, 0], l2[0, 1:], l2[1:, 1:])
    err_h1 = _residual_error(h1[0, 0], h1[0, 1:], h1[1:, 1:])
    return err_l2, err_h1


def _model_tables(model, rules, measure_weights):
    """Per-dimension factor arrays (R, Q) shared by all k x p components."""
    mws = measure_weights or [W_ONE] * model.d
    vals, ders = [], []
    for i, rule in enumerate(rules):
        norms = tnn.component_norms(model, i, mws[i])
        v_rows, d_rows = [], []
        for ell in range(model.k):
            v, dv = tnn.component_values_at(model, ell, i, rule.nodes, mws[i],
                                            norms=norms)
            v_rows.append(v)
            d_rows.append(dv)
        vals.append(np.concatenate(v_rows, axis=0))
        ders.append(np.concatenate(d_rows, axis=0))
    return vals, ders


def model_projection_errors(model, y_columns, groups, state_factors, rules,
                            measure_weights=None, rotation=None):
    """Projection errors of exact states against grouped combinations of TNNs.

    y_columns[:, t] are the post-processing combination weights of the t-th
    approximate eigenfunction; groups lists index sets sharing one exact
    eigenvalue; state_factors[t] holds the exact state's per-dimension
    (f, df) callables (rank one, in rotated coordinates when a non-identity
    rotation is given; rotation requires d = 2).  Returns [(err_L2, err_H1)]
    aligned with the state indices.
    """
    y_columns = np.asarray(y_columns, dtype=float)
    vals, ders = _model_tables(model, rules, measure_weights)
    d = model.d
    combo = (y_columns.T[:, :, None] * model.coeffs[None, :, :]).reshape(
        y_columns.shape[1], -1)                       # (T, R)
    m_val = [_pair_table(rules[i], vals[i], vals[i]) for i in range(d)]
    m_der = [_pair_table(rules[i], ders[i], ders[i]) for i in range(d)]
    prod_all = np.ones_like(m_val[0])
    for m in m_val:
        prod_all = prod_all * m
    acc = np.zeros_like(prod_all)
    for s in range(d):
        term = m_der[s].copy()
        for i in range(d):
            if i != s:
                term = term * m_val[i]
        acc += term
    gram_l2_full = combo @ prod_all @ combo.T
    gram_h1_full = combo @ acc @ combo.T
    rotated = rotation is not None and not np.allclose(rotation, np.eye(d))
    out = []
    for group in groups:
        idx = np.asarray(group)
        gl2 = gram_l2_full[np.ix_(idx, idx)]
        gh1 = gram_h1_full[np.ix_(idx, idx)]
        for t in group:
            factors = state_factors[t]
            if not rotated:
                cv = [np.einsum("rq,q->r", vals[i],
                                rules[i].weights * factors[i][0](rules[i].nodes))
                      for i in range(d)]
                cd = [np.einsum("rq,q->r", ders[i],
                                rules[i].weights * factors[i][1](rules[i].nodes))
                      for i in range(d)]
                uval = [float(np.dot(rules[i].weights,
                                     factors[i][0](rules[i].nodes) ** 2))
                        for i in range(d)]
                uder = [float(np.dot(rules[i].weights,
                                     factors[i][1](rules[i].nodes) ** 2))
                        for i in range(d)]
                cprod = np.ones_like(cv[0])
                for c in cv:
                    cprod = cprod * c
                cross_l2 = combo[idx] @ cprod
                uu_l2 = float(np.prod(uval))
                cross_h1 = np.zeros(idx.size)
                uu_h1 = 0.0
                for s in range(d):
                    cterm = cd[s].copy()
                    uterm = uder[s]
                    for i in range(d):
                        if i != s:
                            cterm = cterm * cv[i]
                            uterm *= uval[i]
                    cross_h1 += combo[idx] @ cterm
                    uu_h1 += uterm
            else:
                cross_l2, cross_h1, uu_l2, uu_h1 = _rotated_cross(
                    factors, rotation, vals, ders, combo[idx], rules)
            err_l2 = _residual_error(uu_l2, cross_l2, gl2)
            err_h1 = _residual_error(uu_h1, cross_h1, gh1)
            out.append((err_l2, err_h1))
    return out


def _rotated_cross(factors, rotation, vals, ders, combo, rules):
    """Cross terms of a rotated rank-one reference on the dense d=2 grid."""
    if len(rules) != 2:
        raise ValueError("rotated cross terms require d = 2")
    x0, w0 = rules[0].nodes, rules[0].weights
    x1, w1 = rules[1].nodes, rules[1].weights
    big_w = np.outer(w0, w1)
    xx0, xx1 = np.meshgrid(x0, x1, indexing="ij")
    q = np.asarray(rotation, dtype=float)
    y0 = q[0, 0] * xx0 + q[1, 0] * xx1
    y1 = q[0, 1] * xx0 + q[1, 1] * xx1
    (f0, df0), (f1, df1) = factors
    u = f0(y0) * f1(y1)
    du_dy0 = df0(y0) * f1(y1)
    du_dy1 = f0(y0) * df1(y1)
    du_dx0 = q[0, 0] * du_dy0 + q[0, 1] * du_dy1
    du_dx1 = q[1, 0] * du_dy0 + q[1, 1] * du_dy1
    g_val = np.einsum("qs,rq,rs->r", big_w * u, vals[0], vals[1], optimize=True)
    g_dx0 = np.einsum("qs,rq,rs->r", big_w * du_dx0, ders[0], vals[1], optimize=True)
    g_dx1 = np.einsum("qs,rq,rs->r", big_w * du_dx1, vals[0], ders[1], optimize=True)
    cross_l2 = combo @ g_val
    cross_h1 = combo @ (g_dx0 + g_dx1)
    uu_l2 = float(np.sum(big_w * u * u))
    uu_h1 = float(np.sum(big_w * (du_dx0 ** 2 + du_dx1 ** 2)))
    return cross_l2, cross_h1, uu_l2, uu_h1


def _grid_eval(fn: SeparableFunction, rules):
    """Values and both partials of a separable function on the tensor grid."""
    v0, d0 = fn.factors(0, rules[0].nodes)
    v1, d1 = fn.factors(1, rules[1].nodes)
    c = fn.coeffs
    val = np.einsum("r,rq,rs->qs", c, v0, v1)
    dx0 = np.einsum("r,rq,rs->qs", c, d0, v1)
    dx1 = np.einsum("r,rq,rs->qs", c, v0, d1)
    return val, dx0, dx1


def projection_errors_rotated(factor_pairs, rotation, eigenspace,
                              rules) -> tuple[float, float]:
    """Projection errors for a rank-one reference given in rotated coordinates.

    factor_pairs is [(f, df)] per rotated coordinate y_i with y = rotation^T x;
    only d = 2 is supported (cross terms need the dense tensor grid).
    """
    if len(factor_pairs) != 2 or len(rules) != 2:
        raise ValueError("rotated projection errors are implemented for d = 2 only")
    x0, w0 = rules[0].nodes, rules[0].weights
    x1, w1 = rules[1].nodes, rules[1].weights
    big_w = np.outer(w0, w1)
    xx0, xx1 = np.meshgrid(x0, x1, indexing="ij")
    q = np.asarray(rotation, dtype=float)
    y0 = q[0, 0] * xx0 + q[1, 0] * xx1
    y1 = q[0, 1] * xx0 + q[1, 1] * xx1
    (f0, df0), (f1, df1) = factor_pairs
    u = f0(y0) * f1(y1)
    du_dy0 = df0(y0) * f1(y1)
    du_dy1 = f0(y0) * df1(y1)
    du_dx0 = q[0, 0] * du_dy0 + q[0, 1] * du_dy1
    du_dx1 = q[1, 0] * du_dy0 + q[1, 1] * du_dy1
    nb = len(eigenspace)
    vals, dx0s, dx1s = zip(*(_grid_eval(fn, rules) for fn in eigenspace))
    gram_l2 = np.zeros((nb, nb))
    gram_h1 = np.zeros((nb, nb))
    cross_l2 = np.zeros(nb)
    cross_h1 = np.zeros(nb)
    for a in range(nb):
        cross_l2[a] = np.sum(big_w * u * vals[a])
        cross_h1[a] = np.sum(big_w * (du_dx0 * dx0s[a] + du_dx1 * dx1s[a]))
        for b in range(a, nb):
            gram_l2[a, b] = gram_l2[b, a] = np.sum(big_w * vals[a] * vals[b])
            gram_h1[a, b] = gram_h1[b, a] = np.sum(
                big_w * (dx0s[a] * dx0s[b] + dx1s[a] * dx1s[b]))
    uu_l2 = np.sum(big_w * u * u)
    uu_h1 = np.sum(big_w * (du_dx0 ** 2 + du_dx1 ** 2))
    err_l2 = _residual_error(uu_l2, cross_l2, gram_l2)
    err_h1 = _residual_error(uu_h1, cross_h1, gram_h1)
    return err_l2, err_h1
