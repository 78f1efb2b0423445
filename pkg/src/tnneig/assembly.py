"""Assembly of the k x k stiffness/mass matrices by 1D quadrature splitting.

Every entry A_mn = a(Psi_m, Psi_n) of a separable form factorizes into sums
over component pairs of products over dimensions of 1D quadrature sums
("factors").  This module materializes those factors once per step, builds
A and B from them, and pushes matrix-level adjoints G_A, G_B back to a flat
parameter gradient through the whole chain: coefficients, the
product-over-dimensions rule, the normalization quotients, envelope and
scale parameters (including quadrature arguments that move with beta on
unbounded dimensions), and subnetwork backprop.

Unbounded dimensions need care because each network carries its own scale
beta.  A product of two whole-line components with scales (bm, bn) has the
combined envelope exp(-(bm^2+bn^2) x^2 / 2); substituting z = sigma x with
sigma = sqrt((bm^2+bn^2)/2) turns it into the Hermite weight exp(-z^2)
exactly, at the price of evaluating network m at arguments (bm/sigma) z.
The half-line case works the same way with sigma = (bm+bn)/2 and weight
exp(-z).  On the diagonal m = n this reduces to the single-scale scheme
z = beta x with one net beta per derivative pair and a 1/beta measure
factor.  The dense tensor-grid oracle in the tests arbitrates that this is
the correct transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from . import subnet, tnn
from .errors import DegenerateComponentError, NonFiniteError
from .forms import ProblemForms, weight_by_name

KernelKey = tuple[str, int, int]


@numba.njit(parallel=True, cache=True)
def _reduced_factors(v4, d4, t, n, beta, whole, vout, dout):
    """V = v/n and D = beta (d - c0 v)/n with c0 = t (whole line) or 1/2."""
    kk, _, pp, qq = v4.shape
    for m in numba.prange(kk):
        bm = beta[m]
        for nn in range(kk):
            for j in range(pp):
                inv = 1.0 / n[m, j]
                for q in range(qq):
                    c0 = t[m, nn, q] if whole else 0.5
                    v = v4[m, nn, j, q]
                    vout[m, nn, j, q] = v * inv
                    dout[m, nn, j, q] = bm * (d4[m, nn, j, q] - c0 * v) * inv


@numba.njit(parallel=True, cache=True)
def _unbounded_adjoints(vbar, dbar, v4, d4, dd4, t, n, beta, whole,
                        rvbar, rdbar, tbar, nbar_acc, betabar_acc):
    """Adjoint conversion for unbounded dimensions, one fused pass.

    Computes the raw-output adjoints rvbar/rdbar, the argument adjoints
    tbar (needs the second derivative dd4), and accumulates the raw sums
    behind the normalization adjoint, sum (vbar V + dbar D), into nbar_acc
    and the explicit-scale adjoint sum dbar D into betabar_acc.
    """
    kk, _, pp, qq = v4.shape
    for m in numba.prange(kk):
        bm = beta[m]
        for nn in range(kk):
            for q in range(qq):
                tacc = 0.0
                c0 = t[m, nn, q] if whole else 0.5
                c0p = 1.0 if whole else 0.0
                for j in range(pp):
                    inv = 1.0 / n[m, j]
                    v = v4[m, nn, j, q]
                    d = d4[m, nn, j, q]
                    vb = vbar[m, nn, j, q]
                    db = dbar[m, nn, j, q]
                    vv = v * inv                      # V
                    dd = bm * (d - c0 * v) * inv      # D
                    rvbar[m, nn, j, q] = vb * inv - db * bm * c0 * inv
                    rdbar[m, nn, j, q] = db * bm * inv
                    nbar_acc[m, nn, j] += vb * vv + db * dd
                    betabar_acc[m, nn, j] += db * dd
                    tacc += (vb * d * inv
                             + db * bm * (dd4[m, nn, j, q] - c0p * v - c0 * d) * inv)
                tbar[m, nn, q] = tacc


@dataclass
class AssembledPair:
    a: np.ndarray   # (k, k) symmetric
    b: np.ndarray   # (k, k) symmetric positive definite (up to jitter policy)


class FactorTable:
    """1D quadrature sums, one (k, k, p, p) tensor per (dimension, kernel)."""

    def __init__(self, tensors: dict[tuple[int, KernelKey], np.ndarray]):
        self.tensors = tensors

    def factor(self, m: int, n: int, dim: int, key: KernelKey) -> np.ndarray:
        return self.tensors[(dim, key)][m, n]


@dataclass
class _DimWork:
    spec: tnn.DimensionSpec
    rule: object
    factors: dict[KernelKey, np.ndarray] = field(default_factory=dict)
    wk: dict[KernelKey, np.ndarray] = field(default_factory=dict)
    # populated by the builders below; unbounded dims use the 4-axis layout
    # (m, n, j, q) where m indexes the evaluated net and n its pair partner.


@dataclass
class Workspace:
    model: tnn.TnnModel
    forms: ProblemForms
    dims: list[_DimWork]
    pair: AssembledPair
    table: FactorTable
    op_counts: dict


def _required_keys(forms: ProblemForms, dim: int) -> list[KernelKey]:
    keys = set(forms.a.kernel_keys(dim))
    keys.update(forms.b.kernel_keys(dim))
    return sorted(keys)


def _check_rule(spec: tnn.DimensionSpec, rule):
    expected = {"whole_line": "hermite", "half_line": "laguerre"}.get(
        spec.kind, "legendre_composite")
    if rule.kind != expected:
        raise ValueError(f"rule kind {rule.kind!r} does not match "
                         f"dimension kind {spec.kind!r}")


def _build_bounded(model, forms, i, rule, keys, counts):
    work = _DimWork(model.specs[i], rule)
    k, p = model.k, model.p
    x, w = rule.nodes, rule.weights
    stack = model.subnets[i]
    args = np.broadcast_to(x, (k, x.size))
    vals, derivs, cache = subnet.forward_stack(stack, args, want_cache=True)
    full_v, full_d = tnn._apply_bounded_envelope(model, i, x, vals, derivs)
    mwvals = forms.measure_weight(i).values(x)
    nsq = np.einsum("q,kjq->kj", w * mwvals, full_v ** 2)
    if np.any(nsq <= tnn.NORM_FLOOR ** 2):
        ell, j = np.argwhere(nsq <= tnn.NORM_FLOOR ** 2)[0]
        raise DegenerateComponentError(int(ell), i, int(j))
    n = np.sqrt(nsq)
    work.v = vals
    work.cache = cache
    work.full_v, work.full_d = full_v, full_d
    work.n = n
    work.wmw = w * mwvals
    work.V = full_v / n[:, :, None]
    work.D = full_d / n[:, :, None]
    qn = x.size
    for key in keys:
        wname, dl, dr = key
        weight = weight_by_name(wname)
        wk = w * weight.values(x)
        xs = (work.V if dl == 0 else work.D) * wk[None, None, :]
        ys = work.V if dr == 0 else work.D
        work.wk[key] = wk
        # one (k p, Q) x (Q, k p) product, reshaped to (k, k, p, p)
        flat = xs.reshape(k * p, qn) @ ys.reshape(k * p, qn).T
        work.factors[key] = np.ascontiguousarray(
            flat.reshape(k, p, k, p).transpose(0, 2, 1, 3))
        counts["factor_tensors"] += 1
    return work


def _build_unbounded(model, forms, i, rule, keys, counts):
    work = _DimWork(model.specs[i], rule)
    k, p = model.k, model.p
    z, w = rule.nodes, rule.weights
    q = z.size
    whole = model.specs[i].kind == "whole_line"
    beta = model.beta(i)
    if whole:
        sigma = np.sqrt(0.5 * (beta[:, None] ** 2 + beta[None, :] ** 2))
    else:
        sigma = 0.5 * (beta[:, None] + beta[None, :])
    r = beta[:, None] / sigma
    t = r[:, :, None] * z[None, None, :]               # (k, k, Q)
    stack = model.subnets[i]
    vals, derivs, dd, cache = subnet.forward_stack(
        stack, t.reshape(k, k * q), order=2, want_cache=True)

    def to4(a):
        return np.ascontiguousarray(a.reshape(k, p, k, q).transpose(0, 2, 1, 3))

    v4, d4, dd4 = to4(vals), to4(derivs), to4(dd)
    diag = np.arange(k)
    v_self = v4[diag, diag]                             # (k, p, Q)
    mweight = forms.measure_weight(i)
    x_self = z[None, :] / beta[:, None]                 # (k, Q)
    mw_self = mweight.values(x_self)
    nsq = np.einsum("kq,kjq->kj", w[None, :] * mw_self / beta[:, None], v_self ** 2)
    if np.any(nsq <= tnn.NORM_FLOOR ** 2):
        ell, j = np.argwhere(nsq <= tnn.NORM_FLOOR ** 2)[0]
        raise DegenerateComponentError(int(ell), i, int(j))
    n = np.sqrt(nsq)
    work.whole = whole
    work.beta, work.sigma, work.r, work.t = beta, sigma, r, t
    work.v4, work.d4, work.dd4 = v4, d4, dd4
    work.cache = cache
    work.n, work.nsq = n, nsq
    work.mw_self, work.x_self = mw_self, x_self
    work.V = np.empty_like(v4)
    work.D = np.empty_like(v4)
    _reduced_factors(v4, d4, t, n, beta, whole, work.V, work.D)
    work.x_pair = z[None, None, :] / sigma[:, :, None]  # (k, k, Q)
    for key in keys:
        wname, dl, dr = key
        weight = weight_by_name(wname)
        wk = w[None, None, :] * weight.values(work.x_pair) / sigma[:, :, None]
        xs = work.V if dl == 0 else work.D
        ys = (work.V if dr == 0 else work.D).transpose(1, 0, 2, 3)
        work.wk[key] = wk
        work.factors[key] = np.matmul(xs * wk[:, :, None, :],
                                      ys.transpose(0, 1, 3, 2))
        counts["factor_tensors"] += 1
    return work


def _mirror_upper(m: np.ndarray) -> np.ndarray:
    return np.triu(m) + np.triu(m, 1).T


def _mask_upper_adjoint(g: np.ndarray) -> np.ndarray:
    """Adjoint of _mirror_upper: fold symmetric G onto the upper triangle."""
    g = np.asarray(g, dtype=float)
    return np.triu(g + g.T) - np.diag(np.diag(g))


def _term_tensor(dims, kernels, counts):
    h = None
    for i, kern in enumerate(kernels):
        f = dims[i].factors[kern.key]
        h = f.copy() if h is None else h * f
        if h is not f:
            counts["hadamard_products"] += 1
    return h


def build_workspace(model: tnn.TnnModel, forms: ProblemForms,
                    rules=None) -> Workspace:
    """Forward pass: factors plus assembled (A, B), kept for the gradient."""
    if forms.d != model.d:
        raise ValueError(f"forms span {forms.d} dimensions, model has {model.d}")
    counts = {"factor_tensors": 0, "hadamard_products": 0}
    dims = []
    for i, spec in enumerate(model.specs):
        rule = rules[i] if rules is not None else spec.rule()
        _check_rule(spec, rule)
        keys = _required_keys(forms, i)
        build = _build_unbounded if spec.is_unbounded else _build_bounded
        dims.append(build(model, forms, i, rule, keys, counts))
    for i, work in enumerate(dims):
        for key, f in work.factors.items():
            if not np.all(np.isfinite(f)):
                m, n = np.argwhere(~np.isfinite(f).all(axis=(2, 3)))[0]
                raise NonFiniteError(
                    f"non-finite factor for pair ({m}, {n}), dimension {i}, "
                    f"kernel {key}")
    c = model.coeffs
    k = model.k
    a_raw = np.zeros((k, k))
    for coeff, kernels in forms.a.terms:
        h = _term_tensor(dims, kernels, counts)
        a_raw += coeff * np.einsum("mj,mnjl,nl->mn", c, h, c, optimize=True)
    bcoeff, bkernels = forms.b.terms[0]
    hb = _term_tensor(dims, bkernels, counts)
    b_raw = bcoeff * np.einsum("mj,mnjl,nl->mn", c, hb, c, optimize=True)
    pair = AssembledPair(_mirror_upper(a_raw), _mirror_upper(b_raw))
    table = FactorTable({(i, key): f for i, work in enumerate(dims)
                         for key, f in work.factors.items()})
    return Workspace(model, forms, dims, pair, table, counts)


def assemble(model: tnn.TnnModel, forms: ProblemForms,
             rules=None) -> tuple[AssembledPair, FactorTable]:
    ws = build_workspace(model, forms, rules)
    return ws.pair, ws.table


def _backward_bounded(model, i, work, fbars):
    k, p = model.k, model.p
    qn = work.rule.nodes.size
    vbar = np.zeros((k, p, qn))
    dbar = np.zeros((k, p, qn))
    for key, fb in fbars.items():
        _, dl, dr = key
        wk = work.wk[key]
        xs = work.V if dl == 0 else work.D
        ys = work.V if dr == 0 else work.D
        # d/dX of sum fb[m,n,j,l] * sum_q wk_q X[m,j,q] Y[n,l,q]
        fb2 = fb.transpose(0, 2, 1, 3).reshape(k * p, k * p)
        xc = (fb2 @ ys.reshape(k * p, qn)).reshape(k, p, qn) * wk[None, None, :]
        yc = (fb2.T @ xs.reshape(k * p, qn)).reshape(k, p, qn) * wk[None, None, :]
        if dl == 0:
            vbar += xc
        else:
            dbar += xc
        if dr == 0:
            vbar += yc
        else:
            dbar += yc
    n = work.n
    n3 = n[:, :, None]
    fvbar = vbar / n3
    fdbar = dbar / n3
    nbar = -(np.einsum("mjq,mjq->mj", vbar, work.V)
             + np.einsum("mjq,mjq->mj", dbar, work.D)) / n
    nsqbar = nbar / (2.0 * n)
    fvbar += (2.0 * nsqbar)[:, :, None] * work.wmw[None, None, :] * work.full_v
    spec = work.spec
    x = work.rule.nodes
    gamma_bar = None
    if spec.kind == "bounded_natural":
        rvbar, rdbar = fvbar, fdbar
    elif spec.kind == "bounded_dirichlet":
        hh = 0.5 * (spec.b - spec.a)
        g = (x - spec.a) * (spec.b - x) / hh ** 2
        dg = (spec.a + spec.b - 2.0 * x) / hh ** 2
        rvbar = fvbar * g + fdbar * dg
        rdbar = fdbar * g
    else:  # periodic_angle
        sfac = np.sin(np.pi * x / spec.period)
        dsfac = (np.pi / spec.period) * np.cos(np.pi * x / spec.period)
        rvbar = fvbar * sfac + fdbar * dsfac
        rdbar = fdbar * sfac
        gamma_bar = fvbar.sum(axis=-1)
    gw, gb = subnet.backprop_stack(model.subnets[i], work.cache, rvbar, rdbar)
    return gw, gb, gamma_bar


def _backward_unbounded(model, forms, i, work, fbars):
    k, p = model.k, model.p
    z, w = work.rule.nodes, work.rule.weights
    qn = z.size
    beta, sigma, r = work.beta, work.sigma, work.r
    whole = work.whole
    vbar = np.zeros((k, k, p, qn))
    dbar = np.zeros((k, k, p, qn))
    sigbar = np.zeros((k, k))
    for key, fb in fbars.items():
        wname, dl, dr = key
        weight = weight_by_name(wname)
        wk = work.wk[key]
        xs = work.V if dl == 0 else work.D
        ys = (work.V if dr == 0 else work.D).transpose(1, 0, 2, 3)
        fb_y = np.matmul(fb, ys)                       # (k, k, p, Q)
        xc = fb_y * wk[:, :, None, :]
        yc = (np.matmul(fb.transpose(0, 1, 3, 2), xs)
              * wk[:, :, None, :]).transpose(1, 0, 2, 3)
        if dl == 0:
            vbar += xc
        else:
            dbar += xc
        if dr == 0:
            vbar += yc
        else:
            dbar += yc
        # quadrature-weight path: wk = w * wf(z/sigma) / sigma
        snode = np.sum(xs * fb_y, axis=2)              # (k, k, Q)
        wf = weight.values(work.x_pair)
        dwf = weight.derivs(work.x_pair)
        dwk_dsigma = -(w[None, None, :] / sigma[:, :, None] ** 2) * (
            wf + dwf * work.x_pair)
        sigbar += np.einsum("mnq,mnq->mn", snode, dwk_dsigma)
    # V = v/n, D = beta (d - c0 v)/n; fused adjoint conversion
    n = work.n
    rvbar = np.empty_like(vbar)
    rdbar = np.empty_like(vbar)
    tbar = np.empty((k, k, qn))
    nbar_acc = np.zeros((k, k, p))
    betabar_acc = np.zeros((k, k, p))
    _unbounded_adjoints(vbar, dbar, work.v4, work.d4, work.dd4, work.t, n,
                        beta, whole, rvbar, rdbar, tbar, nbar_acc, betabar_acc)
    nbar = -nbar_acc.sum(axis=1) / n
    betabar = betabar_acc.sum(axis=(1, 2)) / beta
    tz = tbar @ z                                       # (k, k)
    if whole:
        dr_self = (1.0 - 0.5 * r * r) / sigma
        dr_other = -(r * r.T) / (2.0 * sigma)
        dsig_dbm = beta[:, None] / (2.0 * sigma)
        dsig_dbn = beta[None, :] / (2.0 * sigma)
    else:
        dr_self = (1.0 - 0.5 * r) / sigma
        dr_other = -r / (2.0 * sigma)
        dsig_dbm = np.full_like(sigma, 0.5)
        dsig_dbn = np.full_like(sigma, 0.5)
    betabar += (tz * dr_self).sum(axis=1) + (tz * dr_other).sum(axis=0)
    betabar += (sigbar * dsig_dbm).sum(axis=1) + (sigbar * dsig_dbn).sum(axis=0)
    # normalization: nsq = (1/beta) sum_q w mw(z/beta) v_self^2
    nsqbar = nbar / (2.0 * n)
    diag = np.arange(k)
    v_self = work.v4[diag, diag]
    mweight = forms.measure_weight(i)
    coef = (w[None, :] * work.mw_self / beta[:, None])[:, None, :]
    add = (2.0 * nsqbar)[:, :, None] * coef * v_self
    rvbar[diag, diag] += add
    dmw = mweight.derivs(work.x_self)
    dnsq_dbeta = (-work.nsq / beta[:, None]
                  - np.einsum("kq,kjq->kj", w[None, :] * dmw * z[None, :],
                              v_self ** 2) / beta[:, None] ** 3)
    betabar += np.einsum("kj,kj->k", nsqbar, dnsq_dbeta)
    adj_v = rvbar.transpose(0, 2, 1, 3).reshape(k, p, k * qn)
    adj_d = rdbar.transpose(0, 2, 1, 3).reshape(k, p, k * qn)
    gw, gb = subnet.backprop_stack(model.subnets[i], work.cache, adj_v, adj_d)
    log_beta_bar = betabar * beta
    return gw, gb, log_beta_bar


def gradient_from_workspace(ws: Workspace, g_a: np.ndarray,
                            g_b: np.ndarray) -> np.ndarray:
    """Flat-parameter gradient of sum(G_A o A) + sum(G_B o B)."""
    model, forms = ws.model, ws.forms
    k, p, d = model.k, model.p, model.d
    g_a = np.asarray(g_a, dtype=float)
    g_b = np.asarray(g_b, dtype=float)
    if g_a.shape != (k, k) or g_b.shape != (k, k):
        raise ValueError(f"adjoints must be ({k}, {k}) matrices")
    gam = _mask_upper_adjoint(g_a)
    gbm = _mask_upper_adjoint(g_b)
    c = model.coeffs
    cbar = np.zeros_like(c)
    fbars: dict[tuple[int, KernelKey], np.ndarray] = {}
    term_list = [(coeff, kernels, gam) for coeff, kernels in forms.a.terms]
    bcoeff, bkernels = forms.b.terms[0]
    term_list.append((bcoeff, bkernels, gbm))
    for coeff, kernels, gmask in term_list:
        fs = [ws.dims[i].factors[kern.key] for i, kern in enumerate(kernels)]
        prefix = [np.array(1.0)] * (d + 1)
        for i in range(d):
            prefix[i + 1] = prefix[i] * fs[i]
        suffix = [np.array(1.0)] * (d + 1)
        for i in range(d - 1, -1, -1):
            suffix[i] = fs[i] * suffix[i + 1]
        h = prefix[d]
        gc = coeff * gmask
        cbar += np.einsum("mn,mnjl,nl->mj", gc, h, c, optimize=True)
        cbar += np.einsum("mn,mnjl,mj->nl", gc, h, c, optimize=True)
        tt = np.einsum("mn,mj,nl->mnjl", gc, c, c)
        for i, kern in enumerate(kernels):
            slot = (i, kern.key)
            contrib = tt * (prefix[i] * suffix[i + 1])
            if slot in fbars:
                fbars[slot] += contrib
            else:
                fbars[slot] = contrib
    pieces = [cbar.ravel()]
    for i in range(d):
        dim_fbars = {key: fb for (dim, key), fb in fbars.items() if dim == i}
        if model.specs[i].is_unbounded:
            gw, gb, lb_bar = _backward_unbounded(model, forms, i, ws.dims[i],
                                                 dim_fbars)
            extra = [lb_bar]
        else:
            gw, gb, gamma_bar = _backward_bounded(model, i, ws.dims[i], dim_fbars)
            extra = [gamma_bar.ravel()] if gamma_bar is not None else []
        for w_arr, b_arr in zip(gw, gb):
            pieces.append(w_arr.ravel())
            pieces.append(b_arr.ravel())
        pieces.extend(extra)
    return np.concatenate(pieces)


def assemble_gradient(model: tnn.TnnModel, forms: ProblemForms,
                      g_a: np.ndarray, g_b: np.ndarray, rules=None,
                      workspace: Workspace | None = None) -> np.ndarray:
    """Gradient of sum(G_A o A) + sum(G_B o B) with respect to all parameters.

    Recomputes the forward workspace unless one from build_workspace is
    supplied (the training loop shares it with the loss evaluation).
    """
    ws = workspace if workspace is not None else build_workspace(model, forms, rules)
    return gradient_from_workspace(ws, g_a, g_b)
