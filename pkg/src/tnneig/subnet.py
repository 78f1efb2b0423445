"""One-dimensional subnetworks: scalar input, p outputs.

A subnetwork is a fully connected net R -> R^p whose hidden layers share one
activation; the output layer is affine.  Forward evaluation propagates the
value together with its first (and optionally second) derivative with
respect to the input, so quantities like d(phi)/dx at quadrature nodes are
analytic, never finite differences.  Backprop is hand-written reverse mode
for the functional

    S = sum_{j,q} Av[j,q] * phi_j(x_q) + Ad[j,q] * phi_j'(x_q),

including the mixed second-derivative terms that the phi' path introduces.

The same code runs "stacked": a SubnetStack holds the parameters of k
equally shaped subnetworks in leading-axis-k arrays so all of them can be
evaluated together.  Affine layers are stacked matmuls over the
concatenated (value | derivative | second-derivative) streams; the
activation/stream arithmetic is fused into numba kernels because the
training loop spends most of its time there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import NonFiniteError

_ACT_CODES = {"sin": 0, "tanh": 1}


def activation_code(name: str) -> int:
    try:
        return _ACT_CODES[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(_ACT_CODES)}")


@numba.njit(parallel=True, cache=True)
def _act_forward(zall, q, order, act, nxt, sz, dsz):
    """Hidden-layer activation over concatenated streams [z | u | v].

    Writes [s(z) | s'(z) u | s''(z) u^2 + s'(z) v] into nxt and caches
    s(z), s'(z) for the backward pass.
    """
    kk, ww, _ = zall.shape
    for a in numba.prange(kk):
        for b in range(ww):
            for i in range(q):
                z = zall[a, b, i]
                u = zall[a, b, q + i]
                if act == 0:
                    s = np.sin(z)
                    c = np.cos(z)
                    dd = -s
                else:
                    s = np.tanh(z)
                    c = 1.0 - s * s
                    dd = -2.0 * s * c
                sz[a, b, i] = s
                dsz[a, b, i] = c
                nxt[a, b, i] = s
                nxt[a, b, q + i] = c * u
                if order >= 2:
                    v = zall[a, b, 2 * q + i]
                    nxt[a, b, 2 * q + i] = dd * u * u + c * v
    return nxt


@numba.njit(parallel=True, cache=True)
def _act_backward(back, q, act, sz, dsz, u_all, vcat):
    """Adjoint transport through a hidden activation.

    back holds [va | vda]; writes [vz | vu] with
    vz = va s' + vda u s'',  vu = vda s'.
    """
    kk, ww, _ = back.shape
    for a in numba.prange(kk):
        for b in range(ww):
            for i in range(q):
                va = back[a, b, i]
                vda = back[a, b, q + i]
                s = sz[a, b, i]
                c = dsz[a, b, i]
                if act == 0:
                    dd = -s
                else:
                    dd = -2.0 * s * c
                vcat[a, b, i] = va * c + vda * u_all[a, b, q + i] * dd
                vcat[a, b, q + i] = vda * c
    return vcat


@dataclass
class SubnetStack:
    """Parameters of k equally shaped subnetworks, stacked on the first axis."""

    weights: list[np.ndarray]   # per layer: (k, out, in)
    biases: list[np.ndarray]    # per layer: (k, out)
    activation: str

    @property
    def k(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def select(self, ell: int) -> "SubnetParams":
        return SubnetParams(
            [w[ell] for w in self.weights],
            [b[ell] for b in self.biases],
            self.activation,
        )


@dataclass
class SubnetParams:
    """One subnetwork: affine layers with a shared hidden activation."""

    weights: list[np.ndarray]   # per layer: (out, in); first in = 1
    biases: list[np.ndarray]    # per layer: (out,)
    activation: str

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def as_stack(self) -> SubnetStack:
        return SubnetStack(
            [w[None] for w in self.weights],
            [b[None] for b in self.biases],
            self.activation,
        )


@dataclass
class BatchEval:
    values: np.ndarray        # (p, Q)
    input_derivs: np.ndarray  # (p, Q)


def init_stack(k, depth, width, p, activation, rng) -> SubnetStack:
    """Glorot-uniform weights; biases uniform in [-pi, pi] for sine nets."""
    sizes = [1] + [width] * depth + [p]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(k, fan_out, fan_in)))
        if activation == "sin":
            biases.append(rng.uniform(-np.pi, np.pi, size=(k, fan_out)))
        else:
            biases.append(np.zeros((k, fan_out)))
    return SubnetStack(weights, biases, activation)


def forward_stack(stack: SubnetStack, args: np.ndarray, order: int = 1,
                  want_cache: bool = False):
    """Evaluate all k subnetworks at args of shape (k, Q).

    Returns (values, derivs[, second_derivs][, cache]); values et al. have
    shape (k, p, Q).  order=2 adds the second input derivative, needed where
    quadrature arguments themselves depend on trainable scale parameters.
    """
    args = np.ascontiguousarray(args, dtype=float)
    act = activation_code(stack.activation)
    k, q = args.shape
    x = args[:, None, :]
    streams = [x, np.ones_like(x)]
    if order >= 2:
        streams.append(np.zeros_like(x))
    cur = np.concatenate(streams, axis=-1)     # (k, 1, n_streams * Q)
    n_layers = len(stack.weights)
    cache = [] if want_cache else None
    for l, (w, b) in enumerate(zip(stack.weights, stack.biases)):
        zall = np.matmul(w, cur)
        zall[:, :, :q] += b[:, :, None]        # bias enters the value stream only
        if l == n_layers - 1:
            if want_cache:
                cache.append((cur, None, None, None))
            cur = zall
            break
        sz = np.empty((k, w.shape[1], q))
        dsz = np.empty_like(sz)
        nxt = np.empty_like(zall)
        _act_forward(zall, q, order, act, nxt, sz, dsz)
        if want_cache:
            cache.append((cur, sz, dsz, zall))
        cur = nxt
    vals = cur[:, :, :q]
    derivs = cur[:, :, q : 2 * q]
    out = (vals, derivs) if order < 2 else (vals, derivs, cur[:, :, 2 * q : 3 * q])
    return out + (cache,) if want_cache else out


def backprop_stack(stack: SubnetStack, cache, adj_values, adj_derivs):
    """Reverse-mode gradients of S = sum(Av * phi + Ad * phi') for a stack.

    cache comes from forward_stack(want_cache=True).  Returns (grad_weights,
    grad_biases) shaped like the stack parameters.
    """
    act = activation_code(stack.activation)
    n_layers = len(stack.weights)
    q = adj_values.shape[-1]
    back = np.concatenate([adj_values, adj_derivs], axis=-1)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        cur_prev, sz, dsz, zall = cache[l]
        if l < n_layers - 1:
            vcat = np.empty_like(back)
            _act_backward(back, q, act, sz, dsz, zall, vcat)
        else:
            vcat = back
        acat = cur_prev[:, :, : 2 * q]
        grad_w[l] = np.matmul(vcat, acat.transpose(0, 2, 1))
        grad_b[l] = vcat[:, :, :q].sum(axis=-1)
        if l > 0:
            back = np.matmul(stack.weights[l].transpose(0, 2, 1), vcat)
    return grad_w, grad_b


def forward_batch(params: SubnetParams, nodes: np.ndarray) -> BatchEval:
    """Values and analytic input derivatives of one subnetwork at nodes."""
    nodes = np.asarray(nodes, dtype=float)
    if not np.all(np.isfinite(nodes)):
        raise NonFiniteError("non-finite input nodes")
    vals, derivs = forward_stack(params.as_stack(), nodes[None, :])
    vals, derivs = vals[0], derivs[0]
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(derivs))):
        bad = np.argwhere(~(np.isfinite(vals) & np.isfinite(derivs)))
        j, q = bad[0]
        raise NonFiniteError(
            f"non-finite subnetwork output at component {j}, node index {q}"
        )
    return BatchEval(vals, derivs)


def backprop(params: SubnetParams, nodes: np.ndarray,
             adjoints_values: np.ndarray, adjoints_derivs: np.ndarray):
    """Parameter gradient of sum(Av * phi + Ad * phi') at the given nodes.

    Returns (grad_weights, grad_biases) matching params layer by layer.
    """
    nodes = np.asarray(nodes, dtype=float)
    adjoints_values = np.asarray(adjoints_values, dtype=float)
    adjoints_derivs = np.asarray(adjoints_derivs, dtype=float)
    expected = (params.out_dim, nodes.size)
    if adjoints_values.shape != expected or adjoints_derivs.shape != expected:
        raise ValueError(
            f"adjoint shapes {adjoints_values.shape}/{adjoints_derivs.shape} "
            f"do not match BatchEval shape {expected}"
        )
    stack = params.as_stack()
    *_, cache = forward_stack(stack, nodes[None, :], want_cache=True)
    grad_w, grad_b = backprop_stack(stack, cache,
                                    np.ascontiguousarray(adjoints_values[None]),
                                    np.ascontiguousarray(adjoints_derivs[None]))
    return [w[0] for w in grad_w], [b[0] for b in grad_b]
