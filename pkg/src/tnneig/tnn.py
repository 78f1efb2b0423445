"""Tensor-network models: k rank-p products of normalized 1D components.

The ell-th network represents

    Psi_ell(x) = sum_j c[ell, j] * prod_i comp_hat[i, j, ell](x_i),

where each component comp_hat is a subnetwork output multiplied by a
domain-dependent envelope and divided by its quadrature L2 norm:

* bounded Dirichlet (a, b):   (x - a)(b - x) / ((b-a)/2)^2 * phi(x)
* bounded natural (a, b):     phi(x)
* whole line:                 exp(-beta^2 x^2 / 2) * phi(beta x)
* half line (0, inf):         exp(-beta x / 2) * phi(beta x)
* periodic angle (period P):  phi(x) * sin(pi x / P) + gamma_j

beta > 0 is trainable per (network, dimension) and stored as log(beta);
gamma is trainable per (network, dimension, component).  Norms use the
dimension's own quadrature rule and the measure weight of the problem's
mass form, so they depend on the parameters and must be re-derived every
step (the assembly module differentiates through them).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import quadrature, subnet
from .errors import CheckpointError, DegenerateComponentError
from .forms import W_ONE, Weight1D

BOUNDED_KINDS = ("bounded_dirichlet", "bounded_natural", "periodic_angle")
UNBOUNDED_KINDS = ("whole_line", "half_line")
NORM_FLOOR = 1e-30

_CKPT_MAGIC = b"TNNEIGCK"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class DimensionSpec:
    """Domain kind and quadrature parameters of one coordinate direction."""

    kind: str
    a: float = 0.0
    b: float = 0.0
    period: float = 0.0
    m_sub: int = 1
    n_quad: int = 16

    def __post_init__(self):
        if self.kind in ("bounded_dirichlet", "bounded_natural"):
            if not self.a < self.b:
                raise ValueError(f"bounded spec needs a < b, got [{self.a}, {self.b}]")
        elif self.kind == "periodic_angle":
            if not self.period > 0:
                raise ValueError("periodic spec needs period > 0")
        elif self.kind not in UNBOUNDED_KINDS:
            raise ValueError(f"unknown dimension kind {self.kind!r}")
        if self.m_sub < 1 or self.n_quad < 1:
            raise ValueError("quadrature parameters must be >= 1")

    @property
    def is_unbounded(self) -> bool:
        return self.kind in UNBOUNDED_KINDS

    def rule(self) -> quadrature.QuadratureRule:
        if self.kind == "whole_line":
            return quadrature.gauss_hermite(self.n_quad)
        if self.kind == "half_line":
            return quadrature.gauss_laguerre(self.n_quad)
        if self.kind == "periodic_angle":
            return quadrature.composite_legendre(0.0, self.period, self.m_sub, self.n_quad)
        return quadrature.composite_legendre(self.a, self.b, self.m_sub, self.n_quad)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b,
                "period": self.period, "m_sub": self.m_sub, "n_quad": self.n_quad}

    @staticmethod
    def from_dict(d: dict) -> "DimensionSpec":
        return DimensionSpec(**d)


def bounded_dirichlet(a, b, m_sub=8, n_quad=16):
    return DimensionSpec("bounded_dirichlet", a=a, b=b, m_sub=m_sub, n_quad=n_quad)


def bounded_natural(a, b, m_sub=8, n_quad=16):
    return DimensionSpec("bounded_natural", a=a, b=b, m_sub=m_sub, n_quad=n_quad)


def periodic_angle(period=2.0 * np.pi, m_sub=8, n_quad=16):
    return DimensionSpec("periodic_angle", period=period, m_sub=m_sub, n_quad=n_quad)


def whole_line(n_quad=40):
    return DimensionSpec("whole_line", n_quad=n_quad)


def half_line(n_quad=40):
    return DimensionSpec("half_line", n_quad=n_quad)


@dataclass
class TnnModel:
    """k tensor networks sharing dimension specs and architecture."""

    specs: list[DimensionSpec]
    k: int
    p: int
    depth: int
    width: int
    activation: str
    subnets: list[subnet.SubnetStack]        # one stack of k nets per dimension
    coeffs: np.ndarray                       # (k, p)
    log_beta: dict[int, np.ndarray] = field(default_factory=dict)   # dim -> (k,)
    gamma: dict[int, np.ndarray] = field(default_factory=dict)      # dim -> (k, p)

    @property
    def d(self) -> int:
        return len(self.specs)

    def beta(self, dim: int) -> np.ndarray:
        return np.exp(self.log_beta[dim])


def init_model(specs, k, p, depth, width, activation="sin", seed=0,
               beta_init=1.0) -> TnnModel:
    """Seeded initialization; rng is consumed in a fixed documented order
    (coefficients, then per dimension: subnet stack, then gamma)."""
    specs = list(specs)
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-1.0, 1.0, size=(k, p))
    subnets, log_beta, gamma = [], {}, {}
    for i, spec in enumerate(specs):
        subnets.append(subnet.init_stack(k, depth, width, p, activation, rng))
        if spec.is_unbounded:
            log_beta[i] = np.full(k, np.log(beta_init))
        elif spec.kind == "periodic_angle":
            gamma[i] = rng.uniform(-1.0, 1.0, size=(k, p))
    return TnnModel(specs, k, p, depth, width, activation,
                    subnets, coeffs, log_beta, gamma)


def _envelope_deriv_shift(kind, t):
    """c0 with  d/dx[env * phi(beta x)] = beta * env * (phi' - c0 * phi)."""
    if kind == "whole_line":
        return t
    return 0.5


def component_norms(model: TnnModel, dim: int,
                    measure_weight: Weight1D = W_ONE) -> np.ndarray:
    """Quadrature L2 norms of all raw components on one dimension, (k, p)."""
    spec = model.specs[dim]
    rule = spec.rule()
    stack = model.subnets[dim]
    if spec.is_unbounded:
        beta = model.beta(dim)
        args = np.broadcast_to(rule.nodes, (model.k, rule.nodes.size))
        vals, _ = subnet.forward_stack(stack, args)
        x_phys = rule.nodes[None, :] / beta[:, None]
        mw = measure_weight.values(x_phys)
        nsq = np.einsum("q,kq,kjq->kj", rule.weights, mw / beta[:, None], vals ** 2)
    else:
        x = rule.nodes
        args = np.broadcast_to(x, (model.k, x.size))
        vals, _ = subnet.forward_stack(stack, args)
        full = _apply_bounded_envelope(model, dim, x, vals, None)[0]
        nsq = np.einsum("q,kjq->kj", rule.weights * measure_weight.values(x), full ** 2)
    if np.any(nsq <= NORM_FLOOR ** 2):
        ell, j = np.argwhere(nsq <= NORM_FLOOR ** 2)[0]
        raise DegenerateComponentError(int(ell), dim, int(j))
    return np.sqrt(nsq)


def _apply_bounded_envelope(model, dim, x, vals, derivs):
    """Fold the boundary factor / periodic lift into raw subnet outputs."""
    spec = model.specs[dim]
    if spec.kind == "bounded_natural":
        return vals, derivs
    if spec.kind == "bounded_dirichlet":
        hh = 0.5 * (spec.b - spec.a)
        g = (x - spec.a) * (spec.b - x) / hh ** 2
        dg = (spec.a + spec.b - 2.0 * x) / hh ** 2
        full = vals * g
        dfull = None if derivs is None else derivs * g + vals * dg
        return full, dfull
    # periodic_angle
    sfac = np.sin(np.pi * x / spec.period)
    dsfac = (np.pi / spec.period) * np.cos(np.pi * x / spec.period)
    gam = model.gamma[dim]
    full = vals * sfac + gam[..., None]
    dfull = None if derivs is None else derivs * sfac + vals * dsfac
    return full, dfull


def component_values_at(model: TnnModel, ell: int, dim: int, x: np.ndarray,
                        measure_weight: Weight1D = W_ONE,
                        norms: np.ndarray | None = None):
    """Normalized component values and x-derivatives at physical points x.

    Returns (values, derivs), each (p, len(x)).  Norms always come from the
    dimension's own quadrature rule so that evaluation is consistent with
    training regardless of where the components are probed; pass a
    precomputed component_norms array to avoid recomputing them per call.
    """
    spec = model.specs[dim]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    params = model.subnets[dim].select(ell)
    if norms is None:
        norms = component_norms(model, dim, measure_weight)
    norms = norms[ell][:, None]
    if spec.is_unbounded:
        beta = float(model.beta(dim)[ell])
        t = beta * x
        ev = subnet.forward_batch(params, t)
        env = np.exp(-0.5 * t * t) if spec.kind == "whole_line" else np.exp(-0.5 * t)
        c0 = _envelope_deriv_shift(spec.kind, t)
        full = env * ev.values
        dfull = beta * env * (ev.input_derivs - c0 * ev.values)
    else:
        ev = subnet.forward_batch(params, x)
        sub = _SingleView(model, ell)
        full, dfull = _apply_bounded_envelope(sub, dim, x, ev.values, ev.input_derivs)
    return full / norms, dfull / norms


class _SingleView:
    """Adapter exposing one network's gamma rows to the envelope helper."""

    def __init__(self, model, ell):
        self.specs = model.specs
        self.gamma = {i: g[ell] for i, g in model.gamma.items()}


def component_values(model: TnnModel, ell: int, dim: int,
                     rule: quadrature.QuadratureRule | None = None,
                     measure_weight: Weight1D = W_ONE):
    """Normalized component values/derivatives at a rule's physical nodes."""
    spec = model.specs[dim]
    rule = rule or spec.rule()
    if spec.is_unbounded:
        beta = float(model.beta(dim)[ell])
        x = rule.nodes / beta
    else:
        x = rule.nodes
    return component_values_at(model, ell, dim, x, measure_weight)


def evaluate_point(model: TnnModel, ell: int, x,
                   measure_weights: list[Weight1D] | None = None) -> float:
    """Psi_ell at one point; for inspection and plotting, not training."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.d,):
        raise ValueError(f"expected a point in R^{model.d}, got shape {x.shape}")
    weights = measure_weights or [W_ONE] * model.d
    prod = np.ones(model.p)
    for i in range(model.d):
        vals, _ = component_values_at(model, ell, i, x[i : i + 1], weights[i])
        prod *= vals[:, 0]
    return float(np.dot(model.coeffs[ell], prod))


def _param_arrays(model: TnnModel):
    """All trainable arrays in the canonical flattening order."""
    arrays = [model.coeffs]
    for i in range(model.d):
        stack = model.subnets[i]
        for w, b in zip(stack.weights, stack.biases):
            arrays.append(w)
            arrays.append(b)
        if i in model.log_beta:
            arrays.append(model.log_beta[i])
        if i in model.gamma:
            arrays.append(model.gamma[i])
    return arrays


def num_params(model: TnnModel) -> int:
    return sum(a.size for a in _param_arrays(model))


def flatten_params(model: TnnModel) -> np.ndarray:
    return np.concatenate([a.ravel() for a in _param_arrays(model)])


def unflatten_params(template: TnnModel, vec: np.ndarray) -> TnnModel:
    """Inverse of flatten_params; bit-exact round trip."""
    vec = np.asarray(vec, dtype=float)
    expected = num_params(template)
    if vec.shape != (expected,):
        raise ValueError(f"flat vector has length {vec.size}, expected {expected}")
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = vec[pos : pos + size].reshape(shape).copy()
        pos += size
        return out

    coeffs = take(template.coeffs.shape)
    subnets, log_beta, gamma = [], {}, {}
    for i in range(template.d):
        stack = template.subnets[i]
        ws, bs = [], []
        for w, b in zip(stack.weights, stack.biases):
            ws.append(take(w.shape))
            bs.append(take(b.shape))
        subnets.append(subnet.SubnetStack(ws, bs, stack.activation))
        if i in template.log_beta:
            log_beta[i] = take(template.log_beta[i].shape)
        if i in template.gamma:
            gamma[i] = take(template.gamma[i].shape)
    return TnnModel(list(template.specs), template.k, template.p, template.depth,
                    template.width, template.activation, subnets, coeffs,
                    log_beta, gamma)


def save_checkpoint(model: TnnModel, path, *, seed: int, meta: dict | None = None):
    """Self-describing binary checkpoint: JSON header + little-endian f8 data."""
    vec = flatten_params(model)
    header = {
        "format": "tnneig-checkpoint",
        "version": _CKPT_VERSION,
        "k": model.k, "p": model.p, "depth": model.depth, "width": model.width,
        "activation": model.activation,
        "specs": [s.to_dict() for s in model.specs],
        "seed": int(seed),
        "param_count": int(vec.size),
        "dtype": "<f8",
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(vec.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[TnnModel, dict]:
    """Load a checkpoint; rejects version/shape mismatches with clear errors."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header ({exc})")
        if header.get("version") != _CKPT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {header.get('version')!r}"
            )
        data = fh.read()
    vec = np.frombuffer(data, dtype="<f8").astype(float)
    specs = [DimensionSpec.from_dict(s) for s in header["specs"]]
    skeleton = init_model(specs, header["k"], header["p"], header["depth"],
                          header["width"], header["activation"], seed=0)
    if vec.size != header["param_count"] or vec.size != num_params(skeleton):
        raise CheckpointError(
            f"{path}: parameter count {vec.size} does not match "
            f"declared {header['param_count']} / expected {num_params(skeleton)}"
        )
    return unflatten_params(skeleton, vec), header
