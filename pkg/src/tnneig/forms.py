"""Separable bilinear forms.

A form a(u, v) = sum_t coeff_t * prod_i integral( w_i(x) D^dl u_i D^dr v_i dx )
is a list of terms, each term a product over dimensions of 1D kernels
(weight function together with left/right derivative orders).  The mass
form b(u, v) is a single derivative-free term whose per-dimension weights
also serve as the measure used to normalize tensor-network components
(e.g. r^2 sin(theta) for spherical coordinates).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Weight1D:
    """A 1D weight function with its derivative (None means constant 1)."""

    name: str
    fn: Callable | None = None
    dfn: Callable | None = None

    def values(self, x: np.ndarray) -> np.ndarray:
        if self.fn is None:
            return np.ones_like(x)
        return self.fn(x)

    def derivs(self, x: np.ndarray) -> np.ndarray:
        if self.dfn is None:
            return np.zeros_like(x)
        return self.dfn(x)

    @property
    def is_one(self) -> bool:
        return self.fn is None


W_ONE = Weight1D("1")
W_X = Weight1D("x", lambda x: x, lambda x: np.ones_like(x))
W_X2 = Weight1D("x^2", lambda x: x * x, lambda x: 2.0 * x)
W_SIN = Weight1D("sin", np.sin, np.cos)
W_INV_SIN = Weight1D("1/sin", lambda x: 1.0 / np.sin(x),
                     lambda x: -np.cos(x) / np.sin(x) ** 2)

_WEIGHTS_BY_NAME = {w.name: w for w in (W_ONE, W_X, W_X2, W_SIN, W_INV_SIN)}


def weight_by_name(name: str) -> Weight1D:
    return _WEIGHTS_BY_NAME[name]


@dataclass(frozen=True)
class Kernel1D:
    weight: Weight1D
    deriv_left: int = 0
    deriv_right: int = 0

    def __post_init__(self):
        if self.deriv_left not in (0, 1) or self.deriv_right not in (0, 1):
            raise ValueError("derivative orders must be 0 or 1")

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.weight.name, self.deriv_left, self.deriv_right)

    def transposed(self) -> "Kernel1D":
        return Kernel1D(self.weight, self.deriv_right, self.deriv_left)


@dataclass(frozen=True)
class SeparableBilinearForm:
    """Sum of separable terms: (coefficient, one Kernel1D per dimension)."""

    terms: tuple[tuple[float, tuple[Kernel1D, ...]], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("a form needs at least one term")
        d = len(self.terms[0][1])
        keys = {(c, tuple(k.key for k in ks)) for c, ks in self.terms}
        for coeff, kernels in self.terms:
            if len(kernels) != d:
                raise ValueError("all terms must span the same dimension count")
            mirror = (coeff, tuple(k.transposed().key for k in kernels))
            if mirror not in keys:
                raise ValueError("form is not symmetric: missing transposed term")

    @property
    def d(self) -> int:
        return len(self.terms[0][1])

    def kernel_keys(self, dim: int):
        return {kernels[dim].key for _, kernels in self.terms}


@dataclass(frozen=True)
class ProblemForms:
    """An (a, b) pair defining one eigenvalue problem a(u,v) = lambda b(u,v)."""

    a: SeparableBilinearForm
    b: SeparableBilinearForm
    d: int = field(init=False)

    def __post_init__(self):
        if self.a.d != self.b.d:
            raise ValueError("a and b forms disagree on dimension")
        if len(self.b.terms) != 1:
            raise ValueError("the b form must be a single separable term")
        coeff, kernels = self.b.terms[0]
        if coeff <= 0:
            raise ValueError("the b form coefficient must be positive")
        if any(k.deriv_left != 0 or k.deriv_right != 0 for k in kernels):
            raise ValueError("the b form must be derivative-free")
        object.__setattr__(self, "d", self.a.d)

    def measure_weight(self, dim: int) -> Weight1D:
        """Per-dimension measure weight (used for component normalization)."""
        return self.b.terms[0][1][dim].weight


def _unit_kernels(d: int) -> list[Kernel1D]:
    return [Kernel1D(W_ONE) for _ in range(d)]


def mass_form(d: int, weights: list[Weight1D] | None = None) -> SeparableBilinearForm:
    kernels = [Kernel1D(w) for w in (weights or [W_ONE] * d)]
    return SeparableBilinearForm(((1.0, tuple(kernels)),))


def gradient_form(d: int) -> SeparableBilinearForm:
    """sum_s integral of du/dx_s dv/dx_s (the H^1 seminorm inner product)."""
    terms = []
    for s in range(d):
        kernels = _unit_kernels(d)
        kernels[s] = Kernel1D(W_ONE, 1, 1)
        terms.append((1.0, tuple(kernels)))
    return SeparableBilinearForm(tuple(terms))


def laplace_plus_potential(d: int, kinetic_coeff: float,
                           potential_terms) -> ProblemForms:
    """Forms for  -kinetic_coeff * Laplacian + V  with separable V.

    potential_terms is a list of (coefficient, [Weight1D per dimension]);
    kinetic_coeff is 1 for the plain Laplacian convention and 1/2 for
    quantum Hamiltonians.
    """
    terms = []
    for s in range(d):
        kernels = _unit_kernels(d)
        kernels[s] = Kernel1D(W_ONE, 1, 1)
        terms.append((kinetic_coeff, tuple(kernels)))
    for coeff, weights in potential_terms:
        if len(weights) != d:
            raise ValueError("potential term does not span every dimension")
        terms.append((float(coeff), tuple(Kernel1D(w) for w in weights)))
    return ProblemForms(SeparableBilinearForm(tuple(terms)), mass_form(d))


def quadratic_potential_terms(a_matrix: np.ndarray, factor: float = 0.5):
    """Separable terms of factor * x^T A x for symmetric A (zeros dropped)."""
    a_matrix = np.asarray(a_matrix, dtype=float)
    d = a_matrix.shape[0]
    if a_matrix.shape != (d, d) or not np.allclose(a_matrix, a_matrix.T):
        raise ValueError("potential matrix must be square and symmetric")
    terms = []
    for i in range(d):
        for j in range(i, d):
            coeff = factor * a_matrix[i, j] * (1.0 if i == j else 2.0)
            if coeff == 0.0:
                continue
            weights = [W_ONE] * d
            if i == j:
                weights[i] = W_X2
            else:
                weights[i] = W_X
                weights[j] = W_X
            terms.append((coeff, weights))
    return terms


def harmonic_oscillator(a_matrix: np.ndarray) -> ProblemForms:
    """Forms of the Hamiltonian -(1/2) Laplacian + (1/2) x^T A x."""
    a_matrix = np.asarray(a_matrix, dtype=float)
    return laplace_plus_potential(a_matrix.shape[0], 0.5,
                                  quadratic_potential_terms(a_matrix))


def hydrogen_spherical() -> ProblemForms:
    """Hydrogen Hamiltonian in spherical coordinates (r, theta, phi).

    The Jacobian r^2 sin(theta) is folded into every term, so the three
    kinetic pieces carry weights (r^2)(sin)(1), (1)(sin)(1) and
    (1)(1/sin)(1), the Coulomb attraction is -(r)(sin)(1), and the mass
    form is (r^2)(sin)(1).
    """
    one = Kernel1D(W_ONE)
    terms = (
        (0.5, (Kernel1D(W_X2, 1, 1), Kernel1D(W_SIN), one)),
        (0.5, (one, Kernel1D(W_SIN, 1, 1), one)),
        (0.5, (one, Kernel1D(W_INV_SIN), Kernel1D(W_ONE, 1, 1))),
        (-1.0, (Kernel1D(W_X), Kernel1D(W_SIN), one)),
    )
    b = mass_form(3, [W_X2, W_SIN, W_ONE])
    return ProblemForms(SeparableBilinearForm(terms), b)
