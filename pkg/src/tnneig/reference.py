"""Exact reference eigenpairs for the benchmark problems.

Quadratic-potential Hamiltonians -(1/2) Laplacian + (1/2) x^T A x decouple
under the rotation y = Q^T x that diagonalizes A with frequencies mu_i; the
state (n_1, ..., n_d) then has energy sum_i (1/2 + n_i) sqrt(mu_i) and a
rank-one separable wavefunction built from physicists' Hermite polynomials.
Hydrogen levels are E_n = -1/(2 n^2) with n^2 states each.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import densela


def hermite_physicists(n: int, x) -> np.ndarray:
    """H_n(x) by the three-term recurrence H_{n+1} = 2x H_n - 2n H_{n-1}."""
    if n < 0:
        raise ValueError("polynomial degree must be >= 0")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev
    h = 2.0 * x
    for j in range(1, n):
        h_prev, h = h, 2.0 * x * h - 2.0 * j * h_prev
    return h


def _hermite_factor(n: int, mu: float):
    """1D oscillator factor H_n(mu^(1/4) y) exp(-sqrt(mu) y^2 / 2), with y-derivative."""
    root = mu ** 0.25
    sq = math.sqrt(mu)

    def value(y):
        y = np.asarray(y, dtype=float)
        return hermite_physicists(n, root * y) * np.exp(-0.5 * sq * y * y)

    def deriv(y):
        y = np.asarray(y, dtype=float)
        u = root * y
        env = np.exp(-0.5 * sq * y * y)
        dh = 2.0 * n * hermite_physicists(n - 1, u) if n > 0 else np.zeros_like(u)
        return (root * dh - sq * y * hermite_physicists(n, u)) * env

    return value, deriv


@dataclass
class OscillatorState:
    index: tuple[int, ...]
    energy: float
    factors: list[tuple[Callable, Callable]]   # per rotated coordinate (f, f')


@dataclass
class OscillatorReference:
    matrix: np.ndarray
    rotation: np.ndarray          # columns are eigenvectors; y = rotation^T x
    frequencies: np.ndarray       # ascending eigenvalues mu of the matrix
    states: list[OscillatorState]

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.states])

    def degenerate_groups(self, tol: float = 1e-9) -> list[list[int]]:
        """Indices of states grouped by (exactly) equal energies."""
        groups, cur = [], [0]
        e = self.energies
        for i in range(1, len(e)):
            if e[i] - e[cur[-1]] <= tol * max(1.0, abs(e[i])):
                cur.append(i)
            else:
                groups.append(cur)
                cur = [i]
        groups.append(cur)
        return groups


def lowest_multi_indices(freq_roots: np.ndarray, count: int) -> list[tuple[int, ...]]:
    """The count lowest multi-indices by sum_i (1/2 + n_i) * freq_roots[i].

    Enumeration is exhaustive over total quanta shells and provably complete:
    shells are added until the next shell cannot beat the current cutoff.
    Ties are broken lexicographically.
    """
    d = len(freq_roots)
    wmin = float(np.min(freq_roots))
    found: list[tuple[float, tuple[int, ...]]] = []
    shell = 0
    while True:
        for idx in itertools.combinations_with_replacement(range(d), shell):
            n = [0] * d
            for i in idx:
                n[i] += 1
            energy = float(np.dot(np.asarray(n) + 0.5, freq_roots))
            found.append((energy, tuple(n)))
        found.sort()
        if len(found) >= count:
            cutoff = found[count - 1][0]
            # every state in shell s has energy >= E0 + s * wmin
            if 0.5 * float(np.sum(freq_roots)) + (shell + 1) * wmin > cutoff:
                break
        shell += 1
    return [n for _, n in found[:count]]


def oscillator_states(a_matrix: np.ndarray, count: int) -> OscillatorReference:
    """Exact lowest `count` states of -(1/2) Laplacian + (1/2) x^T A x."""
    a_matrix = np.asarray(a_matrix, dtype=float)
    d = a_matrix.shape[0]
    if np.allclose(a_matrix, np.diag(np.diagonal(a_matrix))):
        # decoupled case: keep the original coordinates (no rotation)
        mu = np.diagonal(a_matrix).astype(float)
        rot = np.eye(d)
    else:
        mu, rot = densela.sym_eig(a_matrix)
    if np.any(mu <= 0):
        raise ValueError("potential matrix must be positive definite")
    roots = np.sqrt(mu)
    states = []
    for n in lowest_multi_indices(roots, count):
        energy = float(np.dot(np.asarray(n) + 0.5, roots))
        factors = [_hermite_factor(n[i], mu[i]) for i in range(d)]
        states.append(OscillatorState(tuple(n), energy, factors))
    return OscillatorReference(a_matrix, rot, mu, states)


def hydrogen_levels(n_max: int) -> list[tuple[float, int]]:
    """[(E_n, multiplicity)] with E_n = -1/(2 n^2) and n^2 states per level."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return [(-0.5 / (n * n), n * n) for n in range(1, n_max + 1)]


_SUBSHELL = "spdfghik"


def hydrogen_states(count: int) -> list[tuple[float, str]]:
    """Flattened ascending (energy, label) list: 1s, 2s, 2p, 2p, 2p, ..."""
    out = []
    n = 1
    while len(out) < count:
        energy = -0.5 / (n * n)
        for l in range(n):
            label = f"{n}{_SUBSHELL[l]}"
            out.extend([(energy, label)] * (2 * l + 1))
        n += 1
    return out[:count]


def box_laplace_energies(lengths, count: int) -> list[tuple[float, tuple[int, ...]]]:
    """Lowest Dirichlet-Laplacian eigenvalues sum_i (n_i pi / L_i)^2, n_i >= 1."""
    lengths = np.asarray(lengths, dtype=float)
    d = lengths.size
    # reuse the oscillator enumerator on shifted indices: n_i >= 1
    bound = count + 2
    grid = itertools.product(range(1, bound + 1), repeat=d)
    pairs = sorted((float(np.sum((np.array(n) * np.pi / lengths) ** 2)), n)
                   for n in grid)
    return pairs[:count]
