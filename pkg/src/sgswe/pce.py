"""Orthonormal polynomial chaos bases for product Beta measures.

A basis is built from the three-term recurrence of the Jacobi family,
normalized against the probability measure
``rho(xi) ~ (1 - xi)**alpha * (1 + xi)**beta`` on ``[-1, 1]``, and tensorized
over independent dimensions.  Everything the solver needs from the stochastic
space (Galerkin product matrices, quadrature, node values) lives on
:class:`PceBasis`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class MeasureSpec:
    """Product Beta measure on ``[-1, 1]**d`` with per-dimension truncation orders."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    orders: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "orders", tuple(int(k) for k in self.orders))
        d = len(self.orders)
        if d < 1:
            raise ValueError("measure needs at least one dimension")
        if len(self.alpha) != d or len(self.beta) != d:
            raise ValueError("alpha, beta and orders must have the same length")
        for i, (a, b, k) in enumerate(zip(self.alpha, self.beta, self.orders)):
            if not a > -1 or not b > -1:
                raise ValueError(f"dimension {i}: alpha and beta must exceed -1, got ({a}, {b})")
            if k < 1:
                raise ValueError(f"dimension {i}: order must be >= 1, got {k}")

    @classmethod
    def uniform(cls, K: int, dims: int = 1) -> "MeasureSpec":
        return cls((0.0,) * dims, (0.0,) * dims, (K,) * dims)

    @property
    def dims(self) -> int:
        return len(self.orders)

    @property
    def size(self) -> int:
        return int(np.prod(self.orders))


def jacobi_recurrence(alpha: float, beta: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Recurrence coefficients ``(a_k, b_k)``, k < n, of the monic Jacobi polynomials.

    ``b_0`` is the total mass of the normalized measure (1).
    """
    a = np.empty(n)
    b = np.empty(n)
    ab = alpha + beta
    for k in range(n):
        s = 2 * k + ab
        if k == 0:
            a[k] = (beta - alpha) / (ab + 2)
            b[k] = 1.0
        else:
            a[k] = (beta**2 - alpha**2) / (s * (s + 2))
            if k == 1:
                # closed form avoids the 0/0 at alpha + beta = -1
                b[k] = 4 * (1 + alpha) * (1 + beta) / ((2 + ab) ** 2 * (3 + ab))
            else:
                b[k] = 4 * k * (k + alpha) * (k + beta) * (k + ab) / (s**2 * (s + 1) * (s - 1))
    return a, b


def gauss_jacobi(alpha: float, beta: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Golub-Welsch Gauss rule for the normalized Beta measure; weights sum to one."""
    a, b = jacobi_recurrence(alpha, beta, n)
    J = np.diag(a) + np.diag(np.sqrt(b[1:]), 1) + np.diag(np.sqrt(b[1:]), -1)
    nodes, vecs = np.linalg.eigh(J)
    weights = vecs[0] ** 2
    return nodes, weights / weights.sum()


def orthonormal_jacobi(alpha: float, beta: float, degree: int, x) -> np.ndarray:
    """Values of the orthonormal polynomials of degree 0..degree at ``x``.

    Returns an array of shape ``x.shape + (degree + 1,)``.
    """
    x = np.asarray(x, dtype=float)
    a, b = jacobi_recurrence(alpha, beta, degree + 1)
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = (x - a[0]) / np.sqrt(b[1])
    for k in range(1, degree):
        out[..., k + 1] = ((x - a[k]) * out[..., k] - np.sqrt(b[k]) * out[..., k - 1]) / np.sqrt(b[k + 1])
    return out


def quadrature_size(order: int) -> int:
    # exact for products of three degree-(order-1) polynomials, plus one node of margin
    return -(-(3 * (order - 1) + 1) // 2) + 1


@dataclass(frozen=True, eq=False)
class PceBasis:
    measure: MeasureSpec
    index_set: tuple[tuple[int, ...], ...]
    triple: np.ndarray = field(repr=False)
    quad_nodes: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    node_values: np.ndarray = field(repr=False)
    # lower-triangular correction applied to the raw recurrence polynomials
    _correction: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.index_set)

    @property
    def dims(self) -> int:
        return self.measure.dims

    def evaluate_basis(self, xi) -> np.ndarray:
        """``phi_k(xi)`` for points of shape ``(..., d)`` (or ``(...,)`` when d == 1)."""
        xi = np.asarray(xi, dtype=float)
        if self.dims == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
            xi = xi[..., None]
        raw = _raw_values(self.measure, self.index_set, xi)
        return raw @ self._correction.T


def _raw_values(measure: MeasureSpec, index_set, xi: np.ndarray) -> np.ndarray:
    per_dim = [
        orthonormal_jacobi(a, b, k - 1, xi[..., i])
        for i, (a, b, k) in enumerate(zip(measure.alpha, measure.beta, measure.orders))
    ]
    out = np.ones(xi.shape[:-1] + (len(index_set),))
    for col, idx in enumerate(index_set):
        for i, deg in enumerate(idx):
            out[..., col] *= per_dim[i][..., deg]
    return out


def _index_set(orders: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    # itertools.product varies the last factor fastest; reverse to make dim 1 fastest
    ranges = [range(k) for k in reversed(orders)]
    return tuple(tuple(reversed(t)) for t in itertools.product(*ranges))


def build_basis(measure: MeasureSpec) -> PceBasis:
    """Tensor-product orthonormal basis with its triple-product tensor and quadrature."""
    index_set = _index_set(measure.orders)
    rules = [
        gauss_jacobi(a, b, quadrature_size(k))
        for a, b, k in zip(measure.alpha, measure.beta, measure.orders)
    ]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    # node ordering also runs with dimension 1 fastest
    nodes = np.stack([g.transpose().ravel() for g in grids], axis=-1)
    weights = np.prod([w.transpose().ravel() for w in wgrids], axis=0)

    raw = _raw_values(measure, index_set, nodes)
    gram = raw.T @ (weights[:, None] * raw)
    L = np.linalg.cholesky(gram)
    correction = np.linalg.inv(L)
    phi = raw @ correction.T
    phi[:, 0] = 1.0

    triple = np.einsum("n,nk,nl,nm->klm", weights, phi, phi, phi)
    triple = _symmetrize(triple)
    K = len(index_set)
    triple[:, 0, :] = np.eye(K)
    triple[0, :, :] = np.eye(K)
    triple[:, :, 0] = np.eye(K)
    for arr in (triple, nodes, weights, phi, correction):
        arr.setflags(write=False)
    return PceBasis(measure, index_set, triple, nodes, weights, phi, correction)


def _symmetrize(t: np.ndarray) -> np.ndarray:
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    return sum(np.transpose(t, p) for p in perms) / 6.0


def galerkin_matrix(basis: PceBasis, z) -> np.ndarray:
    """The Galerkin product matrix ``sum_k z_k M_k``; batched over leading axes of ``z``."""
    z = np.asarray(z, dtype=float)
    K = basis.size
    if z.shape[-1] != K:
        raise ValueError(f"coefficient length {z.shape[-1]} != basis size {K}")
    # one GEMM against the flattened tensor beats a three-operand einsum by far
    return (z @ basis.triple.reshape(K, K * K)).reshape(z.shape[:-1] + (K, K))


def galerkin_product(basis: PceBasis, a, b) -> np.ndarray:
    """Coefficients of the projected product, ``P(a) b``, batched."""
    return np.einsum("...lm,...m->...l", galerkin_matrix(basis, a), np.asarray(b, dtype=float))


def project(basis: PceBasis, f: Callable[..., np.ndarray]) -> np.ndarray:
    """Galerkin coefficients of ``f`` by quadrature; ``f`` takes one array per dimension."""
    values = np.broadcast_to(
        np.asarray(f(*basis.quad_nodes.T), dtype=float), basis.quad_weights.shape
    )
    return project_values(basis, values)


def project_values(basis: PceBasis, values) -> np.ndarray:
    """Coefficients from samples at the quadrature nodes (last axis = node index)."""
    values = np.asarray(values, dtype=float)
    return values @ (basis.quad_weights[:, None] * basis.node_values)


def evaluate(basis: PceBasis, z, xi) -> np.ndarray:
    """``sum_k z_k phi_k(xi)``."""
    return np.asarray(z, dtype=float) @ basis.evaluate_basis(xi).T


def at_nodes(basis: PceBasis, z) -> np.ndarray:
    """Field values at every quadrature node, shape ``z.shape[:-1] + (N,)``."""
    return np.asarray(z, dtype=float) @ basis.node_values.T


def mean_std(z) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=float)
    return z[..., 0], np.sqrt(np.sum(z[..., 1:] ** 2, axis=-1))
