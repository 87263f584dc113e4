"""The stochastic Galerkin shallow water system in coefficient form.

States are arrays of shape ``(..., 3, K)``: blocks ``h``, ``qx``, ``qy`` of
Galerkin coefficients.  All functions broadcast over the leading axes so a
whole grid is evaluated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DEFAULT_SCALING, HyperbolicityError, RealEig, canonical_eig
from .pce import PceBasis, at_nodes, galerkin_matrix, galerkin_product

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class Velocities:
    u: np.ndarray
    v: np.ndarray
    qx: np.ndarray
    qy: np.ndarray
    desingularized: np.ndarray  # bool per state

    @property
    def any_desingularized(self) -> bool:
        return bool(np.any(self.desingularized))


@dataclass(frozen=True)
class EntropyQuantities:
    E: np.ndarray
    V: np.ndarray  # (..., 3, K)
    Psi: np.ndarray
    Phi: np.ndarray
    Hflux: np.ndarray
    Kflux: np.ndarray


def split(U):
    U = np.asarray(U, dtype=float)
    return U[..., 0, :], U[..., 1, :], U[..., 2, :]


def is_hyperbolic(basis: PceBasis, h) -> np.ndarray:
    """Positivity of the height at every quadrature node (sufficient for P(h) > 0)."""
    return np.all(at_nodes(basis, h) > 0, axis=-1)


def desingularized_inverse(basis: PceBasis, h, epsilon: float = DEFAULT_EPSILON):
    """``Q diag(1/pi~) Q^T`` for ``P(h) = Q diag(pi) Q^T`` and a mask of regularized states."""
    Ph = galerkin_matrix(basis, h)
    # a factorable P(h) - 2 eps I rules out regularization everywhere
    try:
        np.linalg.cholesky(Ph - 2.0 * epsilon * np.eye(basis.size))
    except np.linalg.LinAlgError:
        pass
    else:
        return np.linalg.inv(Ph), np.zeros(Ph.shape[:-2], dtype=bool)
    pi, Q = np.linalg.eigh(Ph)
    if np.any(pi <= 0):
        bad = np.argwhere(np.any(pi <= 0, axis=-1))
        raise HyperbolicityError(
            f"P(h) has non-positive eigenvalue {pi.min():.3e}",
            index=tuple(bad[0]) if bad.size else None,
        )
    p4 = pi**4
    pit = np.sqrt(p4 + np.maximum(p4, epsilon**4)) / (np.sqrt(2.0) * pi)
    mask = np.any(pi < epsilon, axis=-1)
    # exact collapse to pi when no eigenvalue is below epsilon
    pit = np.where(pi >= epsilon, pi, pit)
    inv = np.einsum("...ik,...k,...jk->...ij", Q, 1.0 / pit, Q)
    return inv, mask


def velocities(basis: PceBasis, U, epsilon: float = DEFAULT_EPSILON) -> Velocities:
    h, qx, qy = split(U)
    inv, mask = desingularized_inverse(basis, h, epsilon)
    u = np.einsum("...ij,...j->...i", inv, qx)
    v = np.einsum("...ij,...j->...i", inv, qy)
    if np.any(mask):
        cqx = np.where(mask[..., None], galerkin_product(basis, h, u), qx)
        cqy = np.where(mask[..., None], galerkin_product(basis, h, v), qy)
    else:
        cqx, cqy = qx, qy
    return Velocities(u, v, cqx, cqy, mask)


def pack(h, qx, qy) -> np.ndarray:
    return np.stack(np.broadcast_arrays(h, qx, qy), axis=-2)


def flux_from_primitives(basis: PceBasis, h, u, v, g: float, direction: str = "x") -> np.ndarray:
    """Exact SG flux written with velocity coefficients (valid for K >= 1)."""
    qx = galerkin_product(basis, h, u)
    qy = galerkin_product(basis, h, v)
    pressure = 0.5 * g * galerkin_product(basis, h, h)
    if direction == "x":
        return pack(qx, galerkin_product(basis, u, qx) + pressure, galerkin_product(basis, v, qx))
    if direction == "y":
        return pack(qy, galerkin_product(basis, u, qy), galerkin_product(basis, v, qy) + pressure)
    raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")


def exact_flux_x(basis: PceBasis, U, g: float, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    vel = velocities(basis, U, epsilon)
    return flux_from_primitives(basis, split(U)[0], vel.u, vel.v, g, "x")


def exact_flux_y(basis: PceBasis, U, g: float, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    vel = velocities(basis, U, epsilon)
    return flux_from_primitives(basis, split(U)[0], vel.u, vel.v, g, "y")


def source(basis: PceBasis, U, Bx, By, g: float) -> np.ndarray:
    """Continuous source ``(0, -g P(h) Bx, -g P(h) By)``."""
    h = split(U)[0]
    zero = np.zeros_like(h)
    return pack(zero, -g * galerkin_product(basis, h, Bx), -g * galerkin_product(basis, h, By))


def flux_jacobian(basis: PceBasis, h, u, v, g: float, direction: str = "x",
                  epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Block flux Jacobian at the state with height ``h`` and velocities ``u``, ``v``.

    ``P(h)^-1`` is applied through the desingularized eigendecomposition.
    """
    h = np.asarray(h, dtype=float)
    K = basis.size
    Ph = galerkin_matrix(basis, h)
    Pu = galerkin_matrix(basis, u)
    Pv = galerkin_matrix(basis, v)
    inv, _ = desingularized_inverse(basis, h, epsilon)
    eye = np.broadcast_to(np.eye(K), Ph.shape)
    zero = np.zeros_like(Ph)
    if direction == "x":
        C = galerkin_matrix(basis, galerkin_product(basis, h, u)) @ inv
        rows = [
            [zero, eye, zero],
            [g * Ph - C @ Pu, C + Pu, zero],
            [-C @ Pv, Pv, C],
        ]
    elif direction == "y":
        C = galerkin_matrix(basis, galerkin_product(basis, h, v)) @ inv
        rows = [
            [zero, zero, eye],
            [-C @ Pu, C, Pu],
            [g * Ph - C @ Pv, zero, C + Pv],
        ]
    else:
        raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")
    return np.concatenate([np.concatenate(r, axis=-1) for r in rows], axis=-2)


def flux_jacobian_x(basis: PceBasis, U, g: float, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    vel = velocities(basis, U, epsilon)
    return flux_jacobian(basis, split(U)[0], vel.u, vel.v, g, "x", epsilon)


def flux_jacobian_y(basis: PceBasis, U, g: float, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    vel = velocities(basis, U, epsilon)
    return flux_jacobian(basis, split(U)[0], vel.u, vel.v, g, "y", epsilon)


def flux_eigensystem(basis: PceBasis, h, u, v, g: float, direction: str = "x",
                     scaling: str = DEFAULT_SCALING) -> RealEig:
    """Eigenpairs of the flux Jacobian at ``(h, P(h) u, P(h) v)`` through symmetric blocks.

    With ``L_h L_h^T = P(h)`` the symmetrizer ``dU/dV`` factors as a block
    lower-triangular ``L`` and ``L^-1 A L`` splits into the symmetric blocks
    ``[[P(u_n), sqrt(g) L_h], [sqrt(g) L_h^T, S]]`` and ``S``, where
    ``S = L_h^-1 P(P(h) u_n) L_h^-T``.  Columns of ``L W`` then satisfy
    ``T T^T = dU/dV`` (entropy scaling) before any renormalization.
    """
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if direction not in ("x", "y"):
        raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")
    K = basis.size
    un = u if direction == "x" else v
    Ph = galerkin_matrix(basis, h)
    try:
        Lh = np.linalg.cholesky(Ph)
    except np.linalg.LinAlgError as exc:
        raise HyperbolicityError(f"P(h) is not positive definite: {exc}") from None
    Li = np.linalg.inv(Lh)
    LiT = np.swapaxes(Li, -1, -2)
    S = Li @ galerkin_matrix(basis, galerkin_product(basis, h, un)) @ LiT
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    sg = np.sqrt(g)
    S2 = np.concatenate([
        np.concatenate([galerkin_matrix(basis, un), sg * Lh], axis=-1),
        np.concatenate([sg * np.swapaxes(Lh, -1, -2), S], axis=-1),
    ], axis=-2)
    lam2, W2 = np.linalg.eigh(S2)
    lam3, W3 = np.linalg.eigh(S)
    a = W2[..., :K, :] / sg
    acoustic = [a, galerkin_matrix(basis, u) @ a, galerkin_matrix(basis, v) @ a]
    normal = 1 if direction == "x" else 2
    acoustic[normal] = acoustic[normal] + Lh @ W2[..., K:, :]
    shear = [np.zeros_like(W3), np.zeros_like(W3), np.zeros_like(W3)]
    shear[3 - normal] = Lh @ W3
    T = np.concatenate([np.concatenate(acoustic, axis=-2), np.concatenate(shear, axis=-2)], axis=-1)
    return canonical_eig(T, np.concatenate([lam2, lam3], axis=-1), scaling)


def entropy_variable(basis: PceBasis, h, u, v, B, g: float) -> np.ndarray:
    first = (
        -0.5 * galerkin_product(basis, u, u)
        - 0.5 * galerkin_product(basis, v, v)
        + g * (np.asarray(h) + np.asarray(B))
    )
    return pack(first, u, v)


def entropy_symmetrizer(basis: PceBasis, h, u, v, g: float) -> np.ndarray:
    """``dU/dV`` as a flat symmetric ``(..., 3K, 3K)`` matrix, positive definite when ``P(h)`` is."""
    Ph = galerkin_matrix(basis, h)
    Pu = galerkin_matrix(basis, u)
    Pv = galerkin_matrix(basis, v)
    eye = np.broadcast_to(np.eye(basis.size), Ph.shape)
    rows = [
        [eye, Pu, Pv],
        [Pu, g * Ph + Pu @ Pu, Pu @ Pv],
        [Pv, Pv @ Pu, g * Ph + Pv @ Pv],
    ]
    return np.concatenate([np.concatenate(r, axis=-1) for r in rows], axis=-2) / g


def entropy_from_velocities(basis: PceBasis, h, u, v, B, g: float) -> EntropyQuantities:
    """Energy, entropy variable, potentials and entropy fluxes from ``(h, u, v)``."""
    h = np.asarray(h, dtype=float)
    B = np.asarray(B, dtype=float)
    qx = galerkin_product(basis, h, u)
    qy = galerkin_product(basis, h, v)
    hh = galerkin_product(basis, h, h)
    E = 0.5 * (_dot(qx, u) + _dot(qy, v)) + 0.5 * g * _dot(h, h) + g * _dot(h, B)
    V = entropy_variable(basis, h, u, v, B, g)
    Psi = 0.5 * g * _dot(u, hh)
    Phi = 0.5 * g * _dot(v, hh)
    kin_x = _dot(u, galerkin_product(basis, qx, u)) + _dot(v, galerkin_product(basis, qx, v))
    kin_y = _dot(v, galerkin_product(basis, qy, v)) + _dot(u, galerkin_product(basis, qy, u))
    H = 0.5 * kin_x + g * _dot(qx, h + B)
    Kf = 0.5 * kin_y + g * _dot(qy, h + B)
    return EntropyQuantities(E, V, Psi, Phi, H, Kf)


def entropy_quantities(basis: PceBasis, U, B, g: float,
                       epsilon: float = DEFAULT_EPSILON) -> EntropyQuantities:
    vel = velocities(basis, U, epsilon)
    return entropy_from_velocities(basis, split(U)[0], vel.u, vel.v, B, g)


def _dot(a, b) -> np.ndarray:
    return np.einsum("...k,...k->...", a, b)
