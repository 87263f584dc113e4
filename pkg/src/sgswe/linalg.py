"""Small dense eigen/solve kernels, batched over leading axes.

LAPACK (through numpy) does the numerical work; this module adds the
ordering, scaling and failure conventions the scheme relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IMAG_TOL = 1e-8
COND_LIMIT = 1e14


class HyperbolicityError(ArithmeticError):
    """Raised when a state leaves the hyperbolic region (complex spectrum, h <= 0)."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


class IllConditionedError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SymEig:
    Q: np.ndarray
    pi: np.ndarray


@dataclass(frozen=True)
class RealEig:
    T: np.ndarray
    lam: np.ndarray


def sym_eig(A) -> SymEig:
    """Eigendecomposition of symmetric matrices, eigenvalues descending."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise IllConditionedError("symmetric eigensolver input is not finite")
    try:
        pi, Q = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"symmetric eigensolver did not converge: {exc}") from exc
    return SymEig(Q[..., ::-1], pi[..., ::-1])


def real_eig(A) -> RealEig:
    """Eigenpairs of matrices with a real spectrum, eigenvalues ascending.

    Columns of ``T`` have unit Euclidean norm and their largest-magnitude entry
    positive, so neighbouring interfaces get consistently signed bases.
    Rounding-level conjugate pairs are split into their real and imaginary
    parts, which span the same invariant subspace.
    """
    A = np.asarray(A, dtype=float)
    lam, T = np.linalg.eig(A)
    radius = np.max(np.abs(lam), axis=-1, keepdims=True)
    bad = np.abs(lam.imag) > IMAG_TOL * np.maximum(radius, np.finfo(float).tiny)
    if np.any(bad):
        idx = np.argwhere(np.any(bad, axis=-1))
        raise HyperbolicityError(
            f"complex spectrum, max |Im lambda| = {np.abs(lam.imag).max():.3e}",
            index=tuple(idx[0]) if idx.size else None,
        )
    if np.iscomplexobj(T):
        T = _realify(lam, T)
    return canonical_eig(T, lam.real, "unit")


SCALINGS = ("unit", "entropy")
# for flux eigensystems: with T T^T = dU/dV the ES diffusion Q [[V]] acts on [[U]] like |A|
DEFAULT_SCALING = "entropy"


def canonical_eig(T, lam, scaling: str = "unit") -> RealEig:
    """Sort eigenpairs ascending and fix column scaling and sign.

    ``"unit"`` normalizes columns; ``"entropy"`` keeps the given lengths
    (eigenvectors already scaled so that ``T T^T`` is the symmetrizer).
    """
    if scaling not in SCALINGS:
        raise ValueError(f"unknown eigenvector scaling {scaling!r}; expected one of {SCALINGS}")
    lam = np.asarray(lam, dtype=float)
    T = np.asarray(T, dtype=float)
    n = lam.shape[-1]
    order = np.argsort(lam, axis=-1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=-1)
    # gather whole eigenvector rows of T^T: one contiguous copy per vector
    rows = np.swapaxes(T, -1, -2).reshape(-1, n)
    flat = (order + n * np.arange(order.size // n).reshape(order.shape[:-1] + (1,))).ravel()
    Tt = rows[flat].reshape(order.shape + (n,))
    if scaling == "unit":
        Tt = Tt / np.sqrt(np.sum(Tt * Tt, axis=-1, keepdims=True))
    big = np.argmax(np.abs(Tt), axis=-1)
    pivot = np.take_along_axis(Tt, big[..., None], axis=-1)
    Tt = np.where(pivot < 0, -Tt, Tt)
    T = np.swapaxes(Tt, -1, -2)
    return RealEig(T, lam)


def _realify(lam: np.ndarray, T: np.ndarray) -> np.ndarray:
    out = T.real.copy()
    # LAPACK returns conjugate pairs adjacently, positive imaginary part first
    pos = lam.imag > 0
    if np.any(pos):
        nxt = np.zeros_like(pos)
        nxt[..., 1:] = pos[..., :-1]
        out[..., :, :][np.broadcast_to(nxt[..., None, :], out.shape)] = (
            T.imag[np.broadcast_to(pos[..., None, :], T.shape)]
        )
    return out


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` after rejecting singular or ill-conditioned ``A``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    cond = np.linalg.cond(A)
    if not np.all(np.isfinite(cond)) or np.any(cond > COND_LIMIT):
        raise IllConditionedError(f"matrix condition number {np.max(cond):.3e} exceeds {COND_LIMIT:.0e}")
    return np.linalg.solve(A, b[..., None])[..., 0]


def abs_diffusion(T: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``T |diag(lam)| T^T``."""
    return (T * np.abs(lam)[..., None, :]) @ np.swapaxes(T, -1, -2)
