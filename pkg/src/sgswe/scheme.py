"""Semi-discrete energy conservative / energy stable finite-volume operator.

Interface routines are written for stacks of interfaces: every argument
carries the same leading axes and the normal direction is chosen with
``direction``.  :func:`semidiscrete_rhs` applies them to whole grid strips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import system
from .linalg import DEFAULT_SCALING, HyperbolicityError, abs_diffusion
from .mesh import GHOST, StateField
from .pce import PceBasis, galerkin_product
from .system import DEFAULT_EPSILON, pack

SCHEMES = ("EC", "ES1", "ES2")
SOURCES = ("wb", "nwb")


def iface_avg_jump(aL, aR):
    aL = np.asarray(aL, dtype=float)
    aR = np.asarray(aR, dtype=float)
    if aL.shape != aR.shape:
        raise ValueError("left/right shapes differ")
    return 0.5 * (aL + aR), aR - aL


def _normal(direction: str, u, v):
    if direction == "x":
        return u
    if direction == "y":
        return v
    raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")


def ec_flux(basis: PceBasis, hL, uL, vL, hR, uR, vR, g: float, direction: str = "x") -> np.ndarray:
    """Energy conservative flux from the interface averages of ``h``, ``u``, ``v`` and ``P(h) h``."""
    hb, _ = iface_avg_jump(hL, hR)
    ub, _ = iface_avg_jump(uL, uR)
    vb, _ = iface_avg_jump(vL, vR)
    hh = 0.5 * (galerkin_product(basis, hL, hL) + galerkin_product(basis, hR, hR))
    mass = galerkin_product(basis, hb, _normal(direction, ub, vb))
    mom_x = galerkin_product(basis, ub, mass)
    mom_y = galerkin_product(basis, vb, mass)
    if direction == "x":
        mom_x = mom_x + 0.5 * g * hh
    else:
        mom_y = mom_y + 0.5 * g * hh
    return pack(mass, mom_x, mom_y)


def ec_flux_x(basis: PceBasis, left, right, g: float, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    return _ec_from_states(basis, left, right, g, "x", epsilon)


def ec_flux_y(basis: PceBasis, left, right, g: float, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    return _ec_from_states(basis, left, right, g, "y", epsilon)


def _ec_from_states(basis, left, right, g, direction, epsilon):
    vl = system.velocities(basis, left, epsilon)
    vr = system.velocities(basis, right, epsilon)
    hL = system.split(left)[0]
    hR = system.split(right)[0]
    return ec_flux(basis, hL, vl.u, vl.v, hR, vr.u, vr.v, g, direction)


def wb_source(basis: PceBasis, h_minus, dB_minus, h_plus, dB_plus, g: float, spacing: float) -> np.ndarray:
    """Well-balanced momentum source from one direction.

    ``h_minus``/``dB_minus`` are the average height and bottom jump at the
    lower interface of the cell, ``*_plus`` at the upper one.  Returns the
    K-vector added to the momentum component normal to those interfaces.
    """
    return -(g / (2.0 * spacing)) * (
        galerkin_product(basis, h_plus, dB_plus) + galerkin_product(basis, h_minus, dB_minus)
    )


def nwb_source(basis: PceBasis, h_cell, dB_minus, dB_plus, g: float, spacing: float) -> np.ndarray:
    """Central-difference bottom source using the cell height; not well balanced."""
    return -(g / (2.0 * spacing)) * galerkin_product(basis, h_cell, np.asarray(dB_plus) + np.asarray(dB_minus))


def roe_state(basis: PceBasis, hL, uL, vL, hR, uR, vR) -> np.ndarray:
    hb = 0.5 * (np.asarray(hL) + np.asarray(hR))
    ub = 0.5 * (np.asarray(uL) + np.asarray(uR))
    vb = 0.5 * (np.asarray(vL) + np.asarray(vR))
    return pack(hb, galerkin_product(basis, hb, ub), galerkin_product(basis, hb, vb))


def roe_eigensystem(basis: PceBasis, hL, uL, vL, hR, uR, vR, g: float, direction: str = "x",
                    scaling: str = DEFAULT_SCALING):
    """Eigenvectors ``T`` and eigenvalues of the flux Jacobian at the Roe-type averaged state.

    The averaged state ``(h_avg, P(h_avg) u_avg, P(h_avg) v_avg)`` has velocities
    exactly ``u_avg``, ``v_avg``, so no desingularization enters here.
    """
    hb = 0.5 * (np.asarray(hL) + np.asarray(hR))
    if not np.all(system.is_hyperbolic(basis, hb)):
        raise HyperbolicityError("averaged interface state is not hyperbolic")
    ub = 0.5 * (np.asarray(uL) + np.asarray(uR))
    vb = 0.5 * (np.asarray(vL) + np.asarray(vR))
    eig = system.flux_eigensystem(basis, hb, ub, vb, g, direction, scaling)
    return eig.T, eig.lam


def es_diffusion_matrix(basis: PceBasis, left, right, direction: str, g: float,
                        epsilon: float = DEFAULT_EPSILON, scaling: str = DEFAULT_SCALING) -> np.ndarray:
    """``T |Lambda| T^T`` at the Roe-type average of two conserved states."""
    vl = system.velocities(basis, left, epsilon)
    vr = system.velocities(basis, right, epsilon)
    T, lam = roe_eigensystem(basis, system.split(left)[0], vl.u, vl.v,
                             system.split(right)[0], vr.u, vr.v, g, direction, scaling)
    return abs_diffusion(T, lam)


def es1_flux(ec, Q, Vjump) -> np.ndarray:
    """``ec - Q [[V]] / 2`` with ``ec``/``Vjump`` either flat (3K) or blocked (3, K)."""
    ec = np.asarray(ec, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[-1]
    Vjump = np.asarray(Vjump, dtype=float)
    flat = Vjump if Vjump.shape[-1] == n else Vjump.reshape(Vjump.shape[:-2] + (n,))
    corr = 0.5 * np.einsum("...ij,...j->...i", Q, flat)
    return ec - corr.reshape(ec.shape)


def minmod_phi(theta):
    """Minmod limiter function: 0 below 0, identity on [0, 1], 1 above (NaN -> 0)."""
    theta = np.asarray(theta, dtype=float)
    out = np.clip(theta, 0.0, 1.0)
    return np.where(np.isnan(out), 0.0, out)


def _ratio(num, den):
    safe = np.where(den == 0, 1.0, den)
    return np.where(den == 0, 0.0, num / safe)


def es2_limiter_factors(dw_minus, dw, dw_plus) -> np.ndarray:
    """Diagonal of ``Pi`` for an interface from the scaled jumps at it and its two neighbours."""
    theta_e = _ratio(dw_minus, dw)
    theta_w = _ratio(dw_plus, dw)
    return 1.0 - 0.5 * minmod_phi(theta_e) - 0.5 * minmod_phi(theta_w)


def es2_jumps(dV_minus, dV, dV_plus, T_minus, T, T_plus):
    """Second-order entropy-variable jumps at the middle of three consecutive interfaces.

    Jumps are flat ``(..., 3K)`` vectors; the ``T`` arguments are the
    eigenvector matrices of the respective interfaces.  Returns
    ``(jump2, Pi_diag)`` with ``jump2 = T^-T diag(Pi) T^T dV``.  Where ``T`` is
    singular the first-order jump is returned (``Pi = 1``).
    """
    dw_minus = np.einsum("...ji,...j->...i", T_minus, dV_minus)
    dw = np.einsum("...ji,...j->...i", T, dV)
    dw_plus = np.einsum("...ji,...j->...i", T_plus, dV_plus)
    pi = es2_limiter_factors(dw_minus, dw, dw_plus)
    rhs = pi * dw
    TT = np.swapaxes(T, -1, -2)
    try:
        jump2 = np.linalg.solve(TT, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        jump2, pi = _es2_fallback(TT, rhs, dV, pi)
    return jump2, pi


def _es2_fallback(TT, rhs, dV, pi):
    n = TT.shape[-1]
    TT2 = TT.reshape(-1, n, n)
    rhs2 = rhs.reshape(-1, n)
    dV2 = np.asarray(dV).reshape(-1, n)
    out = np.empty_like(rhs2)
    pi2 = pi.reshape(-1, n).copy()
    for k in range(TT2.shape[0]):
        try:
            out[k] = np.linalg.solve(TT2[k], rhs2[k])
        except np.linalg.LinAlgError:
            out[k] = dV2[k]
            pi2[k] = 1.0
    return out.reshape(rhs.shape), pi2.reshape(pi.shape)


def numerical_energy_flux(basis: PceBasis, flux, V_avg, psi_avg, dB, h_avg, du, g: float,
                          Q=None, D=None) -> np.ndarray:
    """Interface energy flux ``V_avg.F - psi_avg - g/4 [[B]].P(h_avg)[[u_n]]`` minus ``V_avg.Q D / 2`` for ES.

    ``flux`` must be the EC flux when ``Q``/``D`` are given.
    """
    nflat = flux.shape[-2] * flux.shape[-1]
    Vf = np.asarray(V_avg).reshape(V_avg.shape[:-2] + (nflat,))
    H = (
        np.einsum("...i,...i->...", Vf, flux.reshape(flux.shape[:-2] + (nflat,)))
        - psi_avg
        - 0.25 * g * np.einsum("...k,...k->...", dB, galerkin_product(basis, h_avg, du))
    )
    if Q is not None:
        H = H - 0.5 * np.einsum("...i,...ij,...j->...", Vf, Q, D)
    return H


@dataclass(frozen=True)
class InterfaceFluxes:
    Fx: np.ndarray  # (Mx+1, My, 3, K)
    Gy: np.ndarray  # (Mx, My+1, 3, K)
    Hx: np.ndarray  # (Mx+1, My)
    Ky: np.ndarray  # (Mx, My+1)


@dataclass(frozen=True)
class RhsResult:
    dUdt: np.ndarray  # interior, (Mx, My, 3, K)
    fluxes: InterfaceFluxes
    V: np.ndarray  # interior entropy variables, (Mx, My, 3, K)
    E: np.ndarray  # interior cell energies, (Mx, My)
    desingularized: np.ndarray  # interior mask, (Mx, My)
    es_dissipation: float  # sum of the quadratic ES dissipation terms (>= 0)
    diffusion_speed: tuple[float, float] | None = None  # max rho(Q dV/dU) along x and y, if requested

    @property
    def energy_rate(self) -> float:
        """``sum_ij V_ij . dU_ij/dt``."""
        return float(np.sum(self.V * self.dUdt))


@dataclass(frozen=True)
class _Strip:
    flux: np.ndarray
    H: np.ndarray
    h_avg: np.ndarray
    dB: np.ndarray
    dissipation: np.ndarray
    Q: np.ndarray | None = None
    dUdV: np.ndarray | None = None


def _strip(basis, h, u, v, B, V, pot, g, scheme, direction, scaling, with_speed=False) -> _Strip:
    """Fluxes at every interface between consecutive cells along axis 0.

    Inputs cover ``n`` cells (ghosts included); the returned arrays cover the
    ``n - 1`` interfaces.
    """
    L = slice(None, -1)
    R = slice(1, None)
    hL, hR = h[L], h[R]
    uL, uR = u[L], u[R]
    vL, vR = v[L], v[R]
    h_avg, _ = iface_avg_jump(hL, hR)
    _, dB = iface_avg_jump(B[L], B[R])
    un = _normal(direction, u, v)
    _, dun = iface_avg_jump(un[L], un[R])
    V_avg, dV = iface_avg_jump(V[L], V[R])
    pot_avg, _ = iface_avg_jump(pot[L], pot[R])

    F = ec_flux(basis, hL, uL, vL, hR, uR, vR, g, direction)
    nflat = F.shape[-2] * F.shape[-1]
    dissipation = np.zeros(F.shape[:-2])
    if scheme == "EC":
        H = numerical_energy_flux(basis, F, V_avg, pot_avg, dB, h_avg, dun, g)
        return _Strip(F, H, h_avg, dB, dissipation)

    T, lam = roe_eigensystem(basis, hL, uL, vL, hR, uR, vR, g, direction, scaling)
    Q = abs_diffusion(T, lam)
    dVf = dV.reshape(dV.shape[:-2] + (nflat,))
    if scheme == "ES1":
        D = dVf
    else:
        D = np.zeros_like(dVf)
        inner, _ = es2_jumps(dVf[:-2], dVf[1:-1], dVf[2:], T[:-2], T[1:-1], T[2:])
        D[1:-1] = inner
        # the outermost interfaces lack a full stencil and are never used by interior cells
        D[0] = dVf[0]
        D[-1] = dVf[-1]
    H = numerical_energy_flux(basis, F, V_avg, pot_avg, dB, h_avg, dun, g, Q=Q, D=D)
    QD = np.einsum("...ij,...j->...i", Q, D)
    F = F - 0.5 * QD.reshape(F.shape)
    dissipation = np.einsum("...i,...i->...", dVf, QD)
    dUdV = system.entropy_symmetrizer(basis, h, u, v, g) if with_speed else None
    return _Strip(F, H, h_avg, dB, dissipation, Q, dUdV)


def max_diffusion_speed(Q, dUdV) -> float:
    """Largest ``rho(Q dV/dU)`` over interfaces and their two adjacent cells.

    The diffusion acts on conserved jumps as ``Q (dV/dU) [[U]]``, so this is the
    speed an explicit step must resolve.  ``dUdV`` covers ``n`` cells, ``Q`` the
    ``n - 1`` interfaces between them.  Each candidate is the symmetric
    ``C^-1 Q C^-T`` with ``C C^T = dU/dV``; its Frobenius norm bounds the
    spectral radius, so exact eigenvalues are only needed for the few
    candidates whose bound exceeds the best value found so far.
    """
    n = Q.shape[-1]
    Ci = np.linalg.inv(np.linalg.cholesky(dUdV))
    CiT = np.swapaxes(Ci, -1, -2)
    M = np.concatenate([Ci[:-1] @ Q @ CiT[:-1], Ci[1:] @ Q @ CiT[1:]]).reshape(-1, n, n)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    bound = np.sqrt(np.einsum("...ij,...ij->...", M, M))
    order = np.argsort(-bound, kind="stable")
    best = 0.0
    for start in range(0, order.size, 256):
        idx = order[start:start + 256]
        if bound[idx[0]] <= best:
            break
        best = max(best, float(np.abs(np.linalg.eigvalsh(M[idx])).max()))
    return best


def semidiscrete_rhs(basis: PceBasis, field: StateField, scheme: str = "EC", g: float = 1.0,
                     epsilon: float = DEFAULT_EPSILON, source: str = "wb",
                     scaling: str = DEFAULT_SCALING, with_speed: bool = False) -> RhsResult:
    """``dU/dt`` on the interior cells plus interface and energy fluxes.

    Ghost layers of ``field`` must be filled.  ``with_speed`` also evaluates
    the ES diffusion speeds used for step selection.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if source not in SOURCES:
        raise ValueError(f"unknown source discretization {source!r}")
    mesh = field.mesh
    Mx, My = mesh.shape
    gh = GHOST
    U, B = field.U, field.B
    h = U[..., 0, :]

    positive = system.is_hyperbolic(basis, h[mesh.interior()])
    if not np.all(positive):
        i, j = np.argwhere(~positive)[0]
        raise HyperbolicityError(f"cell ({i + 1}, {j + 1}) violates height positivity", index=(i, j))

    vel = system.velocities(basis, U, epsilon)
    eq = system.entropy_from_velocities(basis, h, vel.u, vel.v, B, g)
    V = eq.V

    # x sweep: interior rows, padded along x -> interfaces p = 0..Mx+2, p = 1 is x_{1/2}
    ys = slice(gh, gh + My)
    sx = _strip(basis, h[:, ys], vel.u[:, ys], vel.v[:, ys], B[:, ys], V[:, ys],
                eq.Psi[:, ys], g, scheme, "x", scaling, with_speed)
    # y sweep on transposed arrays
    xs = slice(gh, gh + Mx)

    def t(a):
        return np.swapaxes(a[xs], 0, 1)

    sy = _strip(basis, t(h), t(vel.u), t(vel.v), t(B), t(V), t(eq.Phi), g, scheme, "y", scaling, with_speed)

    keep = slice(gh - 1, gh + Mx)  # x interfaces 1/2 .. Mx+1/2
    Fx = sx.flux[keep]
    Hx = sx.H[keep]
    keep_y = slice(gh - 1, gh + My)
    Gy = np.swapaxes(sy.flux[keep_y], 0, 1)
    Ky = np.swapaxes(sy.H[keep_y], 0, 1)

    dx, dy = mesh.dx, mesh.dy
    dUdt = -(Fx[1:] - Fx[:-1]) / dx - (Gy[:, 1:] - Gy[:, :-1]) / dy

    hx_avg = sx.h_avg[keep]
    dBx = sx.dB[keep]
    hy_avg = np.swapaxes(sy.h_avg[keep_y], 0, 1)
    dBy = np.swapaxes(sy.dB[keep_y], 0, 1)
    if source == "wb":
        Sx = wb_source(basis, hx_avg[:-1], dBx[:-1], hx_avg[1:], dBx[1:], g, dx)
        Sy = wb_source(basis, hy_avg[:, :-1], dBy[:, :-1], hy_avg[:, 1:], dBy[:, 1:], g, dy)
    else:
        hc = h[mesh.interior()]
        Sx = nwb_source(basis, hc, dBx[:-1], dBx[1:], g, dx)
        Sy = nwb_source(basis, hc, dBy[:, :-1], dBy[:, 1:], g, dy)
    dUdt[..., 1, :] += Sx
    dUdt[..., 2, :] += Sy

    speeds = None
    if with_speed:
        speeds = (0.0, 0.0)
        if scheme != "EC":
            # kept interfaces p border cells p and p + 1
            cells_x = slice(keep.start, keep.stop + 1)
            cells_y = slice(keep_y.start, keep_y.stop + 1)
            speeds = (max_diffusion_speed(sx.Q[keep], sx.dUdV[cells_x]),
                      max_diffusion_speed(sy.Q[keep_y], sy.dUdV[cells_y]))
    diss = 0.0
    if scheme != "EC":
        # each interface is shared by two cells with weight 1/4 each; boundary faces count once
        wx = np.full(Mx + 1, 0.5)
        wx[[0, -1]] = 0.25
        wy = np.full(My + 1, 0.5)
        wy[[0, -1]] = 0.25
        diss = float(np.sum(wx[:, None] * sx.dissipation[keep]) / dx
                     + np.sum(wy[:, None] * sy.dissipation[keep_y]) / dy)

    interior = mesh.interior()
    return RhsResult(
        dUdt=dUdt,
        fluxes=InterfaceFluxes(Fx, Gy, Hx, Ky),
        V=V[interior],
        E=eq.E[interior],
        desingularized=vel.desingularized[interior],
        es_dissipation=diss,
        diffusion_speed=speeds,
    )
