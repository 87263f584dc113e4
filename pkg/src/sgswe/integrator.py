"""SSP-RK3 time stepping with hyperbolicity-preserving step control."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import system
from .diagnostics import EnergyTrace, augmented_energy_rate
from .linalg import DEFAULT_SCALING, HyperbolicityError
from .mesh import StateField
from .pce import PceBasis, at_nodes, galerkin_matrix
from .scheme import SCHEMES, SOURCES, RhsResult, semidiscrete_rhs
from .system import DEFAULT_EPSILON

log = logging.getLogger(__name__)

MAX_HALVINGS = 20
# SSP-RK3 as a Butcher tableau has weights (1/6, 1/6, 2/3); quadratures along a step use them
RK3_WEIGHTS = (1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0)


class StepAbort(RuntimeError):
    """Time stepping cannot continue; ``snapshot`` holds the last accepted field."""

    def __init__(self, message: str, snapshot: StateField | None = None, t: float | None = None):
        super().__init__(message)
        self.snapshot = snapshot
        self.t = t


@dataclass(frozen=True)
class StepControls:
    cfl_number: float = 0.45
    hyperbolicity_safety: float = 0.9
    dt_min: float = 1e-12
    epsilon_desing: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not 0 < self.cfl_number <= 1:
            raise ValueError(f"cfl_number must lie in (0, 1], got {self.cfl_number}")
        if not 0 < self.hyperbolicity_safety < 1:
            raise ValueError(f"hyperbolicity_safety must lie in (0, 1), got {self.hyperbolicity_safety}")
        if not self.dt_min > 0:
            raise ValueError(f"dt_min must be positive, got {self.dt_min}")
        if not self.epsilon_desing > 0:
            raise ValueError(f"epsilon_desing must be positive, got {self.epsilon_desing}")


def ssp_rk3_update(u0, dt: float, rate: Callable):
    """Shu-Osher form of SSP-RK3 for any ``rate(u, stage) -> du/dt``."""
    u1 = u0 + dt * rate(u0, 0)
    u2 = 0.75 * u0 + 0.25 * (u1 + dt * rate(u1, 1))
    return u0 / 3.0 + (2.0 / 3.0) * (u2 + dt * rate(u2, 2))


def height_dt_bound(basis: PceBasis, h, divergence) -> float:
    """``min |h(xi_n) / div(xi_n)|`` over cells and nodes; ``inf`` if the divergence vanishes."""
    hn = np.abs(at_nodes(basis, h))
    dn = np.abs(at_nodes(basis, divergence))
    nz = dn > 0
    if not np.any(nz):
        return math.inf
    with np.errstate(over="ignore"):  # denormal divergences give inf, which never binds
        return float(np.min(hn[nz] / dn[nz]))


def hyperbolicity_dt_bound(basis: PceBasis, field_: StateField, rhs: RhsResult) -> float:
    """Largest forward-Euler step keeping the height positive at every quadrature node."""
    mesh = field_.mesh
    Fh = rhs.fluxes.Fx[..., 0, :]
    Gh = rhs.fluxes.Gy[..., 0, :]
    div = (Fh[1:] - Fh[:-1]) / mesh.dx + (Gh[:, 1:] - Gh[:, :-1]) / mesh.dy
    return height_dt_bound(basis, field_.interior_U[..., 0, :], div)


def spectral_radius(basis: PceBasis, z) -> np.ndarray:
    return np.max(np.abs(np.linalg.eigvalsh(galerkin_matrix(basis, z))), axis=-1)


def wave_speeds(basis: PceBasis, field_: StateField, g: float,
                epsilon: float = DEFAULT_EPSILON) -> tuple[float, float]:
    U = field_.interior_U
    vel = system.velocities(basis, U, epsilon)
    c = np.sqrt(g * spectral_radius(basis, U[..., 0, :]))
    sx = float(np.max(spectral_radius(basis, vel.u) + c))
    sy = float(np.max(spectral_radius(basis, vel.v) + c))
    return sx, sy


def cfl_dt_bound(basis: PceBasis, field_: StateField, g: float, cfl_number: float = 0.45,
                 epsilon: float = DEFAULT_EPSILON) -> float:
    """``cfl * min(dx / s_x, dy / s_y)`` with spectral-radius wave-speed surrogates."""
    sx, sy = wave_speeds(basis, field_, g, epsilon)
    mesh = field_.mesh
    bx = mesh.dx / sx if sx > 0 else math.inf
    by = mesh.dy / sy if sy > 0 else math.inf
    return cfl_number * min(bx, by)


def diffusion_dt_bound(field_: StateField, rhs: RhsResult, cfl_number: float = 0.45) -> float:
    """``cfl * min(dx / d_x, dy / d_y)`` with ``d`` the ES diffusion speeds of ``rhs``.

    Where a shallow cell meets a deep interface average the diffusion is much
    stiffer than the wave speeds suggest; ``inf`` for the EC scheme.
    """
    if rhs.diffusion_speed is None:
        raise ValueError("rhs was evaluated without diffusion speeds")
    dx_speed, dy_speed = rhs.diffusion_speed
    mesh = field_.mesh
    bx = mesh.dx / dx_speed if dx_speed > 0 else math.inf
    by = mesh.dy / dy_speed if dy_speed > 0 else math.inf
    return cfl_number * min(bx, by)


def desingularize(basis: PceBasis, field_: StateField, epsilon: float = DEFAULT_EPSILON) -> StateField:
    """Replace discharges by ``P(h) u`` in cells where desingularization is active."""
    U = field_.interior_U
    vel = system.velocities(basis, U, epsilon)
    if not vel.any_desingularized:
        return field_
    U = U.copy()
    U[..., 1, :] = vel.qx
    U[..., 2, :] = vel.qy
    return field_.with_interior(U)


@dataclass(frozen=True)
class StepRecord:
    dt: float
    halvings: int
    augmented_rates: tuple[float, ...]
    dissipation: tuple[float, ...]

    @property
    def augmented_increment(self) -> float:
        return self.dt * sum(w * r for w, r in zip(RK3_WEIGHTS, self.augmented_rates))


@dataclass(frozen=True)
class Solver:
    """Bundles the discretization choices so stepping needs only a field and a step size."""

    basis: PceBasis
    scheme: str = "ES2"
    g: float = 1.0
    controls: StepControls = field(default_factory=StepControls)
    source: str = "wb"
    eigen_scaling: str = DEFAULT_SCALING

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source discretization {self.source!r}")
        if not self.g > 0:
            raise ValueError(f"gravity must be positive, got {self.g}")

    def rhs(self, field_: StateField, with_speed: bool = False) -> RhsResult:
        return semidiscrete_rhs(self.basis, field_, self.scheme, self.g,
                                self.controls.epsilon_desing, self.source, self.eigen_scaling, with_speed)


class _Reject(Exception):
    pass


def ssp_rk3_step(solver: Solver, field_: StateField, dt: float,
                 rhs0: RhsResult | None = None) -> tuple[StateField, StepRecord]:
    """One SSP-RK3 step; restarts with ``dt / 2`` whenever a stage input violates ``dt < lambda``.

    ``record.dt`` is the step actually taken.
    """
    basis = solver.basis
    eps = solver.controls.epsilon_desing
    field_ = desingularize(basis, field_, eps)
    if rhs0 is None:
        rhs0 = solver.rhs(field_)
    for halvings in range(MAX_HALVINGS + 1):
        if dt < solver.controls.dt_min:
            raise StepAbort(f"time step {dt:.3e} fell below dt_min={solver.controls.dt_min:.1e}",
                            snapshot=field_)
        rates: list[float] = []
        dissipation: list[float] = []

        def rate(U, stage, dt=dt):
            if stage == 0:
                f, r = field_, rhs0
            else:
                if not np.all(system.is_hyperbolic(basis, U[..., 0, :])):
                    raise _Reject
                f = desingularize(basis, field_.with_interior(U), eps)
                try:
                    r = solver.rhs(f)
                except HyperbolicityError:
                    raise _Reject from None
            if not dt < hyperbolicity_dt_bound(basis, f, r):
                raise _Reject
            rates.append(augmented_energy_rate(f, r))
            dissipation.append(r.es_dissipation)
            return r.dUdt

        try:
            U_new = ssp_rk3_update(field_.interior_U, dt, rate)
        except _Reject:
            dt *= 0.5
            continue
        if not np.all(system.is_hyperbolic(basis, U_new[..., 0, :])):
            dt *= 0.5
            continue
        return field_.with_interior(U_new), StepRecord(dt, halvings, tuple(rates), tuple(dissipation))
    raise StepAbort(f"step rejected after {MAX_HALVINGS} halvings", snapshot=field_)


@dataclass
class RunResult:
    field: StateField
    trace: EnergyTrace
    steps: int
    halvings: int
    t: float
    snapshots: dict = field(default_factory=dict)


Observer = Callable[[float, StateField], None]


def run(solver: Solver, initial: StateField, t_end: float, snapshot_times: Sequence[float] = (),
        observers: Sequence[Observer] = (), max_steps: int | None = None) -> RunResult:
    """Advance to ``t_end`` with ``dt = min(safety * lambda, dt_cfl, dt_diffusion, t_end - t)``.

    Steps are shortened to land exactly on snapshot times.  Observers are
    called at ``t = 0`` and after every accepted step.
    """
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    basis = solver.basis
    controls = solver.controls
    f = desingularize(basis, initial, controls.epsilon_desing)
    rhs = solver.rhs(f, with_speed=True)
    E = float(np.sum(rhs.E))
    E_aug = E
    trace = EnergyTrace()
    trace.append(0.0, E, E_aug, np.sum(rhs.fluxes.Hx[0]), np.sum(rhs.fluxes.Hx[-1]))
    pending = sorted({float(s) for s in snapshot_times if 0 < s <= t_end})
    snapshots = {0.0: f} if any(s == 0 for s in snapshot_times) else {}
    for obs in observers:
        obs(0.0, f)

    t = 0.0
    steps = halvings = 0
    while t < t_end:
        if max_steps is not None and steps >= max_steps:
            raise StepAbort(f"max_steps={max_steps} reached at t={t:.6g}", snapshot=f, t=t)
        target = pending[0] if pending else t_end
        dt = min(controls.hyperbolicity_safety * hyperbolicity_dt_bound(basis, f, rhs),
                 cfl_dt_bound(basis, f, solver.g, controls.cfl_number, controls.epsilon_desing),
                 diffusion_dt_bound(f, rhs, controls.cfl_number),
                 target - t)
        try:
            f, rec = ssp_rk3_step(solver, f, dt, rhs)
        except StepAbort as exc:
            exc.t = t
            raise
        # land exactly on targets instead of accumulating rounding
        t = target if rec.dt == target - t else t + rec.dt
        steps += 1
        halvings += rec.halvings
        E_aug += rec.augmented_increment
        f = desingularize(basis, f, controls.epsilon_desing)
        rhs = solver.rhs(f, with_speed=True)
        trace.append(t, np.sum(rhs.E), E_aug, np.sum(rhs.fluxes.Hx[0]), np.sum(rhs.fluxes.Hx[-1]), rec.dt)
        if rec.halvings:
            log.debug("t=%.6g: step halved %d times", t, rec.halvings)
        while pending and pending[0] <= t:
            snapshots[pending.pop(0)] = f
        for obs in observers:
            obs(t, f)
    return RunResult(f, trace, steps, halvings, t, snapshots)
