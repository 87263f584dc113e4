"""Energy accounting, well-balance residuals, error norms and convergence orders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import system
from .mesh import StateField
from .pce import PceBasis, mean_std
from .system import DEFAULT_EPSILON


def total_energy(basis: PceBasis, field_: StateField, g: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Unweighted sum of cell energies over the interior (no cell-area factor)."""
    eq = system.entropy_quantities(basis, field_.interior_U, field_.interior_B, g, epsilon)
    return float(np.sum(eq.E))


def boundary_energy_rate(field_: StateField, Hx, Ky) -> float:
    """Energy inflow ``sum_j (H_1/2 - H_M+1/2) / dx`` plus the y analogue, non-periodic sides only."""
    mesh = field_.mesh
    rate = 0.0
    if not field_.bc.x_periodic:
        rate += float(np.sum(Hx[0] - Hx[-1])) / mesh.dx
    if not field_.bc.y_periodic:
        rate += float(np.sum(Ky[:, 0] - Ky[:, -1])) / mesh.dy
    return rate


def augmented_energy_rate(field_: StateField, rhs) -> float:
    """``sum V.dU/dt`` minus the boundary energy inflow, for an RHS evaluated on ``field_``."""
    return rhs.energy_rate - boundary_energy_rate(field_, rhs.fluxes.Hx, rhs.fluxes.Ky)


@dataclass(frozen=True)
class WellBalanceResidual:
    surface: float
    discharge: float

    @property
    def max(self) -> float:
        return max(self.surface, self.discharge)


def well_balance_residual(field_: StateField, surface_ref) -> WellBalanceResidual:
    """Max-norm deviation of ``h + B`` from ``surface_ref`` and of the discharges from zero."""
    U = field_.interior_U
    w = U[..., 0, :] + field_.interior_B
    dev = np.abs(w - np.asarray(surface_ref, dtype=float))
    q = np.abs(U[..., 1:, :])
    return WellBalanceResidual(float(dev.max(initial=0.0)), float(q.max(initial=0.0)))


def mean_surface_deviation(field_: StateField, level: float) -> float:
    """Max over cells of ``|mean(h + B) - level|``."""
    w = field_.interior_U[..., 0, 0] + field_.interior_B[..., 0]
    return float(np.max(np.abs(w - level)))


def restrict(fine: np.ndarray, factor: tuple[int, int]) -> np.ndarray:
    """Block-average cell values of shape ``(Mx, My, ...)`` by integer factors."""
    fx, fy = factor
    Mx, My = fine.shape[:2]
    if Mx % fx or My % fy:
        raise ValueError(f"grid {Mx}x{My} is not divisible by {fx}x{fy}")
    blocks = fine.reshape((Mx // fx, fx, My // fy, fy) + fine.shape[2:])
    return blocks.mean(axis=(1, 3))


def error_norm(coarse: StateField, reference: StateField) -> float:
    """``sum_ij dx dy ||h_ij - restrict(h_ref)_ij||_2`` over PCE coefficients."""
    cm, rm = coarse.mesh, reference.mesh
    if rm.Mx % cm.Mx or rm.My % cm.My:
        raise ValueError(f"reference grid {rm.Mx}x{rm.My} is not a refinement of {cm.Mx}x{cm.My}")
    if (cm.x_range, cm.y_range) != (rm.x_range, rm.y_range):
        raise ValueError("grids cover different domains")
    h_ref = restrict(reference.interior_U[..., 0, :], (rm.Mx // cm.Mx, rm.My // cm.My))
    diff = coarse.interior_U[..., 0, :] - h_ref
    return float(cm.dx * cm.dy * np.sum(np.linalg.norm(diff, axis=-1)))


def convergence_orders(errors: Sequence[float]) -> list[float]:
    """``log2(e_k / e_k+1)`` for errors on successively halved grids."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two errors")
    if np.any(~(e > 0)):
        raise ValueError("errors must be positive")
    return [float(x) for x in np.log2(e[:-1] / e[1:])]


def surface_mean_std(field_: StateField) -> tuple[np.ndarray, np.ndarray]:
    """Cellwise mean and standard deviation of the water surface ``h + B``."""
    return mean_std(field_.interior_U[..., 0, :] + field_.interior_B)


@dataclass
class EnergyTrace:
    """Per-step energy records; ``augmented_energy[0] == total_energy[0]``."""

    times: list[float] = field(default_factory=list)
    total_energy: list[float] = field(default_factory=list)
    augmented_energy: list[float] = field(default_factory=list)
    boundary_flux_left: list[float] = field(default_factory=list)
    boundary_flux_right: list[float] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)

    def append(self, t: float, E: float, E_aug: float, left: float = 0.0, right: float = 0.0,
               dt: float = 0.0) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"trace times must increase strictly: {t} after {self.times[-1]}")
        if not self.times and E_aug != E:
            raise ValueError("augmented energy must start at the total energy")
        self.times.append(float(t))
        self.total_energy.append(float(E))
        self.augmented_energy.append(float(E_aug))
        self.boundary_flux_left.append(float(left))
        self.boundary_flux_right.append(float(right))
        self.dt.append(float(dt))

    def __len__(self) -> int:
        return len(self.times)

    @staticmethod
    def _relative(values: Sequence[float]) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return (v - v[0]) / v[0]

    @property
    def relative_energy(self) -> np.ndarray:
        return self._relative(self.total_energy)

    @property
    def relative_augmented(self) -> np.ndarray:
        return self._relative(self.augmented_energy)

    def rows(self):
        rel = self.relative_energy
        rel_aug = self.relative_augmented
        for k, t in enumerate(self.times):
            yield t, self.total_energy[k], rel[k], self.augmented_energy[k], rel_aug[k]
