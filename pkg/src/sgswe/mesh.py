"""Uniform rectangular meshes, ghost layers and boundary conditions.

Cell arrays carry two ghost layers on every side: interior cell ``(i, j)``
(1-based, as in the formulas) lives at array index ``(i + 1, j + 1)``.
Axis 0 is x (left/right sides), axis 1 is y (bottom/top sides).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

GHOST = 2
SIDES = ("left", "right", "bottom", "top")
BC_KINDS = ("periodic", "outflow")


@dataclass(frozen=True)
class Mesh:
    Mx: int
    My: int
    x_range: tuple[float, float] = (0.0, 1.0)
    y_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.Mx < 1 or self.My < 1:
            raise ValueError("cell counts must be positive")
        if not (self.x_range[1] > self.x_range[0] and self.y_range[1] > self.y_range[0]):
            raise ValueError("domain bounds must be increasing")

    @property
    def dx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.Mx

    @property
    def dy(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.My

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Mx, self.My)

    @property
    def padded_shape(self) -> tuple[int, int]:
        return (self.Mx + 2 * GHOST, self.My + 2 * GHOST)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Interior cell-center coordinates, each of shape ``(Mx, My)``."""
        x = self.x_range[0] + (np.arange(self.Mx) + 0.5) * self.dx
        y = self.y_range[0] + (np.arange(self.My) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def interior(self) -> tuple[slice, slice]:
        return (slice(GHOST, GHOST + self.Mx), slice(GHOST, GHOST + self.My))


@dataclass(frozen=True)
class BcSpec:
    left: str = "outflow"
    right: str = "outflow"
    bottom: str = "periodic"
    top: str = "periodic"

    def __post_init__(self):
        for side in SIDES:
            kind = getattr(self, side)
            if kind not in BC_KINDS:
                raise ValueError(f"{side}: unknown boundary condition {kind!r}")
        if (self.left == "periodic") != (self.right == "periodic"):
            raise ValueError("left/right: periodic must be set on both sides")
        if (self.bottom == "periodic") != (self.top == "periodic"):
            raise ValueError("bottom/top: periodic must be set on both sides")

    @classmethod
    def all_periodic(cls) -> "BcSpec":
        return cls("periodic", "periodic", "periodic", "periodic")

    @property
    def x_periodic(self) -> bool:
        return self.left == "periodic"

    @property
    def y_periodic(self) -> bool:
        return self.bottom == "periodic"


def _periodic_source(n: int) -> np.ndarray:
    # padded index -> interior index it copies; modular so grids narrower than the halo work
    return GHOST + (np.arange(n + 2 * GHOST) - GHOST) % n


def fill_ghosts(a: np.ndarray, bc: BcSpec) -> np.ndarray:
    """Fill the ghost layers of a padded cell array (in place) and return it."""
    g = GHOST
    nx = a.shape[0] - 2 * g
    ny = a.shape[1] - 2 * g
    # x first over interior rows of y, then y over full x (corners come along)
    if bc.x_periodic:
        a[:, g:-g] = a[_periodic_source(nx), g:-g]
    else:
        a[:g, g:-g] = a[g:g + 1, g:-g]
        a[-g:, g:-g] = a[-g - 1:-g, g:-g]
    if bc.y_periodic:
        a[:] = a[:, _periodic_source(ny)]
    else:
        a[:, :g] = a[:, g:g + 1]
        a[:, -g:] = a[:, -g - 1:-g]
    return a


def pad(interior: np.ndarray, bc: BcSpec) -> np.ndarray:
    """Embed an interior array into a freshly allocated padded array with ghosts filled."""
    g = GHOST
    shape = (interior.shape[0] + 2 * g, interior.shape[1] + 2 * g) + interior.shape[2:]
    out = np.zeros(shape, dtype=float)
    out[g:-g, g:-g] = interior
    return fill_ghosts(out, bc)


@dataclass(frozen=True, eq=False)
class StateField:
    """Cell averages ``U`` of shape ``(Mx+4, My+4, 3, K)`` and bottom ``B`` of shape ``(Mx+4, My+4, K)``."""

    mesh: Mesh
    U: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    bc: BcSpec = BcSpec()

    @classmethod
    def from_interior(cls, mesh: Mesh, U_int: np.ndarray, B_int: np.ndarray, bc: BcSpec) -> "StateField":
        if U_int.shape[:2] != mesh.shape or B_int.shape[:2] != mesh.shape:
            raise ValueError("interior arrays do not match the mesh")
        return cls(mesh, pad(U_int, bc), pad(B_int, bc), bc)

    @property
    def K(self) -> int:
        return self.U.shape[-1]

    @property
    def interior_U(self) -> np.ndarray:
        return self.U[self.mesh.interior()]

    @property
    def interior_B(self) -> np.ndarray:
        return self.B[self.mesh.interior()]

    def with_interior(self, U_int: np.ndarray) -> "StateField":
        U = self.U.copy()
        U[self.mesh.interior()] = U_int
        return replace(self, U=fill_ghosts(U, self.bc))


def apply_bc(field_: StateField) -> StateField:
    return replace(field_, U=fill_ghosts(field_.U.copy(), field_.bc), B=fill_ghosts(field_.B.copy(), field_.bc))
