"""Built-in experiment setups and projection of initial data onto the PCE basis.

Data callables have the signature ``f(x, y, xi, p)``: ``x``/``y`` are cell
midpoints, ``xi`` is a tuple with one array of quadrature nodes per random
dimension and ``p`` is the preset's parameter mapping.  They must broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from .mesh import BcSpec, Mesh, StateField
from .pce import MeasureSpec, PceBasis, galerkin_product, project_values
from .system import pack

DataFn = Callable[..., np.ndarray]

PAPER_BC = BcSpec("outflow", "outflow", "periodic", "periodic")


def _const(value: float) -> DataFn:
    return lambda x, y, xi, p: value


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    measure: MeasureSpec
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    mesh: tuple[int, int]
    t_end: float
    surface: DataFn
    bottom: DataFn
    u: DataFn = _const(0.0)
    v: DataFn = _const(0.0)
    snapshot_times: tuple[float, ...] = ()
    bc: BcSpec = PAPER_BC
    scheme: str = "ES2"
    source: str = "wb"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    def make_mesh(self, shape: tuple[int, int] | None = None) -> Mesh:
        Mx, My = shape or self.mesh
        return Mesh(Mx, My, self.x_range, self.y_range)


def project_cells(basis: PceBasis, mesh: Mesh, fn: DataFn, params: Mapping[str, float]) -> np.ndarray:
    """PCE coefficients of ``fn`` at every cell midpoint, shape ``(Mx, My, K)``."""
    x, y = mesh.centers()
    x = x[..., None]
    y = y[..., None]
    xi = tuple(basis.quad_nodes[:, i] for i in range(basis.dims))
    values = np.asarray(fn(x, y, xi, params), dtype=float)
    values = np.broadcast_to(values, mesh.shape + (len(basis.quad_weights),))
    return project_values(basis, values)


def initial_field(basis: PceBasis, mesh: Mesh, bc: BcSpec, surface: DataFn, bottom: DataFn,
                  u: DataFn, v: DataFn, params: Mapping[str, float] | None = None) -> StateField:
    """Project ``w``, ``B``, ``u``, ``v``; set ``h = w - B`` and ``q = P(h) u``."""
    params = params or {}
    w = project_cells(basis, mesh, surface, params)
    B = project_cells(basis, mesh, bottom, params)
    h = w - B
    uu = project_cells(basis, mesh, u, params)
    vv = project_cells(basis, mesh, v, params)
    U = pack(h, galerkin_product(basis, h, uu), galerkin_product(basis, h, vv))
    return StateField.from_interior(mesh, U, B, bc)


def preset_field(preset: Preset, basis: PceBasis, mesh: Mesh | None = None, bc: BcSpec | None = None,
                 params: Mapping[str, float] | None = None) -> StateField:
    merged = dict(preset.params)
    if params:
        unknown = set(params) - set(merged)
        if unknown:
            raise KeyError(f"preset {preset.name!r} has no parameters {sorted(unknown)}")
        merged.update(params)
    return initial_field(basis, mesh or preset.make_mesh(), bc or preset.bc,
                         preset.surface, preset.bottom, preset.u, preset.v, merged)


# --- bottoms and surfaces -------------------------------------------------

def _hump_bottom(x, y, xi, p):
    return 0.5 * np.exp(-25 * (x - 1) ** 2 - 50 * (y - 0.5) ** 2) + p["bottom_shift"] * (xi[0] + 1)


def _moving_hump_bottom(x, y, xi, p):
    return 0.8 * np.exp(-5 * (x - 0.9 + p["position_spread"] * xi[0]) ** 2 - 50 * (y - 0.5) ** 2)


def _fixed_hump_bottom(x, y, xi, p):
    return 0.8 * np.exp(-5 * (x - 0.9) ** 2 - 50 * (y - 0.5) ** 2)


def _strip_surface(x, y, xi, p):
    bump = p["amplitude"] + p["stochastic_amplitude"] * (xi[0] + 1)
    return 1.0 + np.where((x > 0.05) & (x < 0.15), bump, 0.0)


def _plateau_bottom(x, y, xi, p):
    r = np.sqrt(x**2 + y**2) + 0.0001
    ramp = 9.997 * (0.2 - r) + p["bottom_noise"] * (xi[0] + 1)
    return np.where(r <= 0.1, 0.9998, np.where(r <= 0.2, ramp, 0.0001))


def _plateau_surface(x, y, xi, p):
    return 1.0 + np.where((x > -0.4) & (x < -0.3), p["perturbation"], 0.0)


def _cross_bottom(x, y, xi, p):
    s = x * y
    left = p["left_amplitude"] * (np.cos(5 * np.pi * (s + 0.35)) + 1)
    right = 0.125 * (np.cos(10 * np.pi * (s - 0.35)) + 1)
    return np.where((s > -0.55) & (s < -0.15), left, np.where((s > 0.25) & (s < 0.45), right, 0.0))


def _cross_surface(x, y, xi, p):
    return 1.0 + np.where(np.abs(x * y) <= 0.05, p["perturbation"] * (xi[0] + 1), 0.0)


def _two_dim_hump_bottom(x, y, xi, p):
    return 0.5 * np.exp(-12.5 * (xi[0] + 1) * (x - 1) ** 2 - 25 * (xi[1] + 1) * (y - 0.5) ** 2)


def _ramp_bottom(x, y, xi, p):
    return np.where(x < 0.5, 0.0, np.where(x <= 1.5, 0.1 * x - 0.05, 0.1))


_HUMP_TIMES = (0.6, 0.9, 1.2, 1.5, 1.8)
_PLATEAU_TIMES = (0.2, 0.35, 0.5, 0.65)
_CROSS_TIMES = (0.2, 0.4, 0.6, 0.8)


def _build() -> dict[str, Preset]:
    uniform4 = MeasureSpec.uniform(4)
    moving = dict(surface=_strip_surface, x_range=(0.0, 2.0), y_range=(0.0, 1.0), mesh=(200, 200),
                  t_end=1.8, snapshot_times=_HUMP_TIMES, measure=uniform4)
    plateau = dict(measure=uniform4, x_range=(-0.5, 0.5), y_range=(-0.5, 0.5), t_end=0.65,
                   snapshot_times=_PLATEAU_TIMES, surface=_plateau_surface, bottom=_plateau_bottom,
                   params={"perturbation": 1e-4, "bottom_noise": 1e-4})
    cross = dict(measure=uniform4, x_range=(-1.0, 1.0), y_range=(-1.0, 1.0), t_end=0.8,
                 snapshot_times=_CROSS_TIMES, surface=_cross_surface, bottom=_cross_bottom)
    presets = [
        Preset("hump_accuracy", "smooth flow over an elliptic hump with a randomly raised bottom (K=2)",
               measure=MeasureSpec.uniform(2), x_range=(0.0, 2.0), y_range=(0.0, 1.0), mesh=(100, 100),
               t_end=0.07, surface=_const(1.0), bottom=_hump_bottom, u=_const(0.3),
               params={"bottom_shift": 0.1}),
        Preset("hump_random_position", "step in the surface runs onto a Gaussian hump at a random position",
               bottom=_moving_hump_bottom,
               params={"amplitude": 0.01, "stochastic_amplitude": 0.0, "position_spread": 0.1}, **moving),
        Preset("hump_random_surface", "random-height surface step runs onto a fixed Gaussian hump",
               bottom=_fixed_hump_bottom,
               params={"amplitude": 0.0, "stochastic_amplitude": 0.01}, **moving),
        Preset("plateau", "small surface pulse over a submerged plateau with a random flank",
               mesh=(200, 200), **plateau),
        Preset("plateau_nonwb", "plateau setup with the non-well-balanced source",
               mesh=(50, 50), source="nwb", **plateau),
        Preset("lake_perturbation_b1", "random pulse along the axes over a cosine-ridged bottom",
               mesh=(200, 200), params={"perturbation": 0.001, "left_amplitude": 0.25}, **cross),
        Preset("lake_perturbation_b2", "lake perturbation with a higher left ridge",
               mesh=(200, 200), params={"perturbation": 0.001, "left_amplitude": 0.45}, **cross),
        Preset("lake_perturbation_nonwb", "lake perturbation with the non-well-balanced source",
               mesh=(50, 50), source="nwb", params={"perturbation": 0.001, "left_amplitude": 0.25}, **cross),
        Preset("hump_two_dim", "hump of random width in both directions, Beta(3,1) x uniform (K=9)",
               measure=MeasureSpec((3.0, 0.0), (1.0, 0.0), (3, 3)), x_range=(0.0, 2.0), y_range=(0.0, 1.0),
               mesh=(100, 100), t_end=0.07, surface=_const(1.0), bottom=_two_dim_hump_bottom,
               u=_const(0.3)),
        Preset("boundary_energy_1d", "one-dimensional flow over a linear ramp with energy inflow",
               measure=uniform4, x_range=(0.0, 2.0), y_range=(0.0, 1.0), mesh=(200, 1), t_end=0.07,
               surface=_const(1.0), bottom=_ramp_bottom, u=_const(0.3)),
    ]
    return {p.name: p for p in presets}


PRESETS: Mapping[str, Preset] = MappingProxyType(_build())


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
