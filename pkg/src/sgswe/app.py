"""Run drivers and output writers behind the command-line interface."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import RunConfig
from .diagnostics import (EnergyTrace, convergence_orders, error_norm, mean_surface_deviation,
                          surface_mean_std)
from .integrator import RunResult, Solver, StepAbort, run
from .linalg import HyperbolicityError
from .mesh import Mesh, StateField
from .pce import PceBasis, build_basis
from .presets import initial_field

log = logging.getLogger(__name__)


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def fmt(x: float) -> str:
    """Shortest round-trip float text, so reruns are byte-identical."""
    return repr(float(x))


def manifest_lines(cfg: RunConfig, extra: dict | None = None) -> list[str]:
    m = cfg.mesh
    c = cfg.controls
    items = {
        "producer": f"sgswe {code_version()}",
        "preset": cfg.preset or "inline",
        "scheme": cfg.scheme,
        "source": cfg.source,
        "K": cfg.K,
        "orders": "x".join(map(str, cfg.measure.orders)),
        "alpha": ",".join(fmt(a) for a in cfg.measure.alpha),
        "beta": ",".join(fmt(b) for b in cfg.measure.beta),
        "mesh": f"{m.Mx}x{m.My}",
        "domain": f"[{fmt(m.x_range[0])},{fmt(m.x_range[1])}]x[{fmt(m.y_range[0])},{fmt(m.y_range[1])}]",
        "bc": f"{cfg.bc.left},{cfg.bc.right},{cfg.bc.bottom},{cfg.bc.top}",
        "g": fmt(cfg.g),
        "cfl": fmt(c.cfl_number),
        "safety": fmt(c.hyperbolicity_safety),
        "epsilon": fmt(c.epsilon_desing),
        "dt_min": fmt(c.dt_min),
        "eigen_scaling": cfg.eigen_scaling,
        "t_end": fmt(cfg.t_end),
    }
    items.update(extra or {})
    return [f"# {k}: {v}" for k, v in items.items()]


def _write_csv(path: Path, header: list[str], columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        for line in header:
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_snapshot(path: Path, cfg: RunConfig, f: StateField, t: float) -> None:
    x, y = f.mesh.centers()
    mw, sw = surface_mean_std(f)
    U = f.interior_U
    rows = zip(x.ravel(), y.ravel(), mw.ravel(), sw.ravel(), U[..., 1, 0].ravel(), U[..., 2, 0].ravel())
    _write_csv(path, manifest_lines(cfg, {"time": fmt(t)}),
               ["x", "y", "mean_w", "std_w", "mean_qx", "mean_qy"], rows)


def write_coefficients(path: Path, cfg: RunConfig, f: StateField, t: float) -> None:
    x, y = f.mesh.centers()
    K = f.K
    U = f.interior_U.reshape(-1, 3, K)
    B = f.interior_B.reshape(-1, K)
    cols = ["x", "y"] + [f"{n}_{k}" for n in ("h", "qx", "qy") for k in range(K)] + [f"B_{k}" for k in range(K)]
    rows = (
        [xi, yi, *U[i].ravel(), *B[i]]
        for i, (xi, yi) in enumerate(zip(x.ravel(), y.ravel()))
    )
    _write_csv(path, manifest_lines(cfg, {"time": fmt(t)}), cols, rows)


def write_energy(path: Path, cfg: RunConfig, trace: EnergyTrace) -> None:
    _write_csv(path, manifest_lines(cfg), ["t", "E", "E_rel", "E_aug", "E_aug_rel"], trace.rows())


def snapshot_name(t: float) -> str:
    return f"snapshot_t{t:.6f}.csv"


@dataclass
class RunOutcome:
    status: str  # "ok" | "aborted"
    result: RunResult | None
    files: list[str] = field(default_factory=list)
    message: str = ""
    stats: dict = field(default_factory=dict)


def make_solver(cfg: RunConfig, basis: PceBasis | None = None) -> Solver:
    return Solver(basis or build_basis(cfg.measure), cfg.scheme, cfg.g, cfg.controls, cfg.source,
                  cfg.eigen_scaling)


def initial_from_config(cfg: RunConfig, basis: PceBasis, mesh: Mesh | None = None) -> StateField:
    return initial_field(basis, mesh or cfg.mesh, cfg.bc, cfg.surface, cfg.bottom, cfg.u, cfg.v, cfg.params)


class _Monitor:
    """Tracks the largest mean-surface deviation from the initial far-field level and the largest std."""

    def __init__(self, level: float):
        self.level = level
        self.max_deviation = 0.0
        self.max_std: dict[float, float] = {}

    def __call__(self, t: float, f: StateField) -> None:
        self.max_deviation = max(self.max_deviation, mean_surface_deviation(f, self.level))


def rest_level(f: StateField) -> float:
    """Surface level at the first cell, the undisturbed far field in every built-in setup."""
    return float(f.interior_U[0, 0, 0, 0] + f.interior_B[0, 0, 0])


def run_config(cfg: RunConfig, write: bool = True, coefficients: bool = False) -> RunOutcome:
    basis = build_basis(cfg.measure)
    solver = make_solver(cfg, basis)
    f0 = initial_from_config(cfg, basis)
    out = Path(cfg.output)
    files: list[str] = []
    if write:
        out.mkdir(parents=True, exist_ok=True)
    monitor = _Monitor(rest_level(f0))

    def snapshot(t: float, f: StateField) -> None:
        monitor.max_std[t] = float(np.max(surface_mean_std(f)[1]))
        if write:
            name = snapshot_name(t)
            write_snapshot(out / name, cfg, f, t)
            files.append(name)
            if coefficients:
                cname = name.replace("snapshot_", "coefficients_")
                write_coefficients(out / cname, cfg, f, t)
                files.append(cname)

    times = set(cfg.snapshot_times) | {cfg.t_end}
    taken: set[float] = set()

    def observer(t: float, f: StateField) -> None:
        monitor(t, f)
        if t in times and t not in taken:
            taken.add(t)
            snapshot(t, f)

    status, message, result = "ok", "", None
    try:
        result = run(solver, f0, cfg.t_end, sorted(times), observers=[observer], max_steps=cfg.max_steps)
    except (StepAbort, HyperbolicityError) as exc:
        status, message = "aborted", str(exc)
        snap = getattr(exc, "snapshot", None)
        if write and snap is not None:
            write_snapshot(out / "snapshot_abort.csv", cfg, snap, getattr(exc, "t", None) or 0.0)
            files.append("snapshot_abort.csv")
        log.error("solver aborted: %s", exc)

    stats: dict = {"max_mean_surface_deviation": monitor.max_deviation,
                   "max_std_w": {fmt(t): v for t, v in sorted(monitor.max_std.items())}}
    if result is not None:
        stats.update(steps=result.steps, halvings=result.halvings, t_final=result.t,
                     energy_rel_final=float(result.trace.relative_energy[-1]),
                     augmented_rel_final=float(result.trace.relative_augmented[-1]))
        if write:
            write_energy(out / "energy.csv", cfg, result.trace)
            files.append("energy.csv")
    outcome = RunOutcome(status, result, files, message, stats)
    if write:
        write_manifest(out / "manifest.json", cfg, outcome)
    return outcome


def _jsonable(raw):
    return json.loads(json.dumps(raw, default=str))


def write_manifest(path: Path, cfg: RunConfig, outcome: RunOutcome, kind: str = "run") -> None:
    doc = {
        "kind": kind,
        "producer": f"sgswe {code_version()}",
        "status": outcome.status,
        "message": outcome.message,
        "config": _jsonable(dict(cfg.raw)),
        "resolved": {
            "preset": cfg.preset,
            "scheme": cfg.scheme,
            "source": cfg.source,
            "K": cfg.K,
            "orders": list(cfg.measure.orders),
            "alpha": list(cfg.measure.alpha),
            "beta": list(cfg.measure.beta),
            "mesh": [cfg.mesh.Mx, cfg.mesh.My],
            "domain": [list(cfg.mesh.x_range), list(cfg.mesh.y_range)],
            "bc": [cfg.bc.left, cfg.bc.right, cfg.bc.bottom, cfg.bc.top],
            "g": cfg.g,
            "t_end": cfg.t_end,
            "snapshot_times": list(cfg.snapshot_times),
            "params": dict(cfg.params),
            "controls": {
                "cfl": cfg.controls.cfl_number,
                "safety": cfg.controls.hyperbolicity_safety,
                "epsilon": cfg.controls.epsilon_desing,
                "dt_min": cfg.controls.dt_min,
            },
            "eigen_scaling": cfg.eigen_scaling,
        },
        "stats": outcome.stats,
        "files": outcome.files,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


@dataclass
class ConvergenceTable:
    grids: list[int]
    errors: list[float]
    orders: list[float | None]
    reference: int
    degenerate: bool

    def rows(self):
        for g, e, o in zip(self.grids, self.errors, self.orders):
            yield g, e, "" if o is None else o


def convergence_study(cfg: RunConfig, grids: Sequence[int], reference: int) -> ConvergenceTable:
    """Errors of square ``M x M`` runs against a ``reference x reference`` run of the same scheme."""
    grids = sorted(int(m) for m in grids)
    if not grids:
        raise ValueError("need at least one grid")
    bad = [m for m in grids if reference % m]
    if bad:
        raise ValueError(f"reference grid {reference} is not a multiple of {bad}")
    basis = build_basis(cfg.measure)
    solver = make_solver(cfg, basis)

    def solve(M: int) -> StateField:
        mesh = Mesh(M, M, cfg.mesh.x_range, cfg.mesh.y_range)
        return run(solver, initial_from_config(cfg, basis, mesh), cfg.t_end).field

    ref = solve(reference)
    errors = [error_norm(solve(m), ref) for m in grids]
    if all(e > 0 for e in errors) and len(errors) > 1:
        orders: list[float | None] = [None, *convergence_orders(errors)]
        degenerate = False
    else:
        orders = [None] * len(errors)
        degenerate = True
    return ConvergenceTable(grids, errors, orders, reference, degenerate)


def write_convergence(path: Path, cfg: RunConfig, table: ConvergenceTable) -> None:
    extra = {"reference": f"{table.reference}x{table.reference}", "degenerate": str(table.degenerate).lower()}
    _write_csv(path, manifest_lines(cfg, extra), ["grid", "error", "order"], table.rows())
