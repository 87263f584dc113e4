"""Strict JSON run configuration: parsing, preset merging and validation."""

from __future__ import annotations

import ast
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .integrator import StepControls
from .linalg import DEFAULT_SCALING, SCALINGS
from .mesh import BC_KINDS, SIDES, BcSpec, Mesh
from .pce import MeasureSpec
from .presets import PRESETS, DataFn, Preset
from .scheme import SCHEMES, SOURCES

TOP_KEYS = {
    "preset", "scheme", "source", "mesh", "domain", "basis", "g", "controls", "bc",
    "t_end", "snapshot_times", "output", "params", "initial", "eigen_scaling", "max_steps",
}
MESH_KEYS = {"Mx", "My"}
DOMAIN_KEYS = {"x", "y"}
BASIS_KEYS = {"alpha", "beta", "orders"}
CONTROL_KEYS = {"cfl", "safety", "epsilon", "dt_min"}
INITIAL_KEYS = {"surface", "bottom", "u", "v"}


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every violation found."""

    def __init__(self, problems: list[str] | str):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class RunConfig:
    scheme: str
    mesh: Mesh
    measure: MeasureSpec
    bc: BcSpec
    t_end: float
    surface: DataFn
    bottom: DataFn
    u: DataFn
    v: DataFn
    g: float = 1.0
    controls: StepControls = field(default_factory=StepControls)
    source: str = "wb"
    eigen_scaling: str = DEFAULT_SCALING
    snapshot_times: tuple[float, ...] = ()
    output: Path = Path("out")
    preset: str | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    max_steps: int | None = None
    # the merged raw mapping, kept for manifests
    raw: Mapping[str, Any] = field(default_factory=dict, repr=False)

    @property
    def K(self) -> int:
        return self.measure.size


# --- parsing ---------------------------------------------------------------

class _DuplicateKey(ValueError):
    def __init__(self, key: str):
        super().__init__(f"duplicate key {key!r}")
        self.key = key


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise _DuplicateKey(k)
        out[k] = v
    return out


def _position(text: str, key: str) -> tuple[int, int]:
    """Line and column of the second ``"key":`` in ``text`` (best effort)."""
    hits = list(re.finditer(r'"%s"\s*:' % re.escape(json.dumps(key)[1:-1]), text))
    if len(hits) < 2:
        return 1, 1
    return _line_col(text, hits[1].start())


class _BadConstant(ValueError):
    def __init__(self, name: str):
        super().__init__(f"non-standard JSON constant {name}")
        self.name = name


def _reject_constant(name):
    raise _BadConstant(name)


def _line_col(text: str, pos: int) -> tuple[int, int]:
    return text.count("\n", 0, pos) + 1, pos - (text.rfind("\n", 0, pos) + 1) + 1


def loads(text: str, source: str = "<string>") -> dict:
    """Parse strict JSON text into a mapping; errors carry the line and column."""
    try:
        data = json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except _DuplicateKey as exc:
        line, col = _position(text, exc.key)
        raise ConfigError(f"{source}:{line}:{col}: {exc}") from None
    except _BadConstant as exc:
        m = re.search(r"(?<![\w\"])-?%s\b" % exc.name, text)
        line, col = _line_col(text, m.start()) if m else (1, 1)
        raise ConfigError(f"{source}:{line}:{col}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    return data


def load_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text, str(path))


# --- expressions -------------------------------------------------------------

_FUNCS: dict[str, Callable] = {
    name: getattr(np, name)
    for name in ("exp", "log", "sqrt", "sin", "cos", "tan", "tanh", "abs", "where", "minimum",
                 "maximum", "logical_and", "logical_or", "heaviside")
}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Compare, ast.BoolOp, ast.Call, ast.Name, ast.Load,
    ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq, ast.BitAnd, ast.BitOr, ast.Invert,
)


def compile_expression(expr: str, dims: int) -> DataFn:
    """Turn a numpy-style formula in ``x``, ``y``, ``xi`` (``xi1``..) into a data callable.

    Only arithmetic, comparisons, ``&``/``|``, whitelisted numpy functions and
    the names ``x``, ``y``, ``xi``, ``xi1``..``xi<d>``, ``pi``, ``e`` are accepted.
    """
    if not isinstance(expr, str) or not expr.strip():
        raise ConfigError("expression must be a non-empty string")
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {expr!r}: {exc.msg}") from None
    names = {"x", "y", "xi", *(f"xi{i + 1}" for i in range(dims)), *_FUNCS, *_CONSTS}
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"expression {expr!r}: {type(node).__name__} is not allowed")
        if isinstance(node, ast.Name) and node.id not in names:
            raise ConfigError(f"expression {expr!r}: unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"expression {expr!r}: only numpy functions {sorted(_FUNCS)} may be called")
    code = compile(tree, "<expr>", "eval")

    def fn(x, y, xi, p):
        scope = {"x": x, "y": y, "xi": xi[0], **_FUNCS, **_CONSTS}
        scope.update({f"xi{i + 1}": v for i, v in enumerate(xi)})
        return eval(code, {"__builtins__": {}}, scope)

    fn.expression = expr  # type: ignore[attr-defined]
    return fn


# --- validation --------------------------------------------------------------

def _unknown(section: str, data: Mapping, allowed: set[str], problems: list[str]) -> None:
    for key in sorted(set(data) - allowed):
        where = f"{section}." if section else ""
        problems.append(f"unknown key {where}{key!r}")


def _number(value, name: str, problems: list[str]) -> float | None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        problems.append(f"{name} must be a finite number, got {value!r}")
        return None
    return float(value)


def _section(data: Mapping, key: str, problems: list[str]) -> dict:
    value = data.get(key, {})
    if not isinstance(value, dict):
        problems.append(f"{key} must be an object")
        return {}
    return value


def merge(base: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict:
    """Recursive dict merge; override values win, nested objects merge key by key."""
    out = dict(base)
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def build_config(data: Mapping[str, Any]) -> RunConfig:
    """Validate a raw mapping (file contents merged with CLI overrides) into a RunConfig."""
    problems: list[str] = []
    _unknown("", data, TOP_KEYS, problems)

    preset: Preset | None = None
    name = data.get("preset")
    if name is not None:
        if name not in PRESETS:
            problems.append(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
        else:
            preset = PRESETS[name]

    scheme = data.get("scheme")
    if scheme is None:
        problems.append("missing required key 'scheme'")
    elif scheme not in SCHEMES:
        problems.append(f"scheme must be one of {SCHEMES}, got {scheme!r}")

    source = data.get("source", preset.source if preset else "wb")
    if source not in SOURCES:
        problems.append(f"source must be one of {SOURCES}, got {source!r}")
    scaling = data.get("eigen_scaling", DEFAULT_SCALING)
    if scaling not in SCALINGS:
        problems.append(f"eigen_scaling must be one of {SCALINGS}, got {scaling!r}")

    # mesh and domain
    mesh_d = _section(data, "mesh", problems)
    _unknown("mesh", mesh_d, MESH_KEYS, problems)
    shape = list(preset.mesh) if preset else [None, None]
    for i, key in enumerate(("Mx", "My")):
        if key in mesh_d:
            shape[i] = mesh_d[key]
        if shape[i] is None:
            problems.append(f"missing required key 'mesh.{key}'")
        elif isinstance(shape[i], bool) or not isinstance(shape[i], int) or shape[i] < 1:
            problems.append(f"mesh.{key} must be a positive integer, got {shape[i]!r}")
    dom = _section(data, "domain", problems)
    _unknown("domain", dom, DOMAIN_KEYS, problems)
    ranges = [preset.x_range if preset else None, preset.y_range if preset else None]
    for i, key in enumerate(("x", "y")):
        if key in dom:
            r = dom[key]
            if (not isinstance(r, list) or len(r) != 2
                    or any(_number(v, f"domain.{key}", problems) is None for v in r)):
                problems.append(f"domain.{key} must be a pair of numbers")
                continue
            if not r[1] > r[0]:
                problems.append(f"domain.{key} must be increasing, got {r}")
                continue
            ranges[i] = (float(r[0]), float(r[1]))
        if ranges[i] is None:
            problems.append(f"missing required key 'domain.{key}'")

    # stochastic basis
    basis_d = _section(data, "basis", problems)
    _unknown("basis", basis_d, BASIS_KEYS, problems)
    measure = preset.measure if preset else None
    if basis_d:
        orders = basis_d.get("orders", list(measure.orders) if measure else None)
        if orders is None:
            problems.append("missing required key 'basis.orders'")
        else:
            d = len(orders) if isinstance(orders, list) else 1
            alpha = basis_d.get("alpha", list(measure.alpha) if measure and measure.dims == d else [0.0] * d)
            beta = basis_d.get("beta", list(measure.beta) if measure and measure.dims == d else [0.0] * d)
            try:
                measure = MeasureSpec(tuple(alpha), tuple(beta), tuple(orders))
            except (TypeError, ValueError) as exc:
                problems.append(f"basis: {exc}")
                measure = None
    elif measure is None:
        problems.append("missing required key 'basis'")

    g = _number(data.get("g", 1.0), "g", problems)
    if g is not None and not g > 0:
        problems.append(f"g must be positive, got {g}")

    ctl = _section(data, "controls", problems)
    _unknown("controls", ctl, CONTROL_KEYS, problems)
    controls = None
    vals = {k: _number(ctl[k], f"controls.{k}", problems) for k in ctl if k in CONTROL_KEYS}
    if None not in vals.values():
        try:
            controls = StepControls(
                cfl_number=vals.get("cfl", 0.45),
                hyperbolicity_safety=vals.get("safety", 0.9),
                dt_min=vals.get("dt_min", 1e-12),
                epsilon_desing=vals.get("epsilon", 1e-6),
            )
        except ValueError as exc:
            problems.append(f"controls: {exc}")

    bc_d = _section(data, "bc", problems)
    _unknown("bc", bc_d, set(SIDES), problems)
    base_bc = preset.bc if preset else BcSpec()
    bc = None
    sides = {s: bc_d.get(s, getattr(base_bc, s)) for s in SIDES}
    bad = [s for s in SIDES if sides[s] not in BC_KINDS]
    for s in bad:
        problems.append(f"bc.{s} must be one of {BC_KINDS}, got {sides[s]!r}")
    if not bad:
        try:
            bc = BcSpec(**sides)
        except ValueError as exc:
            problems.append(f"bc: {exc}")

    t_end = data.get("t_end", preset.t_end if preset else None)
    if t_end is None:
        problems.append("missing required key 't_end'")
    else:
        t_end = _number(t_end, "t_end", problems)
        if t_end is not None and t_end < 0:
            problems.append(f"t_end must be non-negative, got {t_end}")

    if "snapshot_times" in data:
        snaps = data["snapshot_times"]
    else:
        # inherited preset times past a shortened t_end are dropped, explicit ones are validated
        snaps = [s for s in (preset.snapshot_times if preset else ())
                 if not isinstance(t_end, (int, float)) or s <= t_end]
    snapshot_times: tuple[float, ...] = ()
    if not isinstance(snaps, list):
        problems.append("snapshot_times must be a list")
    else:
        nums = [_number(s, "snapshot_times[]", problems) for s in snaps]
        if None not in nums:
            snapshot_times = tuple(sorted(set(nums)))
            if t_end is not None and any(s < 0 or s > t_end for s in snapshot_times):
                problems.append(f"snapshot_times must lie in [0, t_end={t_end}]")

    params_d = _section(data, "params", problems)
    params = dict(preset.params) if preset else {}
    for k, v in params_d.items():
        if k not in params:
            problems.append(f"unknown key params.{k!r}" + (f" for preset {name!r}" if preset else ""))
        elif _number(v, f"params.{k}", problems) is not None:
            params[k] = float(v)

    init = _section(data, "initial", problems)
    _unknown("initial", init, INITIAL_KEYS, problems)
    fns: dict[str, DataFn | None] = {
        "surface": preset.surface if preset else None,
        "bottom": preset.bottom if preset else None,
        "u": preset.u if preset else (lambda x, y, xi, p: 0.0),
        "v": preset.v if preset else (lambda x, y, xi, p: 0.0),
    }
    for key in INITIAL_KEYS:
        if key in init:
            try:
                fns[key] = compile_expression(init[key], measure.dims if measure else 1)
            except ConfigError as exc:
                problems.append(f"initial.{key}: {exc}")
        if fns[key] is None:
            problems.append(f"missing required key 'initial.{key}'")

    max_steps = data.get("max_steps")
    if max_steps is not None and (isinstance(max_steps, bool) or not isinstance(max_steps, int) or max_steps < 1):
        problems.append(f"max_steps must be a positive integer, got {max_steps!r}")

    output = data.get("output", "out")
    if not isinstance(output, str) or not output:
        problems.append("output must be a non-empty path string")

    mesh = None
    if not problems:
        try:
            mesh = Mesh(shape[0], shape[1], ranges[0], ranges[1])
        except ValueError as exc:
            problems.append(f"mesh: {exc}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(
        scheme=scheme, mesh=mesh, measure=measure, bc=bc, t_end=t_end,
        surface=fns["surface"], bottom=fns["bottom"], u=fns["u"], v=fns["v"],
        g=g, controls=controls, source=source, eigen_scaling=scaling,
        snapshot_times=snapshot_times, output=Path(output), preset=name,
        params=params, max_steps=max_steps, raw=dict(data),
    )


def parse_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a JSON config (optional), apply overrides and validate."""
    data = load_file(path) if path is not None else {}
    return build_config(merge(data, overrides or {}))


def with_mesh(cfg: RunConfig, Mx: int, My: int) -> RunConfig:
    return replace(cfg, mesh=Mesh(Mx, My, cfg.mesh.x_range, cfg.mesh.y_range))
