"""Command-line entry point; subcommands are listed by ``sgswe --help``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import app
from .config import ConfigError, RunConfig, parse_config
from .integrator import StepAbort
from .linalg import HyperbolicityError
from .presets import PRESETS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _mesh(text: str) -> dict:
    try:
        mx, my = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MX,MY, got {text!r}") from None
    return {"Mx": mx, "My": my}


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _param(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    try:
        if not sep:
            raise ValueError
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--preset", help="built-in setup (see 'preset list')")
    p.add_argument("--scheme", choices=("EC", "ES1", "ES2"))
    p.add_argument("--mesh", type=_mesh, metavar="MX,MY")
    p.add_argument("--tend", type=float, metavar="T")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="NAME=VALUE",
                   help="override a preset parameter (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgswe", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one simulation and write snapshots and energy traces")
    _common(run_p)
    run_p.add_argument("--coefficients", action="store_true", help="also dump full PCE coefficients")

    preset_p = sub.add_parser("preset", help="inspect built-in setups")
    preset_sub = preset_p.add_subparsers(dest="preset_command", required=True)
    preset_sub.add_parser("list", help="list preset names")

    conv_p = sub.add_parser("convergence", help="grid convergence study against a fine reference")
    _common(conv_p)
    conv_p.add_argument("--grids", type=_int_list, default=[50, 100, 200], metavar="M1,M2,...")
    conv_p.add_argument("--reference", type=int, default=400, metavar="M")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out: dict = {}
    if args.preset is not None:
        out["preset"] = args.preset
    if args.scheme is not None:
        out["scheme"] = args.scheme
    if args.mesh is not None:
        out["mesh"] = args.mesh
    if args.tend is not None:
        out["t_end"] = args.tend
    if args.out is not None:
        out["output"] = args.out
    if args.param:
        out["params"] = dict(args.param)
    return out


def load(args: argparse.Namespace) -> RunConfig:
    return parse_config(args.config, _overrides(args))


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load(args)
    outcome = app.run_config(cfg, write=True, coefficients=args.coefficients)
    if outcome.status != "ok":
        print(f"sgswe: solver aborted: {outcome.message}", file=sys.stderr)
        return EXIT_ABORT
    s = outcome.stats
    print(f"{cfg.preset or 'inline'} {cfg.scheme}: {s['steps']} steps to t={s['t_final']:.6g}, "
          f"E_aug_rel={s['augmented_rel_final']:.3e}, outputs in {cfg.output}")
    return EXIT_OK


def cmd_preset_list(args: argparse.Namespace) -> int:
    for p in PRESETS.values():
        m = p.measure
        print(f"{p.name:26s} K={m.size:<2d} mesh={p.mesh[0]}x{p.mesh[1]:<4d} T={p.t_end:<5g} "
              f"{p.scheme}/{p.source}  {p.description}")
    return EXIT_OK


def cmd_convergence(args: argparse.Namespace) -> int:
    if args.preset is None and args.config is None:
        args.preset = "hump_accuracy"
    cfg = load(args)
    try:
        table = app.convergence_study(cfg, args.grids, args.reference)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    app.write_convergence(out / "convergence.csv", cfg, table)
    for g, e, o in table.rows():
        print(f"{g:6d}  {e:.6e}  {o if o == '' else f'{o:.4f}'}")
    if table.degenerate:
        print("note: zero errors, orders are undefined", file=sys.stderr)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "preset":
            return cmd_preset_list(args)
        return cmd_convergence(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"sgswe: config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepAbort, HyperbolicityError) as exc:
        print(f"sgswe: solver aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
