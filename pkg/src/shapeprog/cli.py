"""Command-line interface.

Machine-readable output (JSON, CSV, scalars, clouds) goes to stdout or the
requested file; status text goes to stderr. Exit codes: 0 success, 1 usage
error, 2 input-format error, 3 numerical failure, 4 gradcheck failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io as sio
from .dsl import DslError, builtin_registry, format_program, parse_program, validate_program
from .gradients import evaluate_loss, finite_difference_check
from .losses import LossConfig
from .lowering import LoweringError, lower_program, primitive_set_to_json
from .optimizer import NonFiniteLossError, OptimConfig, fit, trace_to_csv, trace_to_json
from .renderer import PointCloud, RenderConfig, sample_points, voxelize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_GRADCHECK = 4

DEFAULT_SEED = 0
DEFAULT_POINTS = 5000

_DIRECTIONS = {"fwd": "chamfer-forward", "bwd": "chamfer-backward", "sym": "chamfer-symmetric"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _InputError(Exception):
    pass


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.run(args)
    except _InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (DslError, LoweringError, sio.FormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except NonFiniteLossError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


def _build_parser() -> _Parser:
    parser = _Parser(prog="shapeprog", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("compile", help="parse, validate, and lower a program")
    p.add_argument("program", type=Path)
    p.add_argument("--json", type=Path, help="write PrimitiveSet JSON here (default stdout)")
    p.set_defaults(run=_cmd_compile)

    p = sub.add_parser("render", help="sample surface points to a cloud file")
    p.add_argument("program", type=Path)
    p.add_argument("--points", type=int, default=DEFAULT_POINTS)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--no-caps", action="store_true", help="skip cylinder end caps")
    p.add_argument("--out", type=Path, required=True, help="output .xyz or .ply")
    p.set_defaults(run=_cmd_render)

    p = sub.add_parser("voxelize", help="rasterize occupancy to a binvox file")
    p.add_argument("program", type=Path)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--pad", type=float, default=0.05)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(run=_cmd_voxelize)

    p = sub.add_parser("loss", help="evaluate a loss between program and target")
    _add_loss_arguments(p)
    p.set_defaults(run=_cmd_loss)

    p = sub.add_parser("fit", help="fit program parameters to a target")
    _add_loss_arguments(p)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--method", choices=("gd", "momentum", "adaptive"), default="adaptive")
    p.add_argument("--reseed", action="store_true", help="resample unit draws each step")
    p.add_argument("--out", type=Path, required=True, help="write the fitted program here")
    p.add_argument("--trace", type=Path, help="write per-step losses (.csv or .json)")
    p.set_defaults(run=_cmd_fit)

    p = sub.add_parser("gradcheck", help="verify analytic gradients by finite differences")
    _add_loss_arguments(p)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--json", type=Path, help="write the per-slot report here")
    p.set_defaults(run=_cmd_gradcheck)

    return parser


def _add_loss_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--program", type=Path, required=True)
    p.add_argument("--target", type=Path, required=True, help=".xyz, .ply, or .obj")
    p.add_argument("--loss", choices=("chamfer", "coverage"), default="chamfer")
    p.add_argument("--direction", choices=tuple(_DIRECTIONS), default="sym")
    p.add_argument("--reduce", choices=("mean", "sum"), default="mean")
    p.add_argument("--power", type=int, choices=(1, 2), default=1)
    p.add_argument("--points", type=int, default=DEFAULT_POINTS)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--no-caps", action="store_true")


def _load_program(path: Path):
    registry = builtin_registry()
    try:
        text = path.read_text()
    except OSError as err:
        raise _InputError(f"cannot read {path}: {err}") from None
    program = parse_program(text, registry)
    diagnostics = validate_program(program, registry)
    if diagnostics:
        details = "; ".join(str(d) for d in diagnostics)
        raise _InputError(f"{path}: {details}")
    return program, registry


def _load_target(path: Path, points: int, seed: int) -> PointCloud:
    try:
        suffix = path.suffix.lower()
        if suffix == ".obj":
            mesh = sio.read_obj(path.read_text())
            return sio.sample_mesh(mesh, points, seed)
        if suffix == ".ply":
            return sio.read_ply(path.read_text())
        if suffix == ".xyz":
            return sio.read_xyz(path.read_text())
    except OSError as err:
        raise _InputError(f"cannot read {path}: {err}") from None
    raise _InputError(f"unsupported target format {path.suffix!r} (use .xyz, .ply, or .obj)")


def _write_cloud(cloud: PointCloud, path: Path) -> None:
    suffix = path.suffix.lower()
    if suffix == ".xyz":
        path.write_text(sio.write_xyz(cloud))
    elif suffix == ".ply":
        path.write_text(sio.write_ply(cloud))
    else:
        raise _InputError(f"unsupported cloud format {path.suffix!r} (use .xyz or .ply)")


def _loss_config(args) -> LossConfig:
    if args.loss == "coverage":
        return LossConfig(kind="coverage", chamfer_reduce=args.reduce,
                          coverage_power=args.power)
    return LossConfig(kind=_DIRECTIONS[args.direction], chamfer_reduce=args.reduce,
                      coverage_power=args.power)


def _cmd_compile(args) -> int:
    program, registry = _load_program(args.program)
    payload = primitive_set_to_json(lower_program(program, registry))
    if args.json:
        args.json.write_text(payload + "\n")
    else:
        print(payload)
    return EXIT_OK


def _cmd_render(args) -> int:
    program, registry = _load_program(args.program)
    pset = lower_program(program, registry)
    cloud = sample_points(pset, args.points, args.seed, include_caps=not args.no_caps)
    _write_cloud(cloud, args.out)
    print(f"wrote {len(cloud)} points to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_voxelize(args) -> int:
    if args.dim < 1:
        raise _InputError("--dim must be at least 1")
    program, registry = _load_program(args.program)
    grid = voxelize(lower_program(program, registry), args.dim, args.pad)
    args.out.write_bytes(sio.write_binvox(grid))
    filled = int(grid.occupancy.sum())
    print(f"wrote {args.dim}^3 grid ({filled} occupied) to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_loss(args) -> int:
    program, registry = _load_program(args.program)
    target = _load_target(args.target, args.points, args.seed)
    value = evaluate_loss(
        program, target, _loss_config(args),
        RenderConfig(count=args.points, include_caps=not args.no_caps),
        seed=args.seed, registry=registry,
    )
    print(repr(value))
    return EXIT_OK


def _cmd_fit(args) -> int:
    program, registry = _load_program(args.program)
    target = _load_target(args.target, args.points, args.seed)
    cfg = OptimConfig(
        steps=args.steps,
        step_size=args.lr,
        method=args.method,
        reseed_per_step=args.reseed,
        loss=_loss_config(args),
        sample_count=args.points,
        include_caps=not args.no_caps,
        seed=args.seed,
    )
    fitted, trace = fit(program, target, cfg, registry)
    args.out.write_text(format_program(fitted) + "\n")
    if args.trace:
        if args.trace.suffix.lower() == ".json":
            args.trace.write_text(trace_to_json(trace))
        else:
            args.trace.write_text(trace_to_csv(trace))
    if trace:
        print(f"fit: {trace[0]!r} -> best {min(trace)!r} over {len(trace)} steps",
              file=sys.stderr)
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    program, registry = _load_program(args.program)
    target = _load_target(args.target, args.points, args.seed)
    try:
        report = finite_difference_check(
            program, target, _loss_config(args),
            h=args.h, tolerance=args.tol,
            render_cfg=RenderConfig(count=args.points, include_caps=not args.no_caps),
            seed=args.seed, registry=registry,
        )
    except ValueError as err:
        raise _InputError(str(err)) from None
    if args.json:
        args.json.write_text(report.to_json() + "\n")
    boundary = sum(c.boundary for c in report.checks)
    print(
        f"gradcheck: {len(report.checks)} slots, {boundary} boundary, "
        f"{len(report.failures)} failing",
        file=sys.stderr,
    )
    return EXIT_OK if report.passed else EXIT_GRADCHECK


if __name__ == "__main__":
    sys.exit(main())
