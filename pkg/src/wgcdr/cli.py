"""Command line entry point.

Verbs: ``mesh`` (generate, validate, write), ``solve`` (one configuration),
``study`` (sweep and tables), ``sample`` (plot data) and ``check``
(invariant probes).  Exit status is 0 on success, 2 when a config or mesh
fails validation and 1 on numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import experiments as ex
from .error_analysis import CoercivityError, format_error, table_errors
from .mesh import (
    FAMILIES,
    MeshFamily,
    MeshFormatError,
    MeshValidationError,
    generate_mesh,
    read_mesh,
    validate,
    write_mesh,
)
from .quadrature import TriangulationError
from .wg_system import SolverError

EXIT_OK, EXIT_NUMERICAL, EXIT_INVALID = 0, 1, 2


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value experiment file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for study rows")
    common.add_argument("--r-override", type=int, dest="r_override",
                        help="weak-gradient degree used on every element")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config entry (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="wgcdr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    m = sub.add_parser("mesh", parents=[common], help="generate, validate and write meshes")
    m.add_argument("path", nargs="?", help="validate this mesh file instead of generating")
    sub.add_parser("solve", parents=[common], help="solve the first (level, rho) pair")
    sub.add_parser("study", parents=[common], help="run the sweep and write tables")
    sub.add_parser("sample", parents=[common], help="write plot data for the first pair")
    c = sub.add_parser("check", parents=[common], help="run invariant probes")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--level", type=int, default=2)
    return parser


def _config(args):
    text = ""
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    extra = "\n".join(args.set)
    cfg = ex.parse_config(text + "\n" + extra)
    return ex.with_overrides(cfg, threads=args.threads, r=args.r_override)


def _first_case(cfg):
    if not cfg.levels:
        raise ex.ConfigError("no levels configured")
    return cfg.levels[0], cfg.rho[0]


def _cmd_mesh(args):
    if args.path:
        try:
            mesh = read_mesh(args.path, check=False)
        except MeshFormatError as exc:
            print(f"{args.path}: {exc}", file=sys.stderr)
            return EXIT_INVALID
        problems = validate(mesh)
        for p in problems:
            print(f"{args.path}: {p}")
        print(f"{args.path}: {mesh.n_elements} elements, "
              f"{'valid' if not problems else f'{len(problems)} violation(s)'}")
        return EXIT_INVALID if problems else EXIT_OK
    cfg = _config(args)
    status = EXIT_OK
    os.makedirs(args.out, exist_ok=True)
    for level in cfg.levels:
        mesh = generate_mesh(MeshFamily(cfg.family, level))
        problems = validate(mesh)
        path = os.path.join(args.out, f"{cfg.family}_G{level}.mesh")
        write_mesh(mesh, path)
        print(f"{path}: {mesh.n_elements} elements, {mesh.n_edges} edges, "
              f"h = {mesh.mesh_size:.4g}, {len(problems)} violation(s)")
        if problems:
            status = EXIT_INVALID
    return status


def _cmd_solve(args):
    cfg = _config(args)
    level, rho = _first_case(cfg)
    solution, problem = ex.solve_case(cfg, level, rho)
    rep = table_errors(solution, problem)
    print(f"{cfg.solution} on {cfg.family} G{level}, k={cfg.k}, rho={rho:g}: "
          f"{rep.n_dofs} unknowns, residual {rep.residual:.2e}")
    print(f"  l2 {format_error(rep.l2_error)}  grad {format_error(rep.grad_error)}  "
          f"energy {format_error(rep.energy_error)}  ({1e3 * rep.solve_seconds:.0f} ms)")
    return EXIT_OK


def _cmd_study(args):
    cfg = _config(args)
    report = ex.run(cfg, out_dir=args.out)
    sys.stdout.write(report.to_markdown())
    return EXIT_NUMERICAL if report.failures else EXIT_OK


def _cmd_sample(args):
    cfg = _config(args)
    level, rho = _first_case(cfg)
    solution, _ = ex.solve_case(cfg, level, rho)
    samples = ex.sample_solution(solution, cfg.resolution)
    path = os.path.join(args.out, cfg.plot)
    ex.write_plot_data(samples, path)
    print(f"{path}: {len(samples.elements)} element blocks, {len(samples.edges)} edge blocks, "
          f"max |u0| = {samples.max_abs_interior:.4g}")
    return EXIT_OK


def _cmd_check(args):
    results = ex.run_checks(seed=args.seed, level=args.level, families=FAMILIES,
                            r_override=args.r_override)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


_COMMANDS = {"mesh": _cmd_mesh, "solve": _cmd_solve, "study": _cmd_study,
             "sample": _cmd_sample, "check": _cmd_check}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.verb](args)
    except (ex.ConfigError, MeshFormatError, MeshValidationError, TriangulationError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, CoercivityError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
