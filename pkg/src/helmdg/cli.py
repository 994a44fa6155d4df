"""Command-line front end: benchmarks, analyses and mesh utilities.

Subcommands
-----------
run      Solve a benchmark with a chosen method and solver; writes the
         error-history CSV (``iteration;residual;relative_error``) and
         prints the final error and iteration count.
analyze  Conditioning and spectrum studies for a benchmark; writes the
         spectrum CSV (``re_lambda;im_lambda``) and a conditioning CSV.
mesh     Generate, read or summarize meshes and print face/dof counts.

Options may also be given in a key=value config file (one per line, ``#``
comments allowed); command-line flags override file values.  Exit codes:
0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import bench, solvers
from .bench import METHODS, SOLVERS, make_benchmark
from .dg_core import ElementContext
from .mesh import (
    BoundaryTag,
    MeshError,
    generate_rectangle,
    generate_structured_unit_square,
    read_mesh_file,
    validate,
    write_mesh_file,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse failures to exit code 1
        self.print_usage(sys.stderr)
        raise SystemExit_(EXIT_USAGE, f"{self.prog}: error: {message}")


class SystemExit_(Exception):
    def __init__(self, code: int, message: str = ""):
        self.code = code
        self.message = message


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit_(EXIT_USAGE, f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def build_parser() -> _Parser:
    parser = _Parser(prog="helmdg", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="key=value config file; flags override file values")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--benchmark", choices=("plane_wave", "cavity", "waveguide"), default="plane_wave")
    common.add_argument("--kappa", type=float, default=None, help="wavenumber override")
    common.add_argument("--h", type=float, default=None, help="target mesh size override (max edge length)")
    common.add_argument("--p", type=int, default=3, help="polynomial degree")
    common.add_argument("--theta", type=float, default=bench.DEFAULT_THETA, help="propagation angle")
    common.add_argument("--kappa-mode", choices=("default", "refined", "near_resonance", "double", "second"),
                        default="default", help="preset parameter variant")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory for CSV files")

    run = sub.add_parser("run", parents=[common], help="solve a benchmark and record the error history")
    run.add_argument("--method", choices=METHODS, default="chdg")
    run.add_argument("--solver", choices=SOLVERS, default="gmres")
    run.add_argument("--max-iter", type=int, default=None)
    run.add_argument("--tol", type=float, default=1e-10)
    run.add_argument("--stop-error-factor", type=float, default=None,
                     help="stop once the error is below factor * direct error")

    analyze = sub.add_parser("analyze", parents=[common], help="conditioning and spectrum studies")
    analyze.add_argument("--num-eigenvalues", type=int, default=6)
    analyze.add_argument("--skip-global-cond", action="store_true",
                         help="only compute the spectrum and local conditioning")
    analyze.add_argument("--p-sweep", type=int, nargs="*", default=None,
                         help="degrees for the local conditioning sweep")

    mesh_cmd = sub.add_parser("mesh", help="generate or inspect meshes; print counts and dof formulas")
    mesh_cmd.add_argument("--n", type=int, default=None, help="unit-square subdivisions")
    mesh_cmd.add_argument("--nx", type=int, default=None)
    mesh_cmd.add_argument("--ny", type=int, default=None)
    mesh_cmd.add_argument("--lx", type=float, default=1.0)
    mesh_cmd.add_argument("--ly", type=float, default=1.0)
    mesh_cmd.add_argument("--tags", choices=("dirichlet", "neumann", "robin"), default="robin")
    mesh_cmd.add_argument("--p", type=int, default=3)
    mesh_cmd.add_argument("--mesh-file", default=None, help="read this mesh file instead of generating")
    mesh_cmd.add_argument("--counts", type=int, nargs=2, metavar=("NTRI", "NFCE"), default=None,
                          help="print dof formulas for given triangle/face counts, no mesh")
    mesh_cmd.add_argument("--out", default=None, help="write the mesh to this file")
    return parser


def _apply_config_defaults(parser: _Parser, argv: list[str]) -> argparse.Namespace:
    # Locate --config before the full parse so file values become defaults.
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    args = parser.parse_args(argv)
    if known.config:
        file_values = _read_config_file(known.config)
        explicit = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
        for key, value in file_values.items():
            if key in explicit or not hasattr(args, key):
                continue
            current = getattr(args, key)
            if isinstance(current, bool):
                setattr(args, key, value.lower() in ("1", "true", "yes"))
                continue
            # Numeric-looking values are coerced even when the flag default
            # is None (e.g. --kappa, --h).
            for cast in (int, float):
                try:
                    setattr(args, key, cast(value))
                    break
                except ValueError:
                    continue
            else:
                setattr(args, key, value)
    return args


def _case_from_args(args) -> bench.BenchmarkCase:
    n = None
    if args.h is not None:
        if not args.h > 0.0:
            raise SystemExit_(EXIT_USAGE, "target mesh size must be positive")
        n = bench.subdivisions_for_target_h(args.h)
    variant = {"second": "second", "double": "second", "near_resonance": "second",
               "refined": "refined", "default": "default"}[args.kappa_mode]
    return make_benchmark(
        args.benchmark,
        variant=variant,
        n=n,
        kappa=args.kappa,
        degree=args.p,
        theta=args.theta,
    )


def cmd_run(args) -> int:
    case = _case_from_args(args)
    methods = (args.method,)
    try:
        ws = bench.prepare_workspace(case, methods=methods)
        record = bench.run_benchmark(
            ws,
            args.method,
            args.solver,
            max_iter=args.max_iter,
            tol=args.tol,
            stop_error_factor=args.stop_error_factor,
        )
    except ValueError as exc:
        raise SystemExit_(EXIT_USAGE, str(exc))
    except solvers.SingularSystemError as exc:
        raise SystemExit_(EXIT_NUMERICAL, str(exc))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{case.name}_{args.method}_{args.solver}.csv"
    record.write_csv(csv_path)
    final_err = record.errors[-1] if record.errors else record.direct_error
    print(f"benchmark={case.name} method={args.method} solver={args.solver}")
    print(f"kappa={case.kappa:.6g} h_char={case.h_char:.5g} p={case.degree} dofs={ws.systems[args.method].n}")
    print(f"iterations={record.iterations} reason={record.reason}")
    print(f"relative_error={final_err:.5e} direct_error={record.direct_error:.5e}")
    print(f"history={csv_path}")
    return EXIT_OK

def cmd_analyze(args) -> int:
    case = _case_from_args(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        ws = bench.prepare_workspace(case)
        spectrum = bench.spectral_radius(ws.chdg_ops, cloud_size=args.num_eigenvalues, seed=args.seed)
    except RuntimeError as exc:
        raise SystemExit_(EXIT_NUMERICAL, str(exc))
    spec_path = out_dir / f"{case.name}_spectrum.csv"
    spectrum.write_csv(spec_path)
    print(f"benchmark={case.name} kappa={case.kappa:.6g} h_char={case.h_char:.5g} p={case.degree}")
    print(f"rho(PiS)={spectrum.rho:.8f} one_minus_rho={spectrum.one_minus_rho:.5e}")
    if spectrum.rho >= 1.0:
        raise SystemExit_(EXIT_NUMERICAL, "spectral radius estimate >= 1")

    degrees = args.p_sweep if args.p_sweep else [1, 2, 3]
    mesh = case.build_mesh()
    local_rows = []
    for method in ("hdg", "chdg"):
        rep = bench.local_conditioning_sweep(mesh, degrees, [case.kappa], method)
        local_rows += list(zip(rep.labels, rep.values))
    for label, value in local_rows:
        print(f"local max cond {label}: {value:.5e}")

    labels = [lbl for lbl, _ in local_rows]
    values = [val for _, val in local_rows]
    if not args.skip_global_cond:
        rep = bench.global_conditioning(ws.systems, seed=args.seed)
        if not all(rep.converged):
            raise SystemExit_(EXIT_NUMERICAL, "condition estimator did not converge")
        for label, value in zip(rep.labels, rep.values):
            print(f"global cond {label}: {value:.5e}")
        labels += [f"global {lbl}" for lbl in rep.labels]
        values += rep.values
    cond_path = out_dir / f"{case.name}_conditioning.csv"
    bench.write_conditioning_csv(bench.ConditioningReport(labels=labels, values=values), cond_path)
    print(f"spectrum={spec_path}")
    print(f"conditioning={cond_path}")
    return EXIT_OK


def cmd_mesh(args) -> int:
    if args.counts is not None:
        n_tri, n_fce = args.counts
        dofs = bench.dof_summary(n_tri, n_fce, args.p)
        print(f"N_tri={n_tri} N_fce={n_fce} p={args.p}")
        print(f"dof_dg={dofs['dg']} dof_hdg={dofs['hdg']} dof_chdg={dofs['chdg']}")
        return EXIT_OK

    try:
        if args.mesh_file:
            mesh = read_mesh_file(args.mesh_file)
        else:
            tag = BoundaryTag[args.tags.upper()]
            if args.n is not None:
                mesh = generate_structured_unit_square(args.n, tags=tag)
            elif args.nx is not None and args.ny is not None:
                mesh = generate_rectangle(args.lx, args.ly, args.nx, args.ny, tags=tag)
            else:
                raise SystemExit_(EXIT_USAGE, "give --n, --nx/--ny, --mesh-file or --counts")
    except MeshError as exc:
        raise SystemExit_(EXIT_USAGE, str(exc))

    diag = validate(mesh)
    if not diag.passed:
        raise SystemExit_(EXIT_NUMERICAL, f"mesh validation failed: {diag.message}")
    n_tri, n_fce = mesh.n_triangles, mesh.n_faces
    n_bnd, n_int = mesh.n_boundary_faces, mesh.n_interior_faces
    assert 3 * n_tri == n_bnd + 2 * n_int, "face counting identity violated"
    dofs = bench.dof_summary(n_tri, n_fce, args.p)
    print(f"N_tri={n_tri} N_fce={n_fce} N_fce_bnd={n_bnd} N_fce_int={n_int} h_char={mesh.h_char:.6g}")
    print(f"identity 3*N_tri = N_fce_bnd + 2*N_fce_int: {3*n_tri} = {n_bnd} + 2*{n_int}")
    print(f"dof_dg={dofs['dg']} dof_hdg={dofs['hdg']} dof_chdg={dofs['chdg']} (p={args.p})")
    if args.out:
        write_mesh_file(mesh, args.out)
        print(f"mesh={args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config_defaults(parser, argv)
        np.random.seed(getattr(args, "seed", 0))
        if args.command == "run":
            return cmd_run(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "mesh":
            return cmd_mesh(args)
        raise SystemExit_(EXIT_USAGE, f"unknown command {args.command}")
    except SystemExit_ as exc:
        if exc.message:
            print(exc.message, file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
