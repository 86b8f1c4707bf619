"""Command-line interface: ``fraclap {meshgen,solve,converge,tables}``.

Exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .errors import FraclapError, ValidationError

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
DEFAULT_LADDER = (0.2, 0.1, 0.05, 0.025)
MAX_DUMP_NODES = 2000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_mesh_source(p):
    p.add_argument("--mesh", help="mesh file (FRACMESH format)")
    p.add_argument("--radius", type=float, help="disk radius for the built-in generator")
    p.add_argument("--h", type=float, help="target mesh size for the generator")
    p.add_argument("--ball", type=float, help="enclosing ball radius for the generator")


def _add_common(p):
    p.add_argument("--s", type=float, required=True, help="fractional order in (0, 1)")
    p.add_argument("--solver", choices=["cholesky", "cg"], default="cholesky")
    p.add_argument("--tol", type=float, default=1e-10, help="CG relative tolerance")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                   help="fixed-order reduction (bit-identical results)")
    p.add_argument("--dump-tables", metavar="DIR", help="write the quadrature tables as CSV")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fraclap", description="Finite elements for the 2D fractional Laplacian.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("meshgen", help="generate a disk mesh with an exterior annulus")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--ball", type=float, default=None, help="defaults to the disk radius")
    p.add_argument("--max-triangles", type=int, default=None)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("solve", help="assemble and solve one problem")
    _add_mesh_source(p)
    _add_common(p)
    p.add_argument("--f", choices=["one", "jacobi"], default="one", dest="source")
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--dump-matrix", metavar="PATH", help="write K (CSV) and b next to it")
    p.add_argument("--grid", metavar="PATH", help="write u sampled on a regular grid")
    p.add_argument("--grid-n", type=int, default=101)
    p.add_argument("--diagnostics", action="store_true", help="report the closest disjoint pair")
    p.add_argument("-o", "--output", help="solution CSV (node_index,x,y,u)")

    p = sub.add_parser("converge", help="convergence study on the unit disk")
    _add_common(p)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--f", choices=["one", "jacobi"], default=None, dest="source",
                   help="default: one for k=0, jacobi otherwise")
    p.add_argument("--hs", type=float, nargs="+", default=list(DEFAULT_LADDER))
    p.add_argument("--ball", type=float, default=1.1)
    p.add_argument("--drop-coarsest", type=int, default=0,
                   help="leave the first N levels out of the slope fit")
    p.add_argument("--l2-band", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--energy-band", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--dofs-band", type=float, nargs=2, metavar=("LO", "HI"),
                   help="band for the L2 slope against the number of DOFs")
    p.add_argument("-o", "--output", help="rate table CSV")

    p = sub.add_parser("tables", help="dump the quadrature tables")
    p.add_argument("-o", "--output", required=True, metavar="DIR")
    return ap


def _tables_from(args):
    from .quadtables import build_tables, dump_tables

    tables = build_tables()
    if getattr(args, "dump_tables", None):
        dump_tables(tables, args.dump_tables)
    return tables


def _mesh_from(args):
    from .mesh import generate_disk_mesh, load_mesh

    gen = [args.radius, args.h, args.ball]
    if args.mesh and any(v is not None for v in gen):
        raise UsageError("give either --mesh or --radius/--h/--ball, not both")
    if args.mesh:
        return load_mesh(args.mesh)
    if any(v is None for v in gen):
        raise UsageError("a mesh source is required: --mesh, or all of --radius --h --ball")
    return generate_disk_mesh(args.radius, args.h, args.ball)


def _is_unit_disk(mesh) -> bool:
    r = np.hypot(*mesh.nodes[mesh.boundary_nodes].T)
    return len(r) > 0 and np.allclose(r, 1.0, atol=1e-9)


def cmd_meshgen(args) -> int:
    from .mesh import DEFAULT_MAX_TRIANGLES, generate_disk_mesh, save_mesh

    ball = args.radius if args.ball is None else args.ball
    mesh = generate_disk_mesh(args.radius, args.h, ball,
                              max_triangles=args.max_triangles or DEFAULT_MAX_TRIANGLES)
    save_mesh(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_nodes} nodes, {mesh.n_domain} domain triangles, "
          f"{mesh.n_aux} auxiliary triangles")
    return EXIT_OK


def cmd_solve(args) -> int:
    from .analytic import energy_error, exact_pair, l2_error
    from .assembly import assemble
    from .solver import solve, write_grid_csv, write_solution_csv

    mesh = _mesh_from(args)
    tables = _tables_from(args)
    if args.dump_matrix and mesh.n_nodes > MAX_DUMP_NODES:
        raise ValidationError(f"--dump-matrix refuses meshes above {MAX_DUMP_NODES} nodes ({mesh.n_nodes})")
    if args.source == "one":
        if args.k != 0:
            raise UsageError("--k applies to --f jacobi only")
        exact = exact_pair(0, args.s, unit_source=True)
        f = lambda x, y: np.ones_like(np.asarray(x, dtype=float))  # noqa: E731
    else:
        exact = exact_pair(args.k, args.s)
        f = exact.f
    t0 = time.perf_counter()
    system = assemble(mesh, args.s, f, tables, threads=args.threads,
                      deterministic=args.deterministic, diagnostics=args.diagnostics)
    t_asm = time.perf_counter() - t0
    t0 = time.perf_counter()
    sol = solve(system, args.solver, args.tol)
    t_sol = time.perf_counter() - t0

    print(f"N_T = {mesh.n_domain}  N_T_total = {mesh.n_triangles}  nodes = {mesh.n_nodes}  "
          f"dofs = {len(mesh.free_nodes)}")
    print(f"assembly {t_asm:.3f} s: " + ", ".join(f"{k} {v:.3f}" for k, v in system.timings.items()))
    print(f"solve ({args.solver}) {t_sol:.3f} s, relative residual {sol.residual:.3e}")
    for k, v in system.diagnostics.items():
        print(f"{k} = {v}")
    if _is_unit_disk(mesh):
        print(f"l2_error = {l2_error(mesh, sol.values, exact):.6e}")
        print(f"energy_error = {energy_error(system, sol.values, exact):.6e}")
    if args.output:
        write_solution_csv(sol, args.output)
    if args.grid:
        write_grid_csv(sol, args.grid, args.grid_n)
    if args.dump_matrix:
        from pathlib import Path

        path = Path(args.dump_matrix)
        np.savetxt(path, system.K, delimiter=",", fmt="%.17g")
        np.savetxt(path.with_name(path.stem + "_b.csv"), system.b, delimiter=",", fmt="%.17g")
    return EXIT_OK


def cmd_converge(args) -> int:
    from .analytic import convergence_study

    if len(args.hs) - args.drop_coarsest < 3:
        raise UsageError("need at least three mesh sizes in the fit")
    tables = _tables_from(args)
    unit = None if args.source is None else args.source == "one"
    if unit and args.k != 0:
        raise UsageError("--f one corresponds to k = 0")

    def progress(h, dofs, e2, ee):
        print(f"h={h:g} dofs={dofs} l2={e2:.6e} energy={ee:.6e}", flush=True)

    rt = convergence_study(args.s, args.k, args.hs, ball_radius=args.ball, unit_source=unit,
                           drop_coarsest=args.drop_coarsest, tables=tables, threads=args.threads,
                           solver=args.solver, progress=progress)
    sl = rt.slopes
    print(f"slopes vs h: l2 {sl['l2_h']:.4f}, energy {sl['energy_h']:.4f}")
    print(f"slopes vs dofs: l2 {sl['l2_dofs']:.4f}, energy {sl['energy_dofs']:.4f}")
    if args.output:
        rt.write_csv(args.output)
    bad = []
    for name, band, val in (("l2", args.l2_band, sl["l2_h"]), ("energy", args.energy_band, sl["energy_h"]),
                            ("l2-dofs", args.dofs_band, sl["l2_dofs"])):
        if band and not band[0] <= val <= band[1]:
            bad.append(f"{name} slope {val:.4f} outside [{band[0]}, {band[1]}]")
    for msg in bad:
        print(msg, file=sys.stderr)
    return EXIT_NUMERICAL if bad else EXIT_OK


def cmd_tables(args) -> int:
    from .quadtables import build_tables, dump_tables

    paths = dump_tables(build_tables(), args.output)
    print(f"wrote {len(paths)} tables to {args.output}")
    return EXIT_OK


COMMANDS = {"meshgen": cmd_meshgen, "solve": cmd_solve, "converge": cmd_converge, "tables": cmd_tables}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fraclap: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"fraclap: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FraclapError as exc:
        print(f"fraclap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"fraclap: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
