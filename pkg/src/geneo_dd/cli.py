"""Command line entry point: ``geneo-dd {run,sweep,timestep,theory}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness, theory
from .harness import ExperimentConfig, StageError

_D = ExperimentConfig()

# (flag, config field, help)
_FLAGS = [
    ("--problem", "problem", f"indefinite | convection | timestep (default {_D.problem})"),
    ("--kappa", "kappa", f"wavenumber-like shift, reaction c = -kappa (default {_D.kappa:g})"),
    ("--convection", "convection", f"convection field id (default {_D.convection})"),
    ("--b", "b", f"convection magnitude (default {_D.b:g})"),
    ("--n", "n", f"radial oscillation parameter (default {_D.n})"),
    ("--m", "m", f"divergence oscillation parameter (default {_D.m})"),
    ("--dt", "dt", f"time step (default {_D.dt:g})"),
    ("--dt0", "dt0", f"median time step used in the coarse space (default {_D.dt0:g})"),
    ("--diffusion", "diffusion", f"homogeneous | inclusions (default {_D.diffusion})"),
    ("--a-max", "a_max", f"diffusion contrast for inclusions (default {_D.a_max:g})"),
    ("--rect", "rect", "domain x0,x1,y0,y1 (default 0,1,0,1)"),
    ("--nx", "nx", f"cells per unit edge, h = width/nx (default {_D.nx})"),
    ("--subdomains", "subdomains", f"number of subdomains, a perfect square (default {_D.subdomains})"),
    ("--overlap", "overlap", f"minimal | generous (default {_D.overlap})"),
    ("--layers", "layers", f"element layers for minimal overlap (default {_D.layers})"),
    ("--delta", "delta", "overlap width for generous overlap, e.g. 1/100"),
    ("--lambda-max", "lambda_max", f"eigenvalue threshold (default {_D.lambda_max:g})"),
    ("--preconditioner", "preconditioner", f"AS1 | AS2 | RAS_deflation (default {_D.preconditioner})"),
    ("--coarse", "coarse", f"delta_geneo | h_geneo (default {_D.coarse})"),
    ("--eigensolver", "eigensolver", f"lanczos | dense (default {_D.eigensolver})"),
    ("--tol", "tol", f"relative residual tolerance (default {_D.tol:g})"),
    ("--maxit", "maxit", f"maximum GMRES iterations (default {_D.maxit})"),
    ("--seed", "seed", f"seed for theory probes (default {_D.seed})"),
]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file with [section] headers")
    for flag, _, help_ in _FLAGS:
        p.add_argument(flag, dest="cfg_" + flag[2:].replace("-", "_"), default=None, help=help_)
    p.add_argument("--csv", help="write results as CSV to this path")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geneo-dd", description="Two-level Schwarz with GenEO coarse spaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one experiment")
    _common(p)
    p.add_argument("--export-matrix", help="write the system matrix in Matrix Market format")
    p.add_argument("--history", help="write the GMRES residual history as CSV")

    p = sub.add_parser("sweep", help="cartesian parameter sweep")
    _common(p)
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...",
                   help="parameter list; repeat for more axes")

    p = sub.add_parser("timestep", help="one backward-Euler step per dt, preconditioner built once")
    _common(p)
    p.add_argument("--dt-list", default="1000,0.1,0.001", help="comma separated time steps")

    p = sub.add_parser("theory", help="explicit constants and field-of-values probes")
    _common(p)
    p.add_argument("--samples", type=int, default=200, help="number of random probes")
    p.add_argument("--report", help="write the key = value theory report here")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = harness.load_config(args.config, cfg)
    given = {field: getattr(args, "cfg_" + flag[2:].replace("-", "_")) for flag, field, _ in _FLAGS}
    given = {k: v for k, v in given.items() if v is not None}
    return harness.config_from_mapping(given, cfg)


def _parse_grid(items) -> dict:
    grid = {}
    for item in items:
        if "=" not in item:
            raise ValueError(f"grid entry {item!r} is not KEY=V1,V2,...")
        key, vals = item.split("=", 1)
        name = key.strip().lower().replace("-", "_")
        name = harness._ALIASES.get(name, name)
        if name not in harness._field_types() or name == "rect":
            raise ValueError(f"unknown grid key {key!r}")
        grid[name] = [harness._convert(name, v) for v in vals.split(",") if v.strip()]
    return grid


def _print_report(rep) -> None:
    print(f"iterations={rep.iterations_label} converged={rep.converged} coarse_size={rep.coarse_size} "
          f"avg_per_subdomain={rep.avg_per_subdomain:.3g} k0={rep.k0} theta={rep.theta:.4g} "
          f"n_dofs={rep.n_dofs} true_residual={rep.true_residual:.2e}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        try:
            cfg = _config(args)
        except (ValueError, OSError) as exc:
            raise StageError("config", str(exc)) from exc

        if args.command == "run":
            rep = harness.run(cfg, export_matrix=args.export_matrix)
            _print_report(rep)
            _write(args, [rep.row()])
            if args.history:
                _output(lambda: rep.gmres.write_history_csv(args.history))

        elif args.command == "sweep":
            try:
                grid = _parse_grid(args.grid)
            except ValueError as exc:
                raise StageError("config", f"bad grid: {exc}") from exc
            rows = harness.sweep(cfg, grid)
            for r in rows:
                print(", ".join(f"{k}={r[k]}" for k in list(grid) + ["iterations", "coarse_size", "error"]))
            _write(args, rows)

        elif args.command == "timestep":
            try:
                dts = [float(v) for v in args.dt_list.split(",") if v.strip()]
            except ValueError as exc:
                raise StageError("config", f"bad --dt-list: {exc}") from exc
            reps = harness.timestep_demo(cfg, dts)
            for rep in reps:
                print(f"dt={rep.config.dt:g} dt0={rep.config.dt0:g} ", end="")
                _print_report(rep)
            _write(args, [r.row() for r in reps])

        elif args.command == "theory":
            rep = harness.run_theory(cfg, n_samples=args.samples)
            _print_report(rep)
            for k, v in rep.theory.as_dict().items():
                print(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}")
            print(f"min_ratio = {rep.probe.min_ratio:.6g}")
            print(f"max_norm_ratio = {rep.probe.max_norm_ratio:.6g}")
            print(f"elman_bound_holds = {rep.elman_ok}")
            if args.report:
                _output(lambda: theory.write_report(args.report, rep.theory, rep.probe,
                                                    {"elman_bound_holds": rep.elman_ok}))
            _write(args, [rep.row()])
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _output(fn) -> None:
    try:
        fn()
    except OSError as exc:
        raise StageError("output", str(exc)) from exc


def _write(args, rows) -> None:
    if args.csv:
        _output(lambda: harness.write_rows(args.csv, rows))


if __name__ == "__main__":
    sys.exit(main())
