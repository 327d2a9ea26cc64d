"""Experiment pipeline: configuration, single runs, sweeps and time stepping."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import itertools
import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import assembly, coeffs as cf, decomp as dd, geneo, krylov, precond, theory
from .grid import build_uniform_mesh

log = logging.getLogger(__name__)

PROBLEMS = ("indefinite", "convection", "timestep")
DIFFUSIONS = ("homogeneous", "inclusions")


class StageError(RuntimeError):
    """A pipeline failure tagged with the stage it happened in."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class _Stage:
    def __init__(self, name: str, times: dict | None = None):
        self.name = name
        self.times = times

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        if self.times is not None:
            self.times[self.name] = self.times.get(self.name, 0.0) + time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, f"{type(exc).__name__}: {exc}") from exc
        return False


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "indefinite"
    kappa: float = 0.0
    convection: str = "zero_div"
    b: float = 0.0
    n: int = 0
    m: int = 0
    dt: float = 1.0
    dt0: float = 1.0
    diffusion: str = "inclusions"
    a_max: float = 50.0
    rect: tuple = (0.0, 1.0, 0.0, 1.0)
    nx: int = 200
    subdomains: int = 16
    overlap: str = "minimal"
    layers: int = 1
    delta: float | None = None
    lambda_max: float = 0.5
    preconditioner: str = "AS2"
    coarse: str = "delta_geneo"
    eigensolver: str = "lanczos"
    tol: float = 1e-6
    maxit: int = 1000
    seed: int = 0

    @property
    def h(self) -> float:
        return (self.rect[1] - self.rect[0]) / self.nx

    @property
    def ny(self) -> int:
        return int(round((self.rect[3] - self.rect[2]) / self.h))

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.diffusion not in DIFFUSIONS:
            raise ValueError(f"diffusion must be one of {DIFFUSIONS}, got {self.diffusion!r}")
        if self.problem != "indefinite" and self.convection not in cf.CONVECTION_FIELDS:
            raise ValueError(f"unknown convection field {self.convection!r}")
        if self.preconditioner not in precond.PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {precond.PRECONDITIONERS}")
        if self.coarse not in geneo.VARIANTS:
            raise ValueError(f"coarse space must be one of {geneo.VARIANTS}")
        if self.problem == "timestep" and not (self.dt > 0 and self.dt0 > 0):
            raise ValueError("time steps must be positive")
        if self.coarse == "h_geneo" and self.problem != "indefinite":
            raise ValueError("H-GenEO is only available for the indefinite problem (no convection)")
        if self.nx < 1 or self.subdomains < 1 or self.maxit < 1 or not self.tol > 0:
            raise ValueError("nx, subdomains, maxit and tol must be positive")

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    iterations: int
    converged: bool
    coarse_size: int
    avg_per_subdomain: float
    k0: int
    theta: float
    n_dofs: int
    true_residual: float
    times: dict = field(default_factory=dict)
    theory: theory.TheoryConstants | None = None
    probe: theory.FieldOfValues | None = None
    elman_ok: bool | None = None
    gmres: krylov.GmresReport | None = field(default=None, repr=False)

    @property
    def iterations_label(self) -> str:
        return str(self.iterations) if self.converged else f"{self.config.maxit}+"

    def row(self) -> dict:
        c = self.config
        out = {k: _fmt(getattr(c, k)) for k in _ROW_CONFIG_KEYS}
        out.update({
            "iterations": self.iterations_label,
            "converged": self.converged,
            "coarse_size": self.coarse_size,
            "avg_per_subdomain": f"{self.avg_per_subdomain:.4g}",
            "k0": self.k0,
            "theta": f"{self.theta:.6g}",
            "n_dofs": self.n_dofs,
            "true_residual": f"{self.true_residual:.3e}",
            "error": "",
        })
        for k in ("assembly", "eigensolve", "factorization", "gmres"):
            out[f"time_{k}"] = f"{self.times.get(k, 0.0):.3f}"
        return out


_ROW_CONFIG_KEYS = ("problem", "kappa", "convection", "b", "n", "m", "dt", "dt0", "diffusion", "a_max",
                    "nx", "subdomains", "overlap", "delta", "lambda_max", "preconditioner", "coarse")
ROW_FIELDS = list(_ROW_CONFIG_KEYS) + ["iterations", "converged", "coarse_size", "avg_per_subdomain", "k0",
                                      "theta", "n_dofs", "true_residual", "error", "time_assembly",
                                      "time_eigensolve", "time_factorization", "time_gmres"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:g}"
    return v


# --- configuration files ----------------------------------------------------

def _field_types() -> dict:
    return {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(name: str, raw: str):
    kind = _field_types()[name]
    raw = raw.strip()
    if name == "rect":
        vals = tuple(float(v) for v in raw.replace(",", " ").split())
        if len(vals) != 4:
            raise ValueError("rect needs four numbers x0 x1 y0 y1")
        return vals
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        if raw.lower() in ("", "none"):
            return None
        if "/" in raw:
            num, den = raw.split("/")
            return float(num) / float(den)
        return float(raw)
    low = raw.lower()
    return {"as1": "AS1", "as2": "AS2", "ras_deflation": "RAS_deflation"}.get(low, low)


_ALIASES = {"n_subdomains": "subdomains", "variant": "preconditioner", "geneo": "coarse", "h": "nx"}


def config_from_mapping(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build a config from string values; keys are matched case-insensitively."""
    base = base or ExperimentConfig()
    known = _field_types()
    kw = {}
    for key, raw in values.items():
        k = key.strip().lower().replace("-", "_")
        k = _ALIASES.get(k, k)
        if k not in known:
            raise ValueError(f"unknown configuration key {key!r}")
        if key.strip().lower() == "h":
            h = _convert("delta", raw)
            kw["nx"] = int(round((base.rect[1] - base.rect[0]) / h))
            continue
        kw[k] = _convert(k, raw)
    return base.replace(**kw)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read a key = value file with [section] headers; section names are informational."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    parser.read_string(text, source=str(path))
    flat = {}
    for section in parser.sections():
        for k, v in parser.items(section):
            flat[k] = v
    return config_from_mapping(flat, base)


# --- pipeline -----------------------------------------------------------------

def diffusion_field(config: ExperimentConfig) -> cf.ScalarField:
    if config.diffusion == "homogeneous":
        return cf.constant(1.0)
    return cf.inclusions_channels(config.a_max)


def problem_coefficients(config: ExperimentConfig) -> cf.ProblemCoefficients:
    a = diffusion_field(config)
    if config.problem == "indefinite":
        c_plus, c_minus = cf.split_reaction(-config.kappa, "nonneg_part")
        return cf.ProblemCoefficients(a, cf.zero_vector(), c_plus, c_minus)
    field_ = cf.CONVECTION_FIELDS[config.convection](config.b, config.n, config.m)
    if config.problem == "convection":
        return cf.ProblemCoefficients(a, field_, cf.constant(0.0), cf.constant(0.0))
    c_plus, c_minus = cf.split_reaction(0.0, "timestep", config.dt, config.dt0)
    return cf.ProblemCoefficients(a, field_, c_plus, c_minus)


@dataclass
class Pipeline:
    """Intermediate objects of one experiment, kept for reuse and inspection."""

    config: ExperimentConfig
    mesh: object
    coeffs: cf.ProblemCoefficients
    assembler: assembly.Assembler
    B: sp.csr_matrix
    decomposition: dd.DomainDecomposition
    coarse: geneo.CoarseSpace | None
    preconditioner: precond.Preconditioner
    rhs: np.ndarray
    times: dict


def build_pipeline(config: ExperimentConfig) -> Pipeline:
    times: dict = {}
    with _Stage("config"):
        config.validate()
    with _Stage("mesh"):
        mesh = build_uniform_mesh(config.rect, config.nx, config.ny)
    with _Stage("coefficients"):
        co = problem_coefficients(config)
        co.validate(mesh.barycenters())
    with _Stage("assembly", times):
        asm = assembly.Assembler(mesh, co)
        B = asm.B()
        rhs = assembly.point_source_rhs(mesh)
    with _Stage("decomposition", times):
        decomp = dd.decompose(mesh, config.subdomains, config.overlap, config.layers, config.delta)
    coarse = None
    if config.preconditioner != "AS1":
        with _Stage("eigensolve", times):
            coarse = geneo.coarse_space(decomp, asm, config.coarse, config.lambda_max, config.eigensolver)
    with _Stage("factorization", times):
        pre = precond.build(B, decomp, coarse, config.preconditioner)
    return Pipeline(config, mesh, co, asm, B, decomp, coarse, pre, rhs, times)


def _solve(pipe: Pipeline, pre: precond.Preconditioner, B) -> krylov.GmresReport:
    with _Stage("gmres", pipe.times):
        return krylov.gmres(B, pre.apply, pipe.rhs, tol=pipe.config.tol, maxit=pipe.config.maxit)


def _report(pipe: Pipeline, res: krylov.GmresReport) -> ExperimentReport:
    coarse = pipe.coarse
    return ExperimentReport(
        config=pipe.config,
        iterations=res.iterations,
        converged=res.converged,
        coarse_size=coarse.size if coarse else 0,
        avg_per_subdomain=coarse.average_per_subdomain if coarse else 0.0,
        k0=pipe.decomposition.k0,
        theta=coarse.theta if coarse else float("nan"),
        n_dofs=pipe.mesh.n_dofs,
        true_residual=res.final_true_residual,
        times=dict(pipe.times),
        gmres=res,
    )


def run(config: ExperimentConfig, export_matrix=None) -> ExperimentReport:
    """Assemble, decompose, build the preconditioner and solve with GMRES."""
    pipe = build_pipeline(config)
    if export_matrix:
        with _Stage("output"):
            assembly.export_matrix_market(export_matrix, pipe.B, comment="system matrix B (free dofs)")
    res = _solve(pipe, pipe.preconditioner, pipe.B)
    log.info("run: %d iterations, n0=%d", res.iterations, pipe.coarse.size if pipe.coarse else 0)
    return _report(pipe, res)


def run_theory(config: ExperimentConfig, n_samples: int = 200, cstab_iters: int = 20) -> ExperimentReport:
    """Run plus the explicit constants, field-of-values probes and the GMRES rate check.

    The rate check runs left-preconditioned GMRES in the A inner product.
    """
    config = config.replace(preconditioner="AS2")
    pipe = build_pipeline(config)
    with _Stage("theory", pipe.times):
        A = pipe.assembler.A()
        mass = assembly.assemble_mass(pipe.mesh)
        cstar = theory.estimate_cstab_star(pipe.B, A, mass, maxiter=cstab_iters, seed=config.seed)
        consts = theory.compute_constants(pipe.coeffs, pipe.decomposition, pipe.coarse.theta, cstar)
        probe = theory.probe_field_of_values(pipe.B, pipe.preconditioner, A, n_samples, config.seed)
        weighted = krylov.gmres(pipe.B, pipe.preconditioner.apply, pipe.rhs, tol=config.tol,
                                maxit=config.maxit, inner=A, side="left")
        elman_ok = krylov.elman_rate_check(weighted, consts.c1, consts.c2) if consts.c1 > 0 else None
    res = _solve(pipe, pipe.preconditioner, pipe.B)
    rep = _report(pipe, res)
    rep.theory, rep.probe, rep.elman_ok = consts, probe, elman_ok
    return rep


def _grid_configs(base: ExperimentConfig, grid: dict):
    if not grid or any(len(v) == 0 for v in grid.values()):
        return
    keys = list(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        yield dict(zip(keys, combo))


def sweep(base: ExperimentConfig, grid: dict, csv_path=None) -> list[dict]:
    """Run every combination of the parameter lists in ``grid``.

    Failures are recorded in the row's ``error`` column and the sweep goes on.
    """
    rows = []
    for combo in _grid_configs(base, grid):
        try:
            cfg = base.replace(**combo)
            rows.append(run(cfg).row())
        except (StageError, TypeError, ValueError) as exc:
            log.warning("sweep entry %s failed: %s", combo, exc)
            row = {k: "" for k in ROW_FIELDS}
            row.update({k: _fmt(v) for k, v in combo.items() if k in row})
            row["error"] = str(exc)
            rows.append(row)
    if csv_path is not None:
        write_rows(csv_path, rows)
    return rows


def write_rows(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def timestep_demo(config: ExperimentConfig, dts, dt0: float | None = None) -> list[ExperimentReport]:
    """One backward-Euler step per dt with a preconditioner built once.

    The coarse space uses c+ = 1/dt0. For each dt only the mass term
    (1/dt - 1/dt0) of B changes; local and coarse blocks are refactorized
    while the coarse basis Z is reused.
    """
    dt0 = config.dt0 if dt0 is None else dt0
    dts = list(dts)
    if not dts:
        return []
    with _Stage("config"):
        if not dt0 > 0 or any(not dt > 0 for dt in dts):
            raise ValueError("time steps must be positive")
    base = config.replace(problem="timestep", dt=dt0, dt0=dt0)
    pipe = build_pipeline(base)
    with _Stage("assembly", pipe.times):
        mass = pipe.assembler.mass_matrix()
    reports = []
    for dt in dts:
        times = {k: v for k, v in pipe.times.items()}
        with _Stage("factorization", times):
            B = (pipe.B + (1.0 / dt - 1.0 / dt0) * mass).tocsr()
            pre = precond.build(B, pipe.decomposition, pipe.coarse, config.preconditioner)
        with _Stage("gmres", times):
            res = krylov.gmres(B, pre.apply, pipe.rhs, tol=config.tol, maxit=config.maxit)
        step = dataclasses.replace(pipe, config=base.replace(dt=dt), B=B, preconditioner=pre, times=times)
        reports.append(_report(step, res))
    return reports
