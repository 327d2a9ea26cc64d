"""Two-level overlapping Schwarz preconditioners with GenEO coarse spaces
for indefinite and non-self-adjoint elliptic problems (P1 finite elements)."""

from .assembly import Assembler, assemble_A, assemble_B, point_source_rhs
from .coeffs import ProblemCoefficients, inclusions_channels
from .decomp import DomainDecomposition, decompose
from .geneo import CoarseSpace, build_geneo, build_hgeneo, coarse_space
from .grid import Mesh, build_uniform_mesh
from .harness import ExperimentConfig, ExperimentReport, run, sweep, timestep_demo
from .krylov import GmresReport, gmres
from .precond import Preconditioner, build as build_preconditioner

__version__ = "0.1.0"

__all__ = [
    "Assembler", "assemble_A", "assemble_B", "point_source_rhs",
    "ProblemCoefficients", "inclusions_channels",
    "DomainDecomposition", "decompose",
    "CoarseSpace", "build_geneo", "build_hgeneo", "coarse_space",
    "Mesh", "build_uniform_mesh",
    "ExperimentConfig", "ExperimentReport", "run", "sweep", "timestep_demo",
    "GmresReport", "gmres",
    "Preconditioner", "build_preconditioner",
]
