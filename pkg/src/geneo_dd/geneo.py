"""GenEO-type coarse spaces built from local generalized eigenproblems.

For every subdomain j we solve  K_j p = lam M_j p  with M_j = X_j A_j X_j,
where A_j is the local Neumann energy matrix and X_j the diagonal
partition-of-unity operator (weights on internal dofs, zero elsewhere).
K_j = A_j gives the standard space, K_j = B_j (symmetric indefinite)
the H-GenEO variant. Eigenpairs with lam < lam_max are kept and each
kept p contributes the coarse column X_j p, extended by zero.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .decomp import DomainDecomposition
from .linalg import EigenPairs, EigensolverError, dense_generalized_eig, shift_invert_smallest

log = logging.getLogger(__name__)

VARIANTS = ("delta_geneo", "h_geneo")


class VariantUnsupportedError(ValueError):
    pass


@dataclass(frozen=True)
class LocalModes:
    """Kept eigenpairs of one subdomain; vectors are M_j-orthonormal over ``dofs``."""

    values: np.ndarray
    vectors: np.ndarray
    next_value: float
    A: sp.csr_matrix
    xdiag: np.ndarray

    @property
    def m(self) -> int:
        return len(self.values)

    def M_apply(self, v: np.ndarray) -> np.ndarray:
        return self.xdiag * (self.A @ (self.xdiag * v))


@dataclass
class CoarseSpace:
    Z: sp.csc_matrix
    m: np.ndarray
    next_values: np.ndarray
    theta: float
    variant: str
    lambda_max: float
    local: list[LocalModes] = field(repr=False, default_factory=list)

    @property
    def size(self) -> int:
        return self.Z.shape[1]

    @property
    def average_per_subdomain(self) -> float:
        return float(self.m.mean()) if len(self.m) else 0.0

    def column_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.m)])

    def write_summary_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subdomain", "m", "lambda_min", "lambda_max_kept", "lambda_next"])
            for j, loc in enumerate(self.local):
                lo = f"{loc.values.min():.10g}" if loc.m else ""
                hi = f"{loc.values.max():.10g}" if loc.m else ""
                w.writerow([j, loc.m, lo, hi, f"{loc.next_value:.10g}"])
            w.writerow(["total", self.size, "", "", ""])
            w.writerow(["average", f"{self.average_per_subdomain:.4g}", "", "", ""])


def _solve_pencil(K, M, lambda_max: float, solver: str) -> EigenPairs:
    if solver == "dense":
        ep = dense_generalized_eig(K, M)
        keep = ep.values < lambda_max
        rest = ep.values[~keep]
        return EigenPairs(ep.values[keep], ep.vectors[:, keep], ep.residuals[keep], ep.n_infinite,
                          float(rest.min()) if rest.size else np.inf)
    if solver == "lanczos":
        return shift_invert_smallest(K, M, lambda_max)
    raise ValueError(f"unknown eigensolver {solver!r}")


def _build(decomp: DomainDecomposition, lhs, local_A, lambda_max: float, variant: str,
           solver: str) -> CoarseSpace:
    if not lambda_max > 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    if len(local_A) != decomp.n_subdomains or len(lhs) != decomp.n_subdomains:
        raise ValueError("one local matrix per subdomain is required")
    n = decomp.mesh.n_dofs
    rows, cols, vals = [], [], []
    local, ms, nexts = [], [], []
    col = 0
    for s, K, A in zip(decomp.subdomains, lhs, local_A):
        A = sp.csr_matrix(A)
        if A.shape != (len(s.dofs), len(s.dofs)):
            raise ValueError(f"subdomain {s.index}: local matrix shape {A.shape} does not match {len(s.dofs)} dofs")
        x = s.pou_diagonal
        X = sp.diags(x)
        M = (X @ A @ X).tocsr()
        try:
            ep = _solve_pencil(K, M, lambda_max, solver)
        except EigensolverError as exc:
            raise EigensolverError(f"subdomain {s.index}: {exc}") from exc
        local.append(LocalModes(ep.values, ep.vectors, ep.next_value, A, x))
        ms.append(len(ep))
        nexts.append(ep.next_value)
        for k in range(len(ep)):
            xp = x * ep.vectors[:, k]
            nz = np.flatnonzero(xp)
            rows.append(s.dofs[nz])
            cols.append(np.full(nz.size, col))
            vals.append(xp[nz])
            col += 1
    if col:
        Z = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, col))
    else:
        Z = sp.csc_matrix((n, 0))
    nexts = np.asarray(nexts, dtype=float)
    lo = nexts.min() if len(nexts) else np.inf
    theta = 0.0 if not np.isfinite(lo) else 1.0 / lo
    log.info("%s coarse space: n0=%d, theta=%.4g", variant, col, theta)
    return CoarseSpace(Z, np.asarray(ms, dtype=np.int64), nexts, theta, variant, lambda_max, local)


def build_geneo(decomp: DomainDecomposition, local_A, lambda_max: float = 0.5,
                solver: str = "lanczos") -> CoarseSpace:
    """Coarse space from the pencils (A_j, X_j A_j X_j)."""
    return _build(decomp, local_A, local_A, lambda_max, "delta_geneo", solver)


def build_hgeneo(decomp: DomainDecomposition, local_B, local_A, lambda_max: float = 0.5,
                 solver: str = "lanczos") -> CoarseSpace:
    """Coarse space from the pencils (B_j, X_j A_j X_j); B_j must be symmetric.

    Negative eigenvalues are kept along with everything below ``lambda_max``.
    """
    local_B = [sp.csr_matrix(B) for B in local_B]
    for j, B in enumerate(local_B):
        scale = max(abs(B).max(), 1.0) if B.nnz else 1.0
        if B.nnz and abs(B - B.T).max() > 1e-10 * scale:
            raise VariantUnsupportedError(f"subdomain {j}: H-GenEO needs a symmetric local operator (zero convection)")
    return _build(decomp, local_B, local_A, lambda_max, "h_geneo", solver)


def coarse_projection_error(v: np.ndarray, coarse: CoarseSpace, A) -> float:
    """min over z in span(Z) of (v - z)^T A (v - z), by A-orthogonal projection."""
    v = np.asarray(v, dtype=float)
    if coarse.size == 0:
        return float(v @ (A @ v))
    Z = coarse.Z
    AZ = (A @ Z)
    AZ = AZ.toarray() if sp.issparse(AZ) else np.asarray(AZ)
    G = Z.T @ AZ
    G = 0.5 * (G + G.T)
    rhs = AZ.T @ v
    try:
        c = sla.cho_factor(G)
        y = sla.cho_solve(c, rhs)
        # Cholesky can succeed on a numerically singular Gram matrix
        d = np.diag(c[0])
        if d.min() ** 2 < 1e-13 * d.max() ** 2:
            raise np.linalg.LinAlgError
    except (np.linalg.LinAlgError, sla.LinAlgError):
        warnings.warn("coarse Gram matrix is rank deficient; using a least-squares solve", RuntimeWarning)
        y = sla.lstsq(G, rhs, cond=1e-12)[0]
    e = v - Z @ y
    return float(e @ (A @ e))


def local_projection(v_local: np.ndarray, coarse: CoarseSpace, j: int) -> np.ndarray:
    """Sum over kept modes of (X v, X p_l)_{A_j} p_l, for v over the subdomain dofs."""
    loc = coarse.local[j]
    if loc.m == 0:
        return np.zeros_like(v_local, dtype=float)
    P = loc.vectors
    return P @ (P.T @ loc.M_apply(v_local))


def stable_decomposition(v: np.ndarray, coarse: CoarseSpace, decomp: DomainDecomposition):
    """Split v = z0 + sum_j R_j^T z_j.

    z0 = sum_j X_j Pi_j v|_j (global vector); z_j = X_j (v|_j - Pi_j v|_j),
    returned over the subdomain dofs (zero off the internal ones).
    """
    n = decomp.mesh.n_dofs
    z0 = np.zeros(n)
    parts = []
    for s, loc in zip(decomp.subdomains, coarse.local):
        vj = v[s.dofs]
        pj = local_projection(vj, coarse, s.index)
        z0[s.dofs] += loc.xdiag * pj
        parts.append(loc.xdiag * (vj - pj))
    return z0, parts


def beta0(z: float) -> float:
    return 2.0 * np.sqrt(1.0 + z * z)


def subdomain_of_column(coarse: CoarseSpace) -> np.ndarray:
    return np.repeat(np.arange(len(coarse.m)), coarse.m)


def coarse_space(decomp: DomainDecomposition, assembler, variant: str = "delta_geneo",
                 lambda_max: float = 0.5, solver: str = "lanczos") -> CoarseSpace:
    """Assemble the local matrices with ``assembler`` and build the chosen variant."""
    local_A = [assembler.A(s.elements, s.dofs) for s in decomp.subdomains]
    if variant == "delta_geneo":
        return build_geneo(decomp, local_A, lambda_max, solver)
    if variant == "h_geneo":
        local_B = [assembler.B(s.elements, s.dofs) for s in decomp.subdomains]
        return build_hgeneo(decomp, local_B, local_A, lambda_max, solver)
    raise VariantUnsupportedError(f"unknown coarse space variant {variant!r}")


__all__ = [
    "CoarseSpace", "LocalModes", "VariantUnsupportedError", "VARIANTS",
    "build_geneo", "build_hgeneo", "coarse_projection_error", "local_projection",
    "stable_decomposition", "beta0", "subdomain_of_column", "coarse_space",
]
