"""Additive Schwarz preconditioners and the restricted variant with deflation."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .decomp import DomainDecomposition
from .geneo import CoarseSpace
from .linalg import Factorization, SingularMatrixError

PRECONDITIONERS = ("AS1", "AS2", "RAS_deflation")


class PreconditionerBuildError(RuntimeError):
    pass


class DenseLU:
    """Dense LU of the coarse matrix with a relative pivot check."""

    def __init__(self, matrix: np.ndarray, pivot_tol: float = 1e-13):
        matrix = np.asarray(matrix, dtype=float)
        self.shape = matrix.shape
        self._lu = sla.lu_factor(matrix, check_finite=True)
        piv = np.abs(np.diag(self._lu[0]))
        scale = np.abs(matrix).max() if matrix.size else 0.0
        if matrix.size and piv.min() <= pivot_tol * scale:
            raise SingularMatrixError(f"pivot {piv.min():.3e} relative to max entry {scale:.3e}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self._lu, b)


class Preconditioner:
    """z = M^{-1} r for one of AS1, AS2 or RAS_deflation.

    Local blocks are principal submatrices of B on each subdomain's internal
    dofs; the coarse block is Z^T B Z.
    """

    def __init__(self, B, decomp: DomainDecomposition, coarse: CoarseSpace | None, variant: str):
        if variant not in PRECONDITIONERS:
            raise PreconditionerBuildError(f"unknown preconditioner {variant!r}")
        needs_coarse = variant != "AS1"
        if needs_coarse and coarse is None:
            raise PreconditionerBuildError(f"{variant} needs a coarse space")
        self.variant = variant
        self.B = sp.csr_matrix(B)
        self.n = self.B.shape[0]
        self.decomp = decomp
        self.coarse = coarse if needs_coarse else None
        self.index = [s.internal for s in decomp.subdomains]
        self.weights = [s.weights for s in decomp.subdomains]
        self.local = [self._factor_local(j, idx) for j, idx in enumerate(self.index)]
        self.Z = None
        self.coarse_lu = None
        if self.coarse is not None and self.coarse.size:
            self.Z = self.coarse.Z.tocsc()
            B0 = (self.Z.T @ (self.B @ self.Z)).toarray()
            try:
                self.coarse_lu = DenseLU(B0)
            except (SingularMatrixError, ValueError) as exc:
                raise PreconditionerBuildError(f"coarse matrix of size {B0.shape[0]} is singular: {exc}") from exc

    def _factor_local(self, j: int, idx: np.ndarray) -> Factorization:
        Bj = self.B[idx][:, idx]
        try:
            return Factorization(Bj)
        except SingularMatrixError as exc:
            raise PreconditionerBuildError(f"local matrix of subdomain {j} is singular: {exc}") from exc

    @property
    def coarse_size(self) -> int:
        return 0 if self.Z is None else self.Z.shape[1]

    def coarse_correction(self, r: np.ndarray) -> np.ndarray:
        if self.Z is None:
            return np.zeros(self.n)
        return self.Z @ self.coarse_lu.solve(self.Z.T @ r)

    def local_sum(self, r: np.ndarray, weighted: bool = False) -> np.ndarray:
        z = np.zeros(self.n)
        for idx, fac, w in zip(self.index, self.local, self.weights):
            y = fac.solve(r[idx])
            z[idx] += w * y if weighted else y
        return z

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.variant == "RAS_deflation":
            q = self.coarse_correction(r)
            return q + self.local_sum(r - self.B @ q, weighted=True)
        z = self.local_sum(r)
        if self.variant == "AS2":
            z += self.coarse_correction(r)
        return z

    __call__ = apply

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.n, self.n), matvec=self.apply, dtype=float)


def build(B, decomp: DomainDecomposition, coarse: CoarseSpace | None = None, variant: str = "AS2") -> Preconditioner:
    return Preconditioner(B, decomp, coarse, variant)


def operator_T_action(B, precond: Preconditioner, u: np.ndarray) -> np.ndarray:
    """T u = M^{-1} B u, the preconditioned operator seen in the A inner product."""
    return precond.apply(B @ u)
