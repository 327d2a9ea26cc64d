"""Sparse LU, a dense generalized eigen oracle, and shift-invert Lanczos."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class SingularMatrixError(ArithmeticError):
    pass


class SymmetryError(ValueError):
    pass


class EigensolverError(RuntimeError):
    pass


class Factorization:
    """Sparse LU with partial pivoting (SuperLU) behind ``solve``/``solve_transpose``."""

    def __init__(self, matrix, pivot_tol: float = 1e-14):
        A = sp.csc_matrix(matrix)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        scale = abs(A).max() if A.nnz else 0.0
        if scale == 0.0:
            raise SingularMatrixError("zero matrix")
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        piv = np.abs(self._lu.U.diagonal())
        if piv.min() < pivot_tol * scale:
            raise SingularMatrixError(f"pivot {piv.min():.3e} below {pivot_tol:g} * max|A| = {pivot_tol * scale:.3e}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))

    def solve_transpose(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float), trans="T")


def sparse_lu(matrix) -> Factorization:
    return Factorization(matrix)


@dataclass
class EigenPairs:
    """Ascending finite eigenvalues of a symmetric pencil with M-orthonormal vectors."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    n_infinite: int = 0
    next_value: float = np.inf
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)


def _check_symmetric(A, name: str, tol: float = 1e-12) -> None:
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > tol * scale:
        raise SymmetryError(f"{name} is not symmetric")


def _residuals(A, M, values, vectors) -> np.ndarray:
    if len(values) == 0:
        return np.zeros(0)
    nA = spla.norm(A, 1) if sp.issparse(A) else np.abs(A).sum(axis=0).max()
    nM = spla.norm(M, 1) if sp.issparse(M) else np.abs(M).sum(axis=0).max()
    R = A @ vectors - (M @ vectors) * values
    denom = (nA + np.abs(values) * nM) * np.linalg.norm(vectors, axis=0)
    return np.linalg.norm(R, axis=0) / np.where(denom > 0, denom, 1.0)


def dense_generalized_eig(A, M, null_tol: float = 1e-10) -> EigenPairs:
    """All finite eigenpairs of A p = lam M p, M symmetric positive semidefinite.

    The null space of M is eliminated by a Schur complement; eigenvalues at
    infinity are dropped and counted.
    """
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    _check_symmetric(A, "A")
    _check_symmetric(M, "M")
    d, Q = np.linalg.eigh(0.5 * (M + M.T))
    thr = null_tol * max(np.abs(d).max(), np.finfo(float).tiny)
    rng = d > thr
    Qr, Q0, dr = Q[:, rng], Q[:, ~rng], d[rng]
    S = Qr.T @ A @ Qr
    Y = None
    if Q0.shape[1]:
        A00 = Q0.T @ A @ Q0
        Y = np.linalg.solve(A00, Q0.T @ A @ Qr)
        S = S - (Qr.T @ A @ Q0) @ Y
    scale = 1.0 / np.sqrt(dr)
    K = scale[:, None] * S * scale[None, :]
    lam, U = np.linalg.eigh(0.5 * (K + K.T))
    x = scale[:, None] * U
    P = Qr @ x
    if Y is not None:
        P -= Q0 @ (Y @ x)
    return EigenPairs(lam, P, _residuals(A, M, lam, P), n_infinite=int((~rng).sum()))


def _factor_shifted(A, M, sigma: float, retries: int = 3) -> tuple[Factorization, float]:
    last = None
    for _ in range(retries + 1):
        try:
            return Factorization(sp.csc_matrix(A - sigma * M)), sigma
        except SingularMatrixError as exc:
            last = exc
            log.debug("shifted factorization failed at sigma=%g, halving", sigma)
            sigma *= 0.5
    raise EigensolverError(f"could not factor A - sigma M ({last}); try another shift")


def _lanczos_run(op, M, start, locked, max_steps, lam_from_theta, lam_cut, tol, check_every):
    """One Lanczos run in the M inner product with full reorthogonalization.

    Returns Ritz values (lambda scale), Ritz vectors, convergence flags and
    whether the Krylov space became invariant.
    """
    n = start.shape[0]

    def deflate(w):
        if locked is not None:
            for _ in range(2):
                w = w - locked @ (locked.T @ (M @ w))
        return w

    n0 = np.sqrt(max(start @ (M @ start), 0.0))
    q = deflate(start)
    Mq = M @ q
    nq = np.sqrt(max(q @ Mq, 0.0))
    if nq <= 1e-10 * n0:
        return None     # locked vectors already span the whole range
    V = np.empty((n, min(max_steps, n) + 1))
    MV = np.empty_like(V)
    V[:, 0], MV[:, 0] = q / nq, Mq / nq
    alpha, beta = [], []
    invariant = False
    prev_count = -1
    k = 0
    while True:
        w = deflate(op(V[:, k]))
        a = MV[:, k] @ w
        w = w - a * V[:, k]
        if k > 0:
            w = w - beta[-1] * V[:, k - 1]
        for _ in range(2):
            w = w - V[:, : k + 1] @ (MV[:, : k + 1].T @ w)
        Mw = M @ w
        b = np.sqrt(max(w @ Mw, 0.0))
        alpha.append(a)
        k += 1
        scale = max(abs(x) for x in alpha)
        if b <= 1e-12 * scale or k >= V.shape[1] - 1:
            invariant = b <= 1e-12 * scale
            beta.append(b)
            break
        beta.append(b)
        V[:, k], MV[:, k] = w / b, Mw / b
        if k % check_every == 0:
            theta, S = sla.eigh_tridiagonal(np.array(alpha), np.array(beta[:-1]))
            lam = lam_from_theta(theta)
            conv = np.abs(b * S[-1, :]) <= tol * np.abs(theta)
            wanted = lam < lam_cut
            above = np.flatnonzero(~wanted & (lam >= lam_cut))
            nxt_ok = above.size == 0 or conv[above[np.argmin(lam[above])]]
            count = int((wanted & conv).sum())
            if np.all(conv[wanted]) and nxt_ok and count == prev_count:
                break
            prev_count = count
    if k == 1:
        theta, S = np.array(alpha), np.ones((1, 1))
    else:
        theta, S = sla.eigh_tridiagonal(np.array(alpha), np.array(beta[:-1]))
    conv = invariant | (np.abs(beta[-1] * S[-1, :]) <= tol * np.abs(theta))
    # Ritz values at roundoff level stem from null(M) directions (lambda = inf)
    conv &= np.abs(theta) > 1e-10 * np.abs(theta).max()
    vecs = V[:, :k] @ S
    return lam_from_theta(theta), vecs, conv, invariant


def shift_invert_smallest(A, M, lam_cut: float, sigma: float = -0.1, tol: float = 1e-10,
                          seed: int = 0, max_restarts: int | None = None,
                          check_every: int = 5, res_tol: float = 1e-8) -> EigenPairs:
    """All finite eigenvalues below ``lam_cut`` of the symmetric pencil (A, M).

    Lanczos runs on (A - sigma M)^{-1} M in the M inner product; Ritz values
    theta map back to lambda = sigma + 1/theta. Converged eigenpairs below
    the cut are locked and a fresh deflated run is started until a run finds
    nothing new; the smallest converged value above the cut is reported as
    ``next_value``. If eigenvalues below ``sigma`` appear, the shift is moved
    below them and the search restarts.
    """
    A = sp.csr_matrix(A)
    M = sp.csr_matrix(M)
    n = A.shape[0]
    if abs(A - A.T).max() > 1e-10 * max(abs(A).max(), 1.0):
        raise SymmetryError("A is not symmetric")
    rng = np.random.default_rng(seed)
    max_restarts = n + 1 if max_restarts is None else max_restarts

    for _shift_round in range(8):
        fac, sigma = _factor_shifted(A, M, sigma)

        def op(x, fac=fac):
            return fac.solve(M @ x)

        def lam_from_theta(theta, s=sigma):
            with np.errstate(divide="ignore"):
                return s + 1.0 / theta

        locked_vals: list[float] = []
        locked_vecs: list[np.ndarray] = []
        next_value = np.inf
        below_shift = None
        for _restart in range(max_restarts):
            Y = np.column_stack(locked_vecs) if locked_vecs else None
            start = op(rng.standard_normal(n))
            run = _lanczos_run(op, M, start, Y, n, lam_from_theta, lam_cut, tol, check_every)
            if run is None:
                next_value = np.inf
                break
            lam, vecs, conv, _ = run
            good = conv & np.isfinite(lam)
            idx = np.flatnonzero(good)
            if idx.size:
                # purify: one more operator sweep strips null(M) components
                P = np.column_stack([op(vecs[:, i]) for i in idx])
                mn = np.sqrt(np.einsum("ij,ij->j", P, M @ P))
                P = P / np.where(mn > 0, mn, 1.0)
                lam[idx] = np.einsum("ij,ij->j", P, A @ P)
                vecs[:, idx] = P
                good[idx] = _residuals(A, M, lam[idx], P) <= res_tol
            if np.any(good & (lam < sigma)):
                below_shift = lam[good].min()
                break
            new = np.flatnonzero(good & (lam < lam_cut))
            above = lam[good & (lam >= lam_cut)]
            next_value = above.min() if above.size else np.inf
            if new.size == 0:
                break
            for i in new:
                v = vecs[:, i]
                if Y is not None:
                    v = v - Y @ (Y.T @ (M @ v))
                for u in locked_vecs:
                    v = v - u * (u @ (M @ v))
                nv = np.sqrt(v @ (M @ v))
                if nv < 1e-8:
                    continue
                locked_vecs.append(v / nv)
                locked_vals.append(float(lam[i]))
        else:
            raise EigensolverError(f"no stable eigenvalue count after {max_restarts} restarts")

        if below_shift is not None:
            sigma = below_shift - max(1.0, abs(below_shift))
            continue

        order = np.argsort(locked_vals)
        vals = np.asarray(locked_vals)[order]
        vecs = np.column_stack(locked_vecs)[:, order] if locked_vecs else np.zeros((n, 0))
        # Rayleigh-Ritz on the locked block tidies up nearly degenerate pairs
        if vecs.shape[1]:
            K = vecs.T @ (A @ vecs)
            G = vecs.T @ (M @ vecs)
            vals, C = sla.eigh(0.5 * (K + K.T), 0.5 * (G + G.T))
            vecs = vecs @ C
        res = _residuals(A, M, vals, vecs)
        return EigenPairs(vals, vecs, res, next_value=float(next_value), info={"sigma": sigma})
    raise EigensolverError("could not place the shift below the spectrum")
