"""Full GMRES with Givens rotations, Euclidean or weighted inner product."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)


class GmresBreakdown(ArithmeticError):
    pass


class InnerProductError(ValueError):
    pass


@dataclass
class GmresReport:
    iterations: int
    converged: bool
    residual_history: np.ndarray
    final_true_residual: float
    solution: np.ndarray
    maxit: int = 1000

    @property
    def relative_history(self) -> np.ndarray:
        r0 = self.residual_history[0]
        return self.residual_history / r0 if r0 > 0 else self.residual_history

    def iterations_label(self) -> str:
        return str(self.iterations) if self.converged else f"{self.maxit}+"

    def write_history_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual", "relative_residual"])
            for k, (r, rr) in enumerate(zip(self.residual_history, self.relative_history)):
                w.writerow([k, f"{r:.17g}", f"{rr:.17g}"])


def _as_action(op):
    if callable(op) and not hasattr(op, "shape"):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda x: op @ x


def _identity(x):
    return x


def gmres(op_B, op_M, rhs: np.ndarray, tol: float = 1e-6, maxit: int = 1000, inner=None,
          side: str = "right", breakdown_tol: float = 1e-14) -> GmresReport:
    """Solve B x = f by full preconditioned GMRES started from zero.

    ``side="right"`` iterates on B M^{-1} y = f, x = M^{-1} y. ``side="left"``
    iterates on M^{-1} B x = M^{-1} f. ``inner`` is None (Euclidean) or an SPD
    matrix/action W defining <x, y> = x^T W y. Stops when the residual of
    the iterated system drops below ``tol`` times its initial value.
    """
    if side not in ("right", "left"):
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    B = _as_action(op_B)
    Minv = _identity if op_M is None else _as_action(op_M)
    f = np.asarray(rhs, dtype=float)
    n = f.shape[0]
    W = None if inner is None else _as_action(inner)

    def norm(x):
        q = x @ (x if W is None else W(x))
        if q < 0:
            raise InnerProductError("inner product matrix is not positive definite")
        return np.sqrt(q)

    if side == "right":
        def A_op(v):
            return B(Minv(v))
        r0 = f.copy()
    else:
        def A_op(v):
            return Minv(B(v))
        r0 = Minv(f)

    beta = norm(r0)
    fnorm = np.linalg.norm(f)
    if beta == 0.0:
        return GmresReport(0, True, np.array([0.0]), 0.0, np.zeros(n), maxit)

    m = min(maxit, n)
    V = [r0 / beta]
    WV = V if W is None else [W(V[0])]    # W applied to the basis
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    history = [beta]
    converged = False
    k = 0
    for k in range(1, m + 1):
        j = k - 1
        w = A_op(V[j])
        w_norm0 = norm(w)
        # modified Gram-Schmidt, second pass when cancellation is severe
        for _ in range(2):
            for i in range(k):
                h = WV[i] @ w
                H[i, j] += h
                w = w - h * V[i]
            hn = norm(w)
            if hn > 0.7 * w_norm0:
                break
            w_norm0 = hn
        H[k, j] = hn
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        rho = np.hypot(H[j, j], H[k, j])
        if rho == 0.0:
            raise GmresBreakdown(f"singular Hessenberg column at step {k}")
        cs[j], sn[j] = H[j, j] / rho, H[k, j] / rho
        H[j, j], H[k, j] = rho, 0.0
        g[k] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        res = abs(g[k])
        history.append(res)
        if res <= tol * beta:
            converged = True
            break
        if hn <= breakdown_tol * max(w_norm0, 1.0):
            raise GmresBreakdown(f"Krylov space exhausted at step {k} with residual {res / beta:.3e} > tol")
        V.append(w / hn)
        if W is not None:
            WV.append(W(V[k]))

    y = sla.solve_triangular(H[:k, :k], g[:k])
    u = np.column_stack(V[:k]) @ y
    x = Minv(u) if side == "right" else u
    true_res = np.linalg.norm(f - B(x)) / fnorm if fnorm > 0 else 0.0
    log.debug("gmres: %d iterations, converged=%s, true residual %.3e", k, converged, true_res)
    return GmresReport(k, converged, np.asarray(history), float(true_res), x, maxit)


def elman_rate_check(report: GmresReport, c1: float, c2: float, slack: float = 1e-10) -> bool:
    """True when ||r_m|| <= (1 - c1^2/c2^2)^(m/2) ||r_0|| along the whole history."""
    factor = max(1.0 - (c1 * c1) / (c2 * c2), 0.0)
    h = np.asarray(report.residual_history, dtype=float)
    steps = np.arange(h.size)
    bound = factor ** (0.5 * steps) * h[0]
    return bool(np.all(h <= bound + slack * h[0]))
