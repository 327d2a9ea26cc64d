"""Explicit constants of the convergence theory and empirical probes of it.

The stability constant of the adjoint problem is replaced by a discrete
surrogate, so the computed s and t depend (mildly) on h.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .coeffs import ProblemCoefficients
from .decomp import DomainDecomposition
from .geneo import beta0
from .linalg import Factorization


@dataclass(frozen=True)
class TheoryConstants:
    C0: float
    C1: float
    C2: float
    k0: int
    Theta: float
    beta0: float
    Cstab_star: float
    H: float
    s: float
    t: float
    c1: float
    c2: float
    s_below_one: bool
    t_below_one: bool
    elman_factor: float

    @property
    def conditions_met(self) -> bool:
        return self.s_below_one and self.t_below_one

    def as_dict(self) -> dict:
        d = asdict(self)
        d["conditions_met"] = self.conditions_met
        return d


class FieldOfValues(NamedTuple):
    min_ratio: float
    max_norm_ratio: float


def coefficient_norms(coeffs: ProblemCoefficients, points: np.ndarray) -> dict:
    """Sup norms of b, div b and c-, plus min c-, sampled at ``points``."""
    x, y = points[:, 0], points[:, 1]
    b = coeffs.b(x, y)
    cm = coeffs.c_minus(x, y)
    return {
        "b": float(np.hypot(b[:, 0], b[:, 1]).max()),
        "div_b": float(np.abs(coeffs.b.divergence(x, y)).max()),
        "c_minus": float(np.abs(cm).max()),
        "c_minus_inf": float(cm.min()),
    }


def constants_from_norms(norms: dict, k0: int, Theta: float, Cstab_star: float, H: float) -> TheoryConstants:
    C0 = float(np.sqrt(0.5 * norms["b"] ** 2 + max(-norms["c_minus_inf"], 0.0)))
    C1 = 1.0 + norms["b"] + norms["c_minus"]
    C2 = C1 + norms["div_b"]
    b0 = beta0(k0 * np.sqrt(Theta))
    s = 2.0 * np.sqrt(2.0) * (1.0 + Cstab_star) * C1 * C2 * k0 ** 1.5 * b0 ** 2 * np.sqrt(Theta)
    t = 16.0 * H * C1 * k0 * b0 ** 2
    c1 = (1.0 - max(s, t)) / b0 ** 2
    c2 = 12.0 + 32.0 * k0 ** 2
    elman = 1.0 - c1 * c1 / (c2 * c2)
    return TheoryConstants(C0, C1, C2, int(k0), float(Theta), float(b0), float(Cstab_star), float(H),
                           float(s), float(t), float(c1), float(c2), bool(s < 1), bool(t < 1), float(elman))


def compute_constants(coeffs: ProblemCoefficients, decomp: DomainDecomposition, Theta: float,
                      Cstab_star: float, H: float | None = None) -> TheoryConstants:
    """All constants, with sup norms taken over element barycentres."""
    norms = coefficient_norms(coeffs, decomp.mesh.barycenters())
    return constants_from_norms(norms, decomp.k0, Theta, Cstab_star, decomp.H if H is None else H)


def estimate_cstab_star(B, A, Mass, maxiter: int = 20, rtol: float = 1e-4, seed: int = 0) -> float:
    """Largest value of ||w||_A / ||f||_Mass over f, where B^T w = Mass f.

    Power iteration on f -> B^{-1} A B^{-T} Mass f, the normal operator of
    that map in the (Mass, A) inner products.
    """
    fac = Factorization(B)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(B.shape[0])
    f /= np.sqrt(f @ (Mass @ f))
    mu_old = 0.0
    mu = 0.0
    for _ in range(maxiter):
        w = fac.solve_transpose(Mass @ f)
        mu = float(w @ (A @ w))            # ||S f||_A^2 with ||f||_Mass = 1
        g = fac.solve(A @ w)
        f = g / np.sqrt(g @ (Mass @ g))
        if mu_old > 0 and abs(mu - mu_old) <= rtol * mu:
            break
        mu_old = mu
    return float(np.sqrt(mu))


def probe_field_of_values(B, precond, A, n_samples: int = 200, seed: int = 0) -> FieldOfValues:
    """min a(Tu,u) and max sqrt(a(Tu,Tu)) over random u with a(u,u) = 1, T = M^{-1} B.

    Sample i is drawn from its own stream (seed, i), so any subset of the
    samples can be recomputed independently.
    """
    n = B.shape[0]
    lo, hi = np.inf, 0.0
    for i in range(n_samples):
        u = np.random.default_rng([seed, i]).standard_normal(n)
        u /= np.sqrt(u @ (A @ u))
        Tu = precond.apply(B @ u)
        ATu = A @ Tu
        lo = min(lo, float(u @ ATu))
        hi = max(hi, float(np.sqrt(max(Tu @ ATu, 0.0))))
    return FieldOfValues(lo, hi)


def write_report(path, constants: TheoryConstants, probe: FieldOfValues | None = None, extra: dict | None = None) -> None:
    """key = value text, one entry per line."""
    items = dict(constants.as_dict())
    if probe is not None:
        items["min_ratio"] = probe.min_ratio
        items["max_norm_ratio"] = probe.max_norm_ratio
        items["lower_bound_holds"] = probe.min_ratio >= constants.c1
        items["upper_bound_holds"] = probe.max_norm_ratio <= np.sqrt(constants.c2)
    if extra:
        items.update(extra)
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {v:.10g}\n" if isinstance(v, float) else f"{k} = {v}\n")
