"""Coefficient fields: diffusion a(x), convection b(x) and the split reaction c = c+ + c-.

All rules are vectorised: they take coordinate arrays ``x, y`` of equal shape
and return arrays of that shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class CoefficientError(ValueError):
    pass


@dataclass(frozen=True)
class ScalarField:
    rule: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "field"

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(self.rule(x, y), dtype=float), np.broadcast(x, y).shape).copy()


@dataclass(frozen=True)
class VectorField:
    rule: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    divergence_rule: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "field"

    def __call__(self, x, y) -> np.ndarray:
        """Values stacked along a trailing axis of length 2."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        bx, by = self.rule(x, y)
        return np.stack([np.broadcast_to(bx, shape), np.broadcast_to(by, shape)], axis=-1).astype(float)

    def divergence(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(self.divergence_rule(x, y), dtype=float), np.broadcast(x, y).shape).copy()


def constant(value: float, name: str | None = None) -> ScalarField:
    value = float(value)
    return ScalarField(lambda x, y: np.full(np.broadcast(x, y).shape, value), name or f"const({value:g})")


def zero_vector() -> VectorField:
    return VectorField(lambda x, y: (np.zeros_like(x), np.zeros_like(y)), lambda x, y: np.zeros_like(x), "zero")


@dataclass(frozen=True)
class ProblemCoefficients:
    """Coefficients of -div(a grad u) + b.grad u + (c+ + c-) u."""

    a: ScalarField
    b: VectorField
    c_plus: ScalarField
    c_minus: ScalarField

    def c(self, x, y) -> np.ndarray:
        return self.c_plus(x, y) + self.c_minus(x, y)

    def c_tilde(self, x, y) -> np.ndarray:
        return self.c_minus(x, y) - self.b.divergence(x, y)

    def validate(self, points: np.ndarray) -> None:
        """Check a >= 1 and c+ >= 0 at the sampled points."""
        x, y = points[:, 0], points[:, 1]
        a = self.a(x, y)
        if not np.all(np.isfinite(a)) or a.min() < 1.0:
            raise CoefficientError(f"diffusion must satisfy a >= 1, min sampled value {a.min()}")
        cp = self.c_plus(x, y)
        if cp.min() < 0.0:
            raise CoefficientError(f"c+ must be non-negative, min sampled value {cp.min()}")


# --- diffusion ------------------------------------------------------------

_CHANNEL_1 = np.array([(0.16, 0.63), (0.16, 0.68), (0.72, 0.47), (0.72, 0.42)])
_CHANNEL_2 = np.array([(0.22, 0.03), (0.22, 0.11), (0.94, 0.23), (0.94, 0.15)])


def in_convex_polygon(x, y, vertices: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Point-in-convex-polygon test; points on the boundary count as inside."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = np.ones(np.broadcast(x, y).shape, dtype=bool)
    neg = np.ones_like(pos)
    nv = len(vertices)
    for k in range(nv):
        (ax, ay), (bx, by) = vertices[k], vertices[(k + 1) % nv]
        cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        pos &= cross >= -tol
        neg &= cross <= tol
    return pos | neg


def _lattice_index(t):
    # closed squares [k/9, (k+1)/9] for even k: an odd integer edge belongs to square k-1
    s = 9.0 * t
    k = np.floor(s)
    on_odd_edge = np.isclose(s, np.round(s), rtol=0, atol=1e-12) & (np.round(s) % 2 == 1)
    return np.where(on_odd_edge, np.round(s) - 1, k)


def inclusions_channels(a_max: float) -> ScalarField:
    """Inclusions-and-channels diffusion on the unit square.

    Background 1; 25 square inclusions on a 9x9 lattice whose value grows
    with the row; two quadrilateral channels with values a_max and a_max/2.
    """
    a_max = float(a_max)
    if not a_max > 1.0:
        raise CoefficientError(f"a_max must exceed 1, got {a_max}")

    def rule(x, y):
        out = np.ones(np.broadcast(x, y).shape)
        cx = _lattice_index(x)
        cy = _lattice_index(y)
        inside = (cx >= 0) & (cx <= 8) & (cy >= 0) & (cy <= 8) & (cx % 2 == 0) & (cy % 2 == 0)
        out = np.where(inside, 1.0 + (a_max - 1.0) * (cy + 1.0) / 10.0, out)
        out = np.where(in_convex_polygon(x, y, _CHANNEL_1), a_max, out)
        out = np.where(in_convex_polygon(x, y, _CHANNEL_2), 0.5 * a_max, out)
        return out

    return ScalarField(rule, f"inclusions_channels({a_max:g})")


# --- convection -----------------------------------------------------------

def _check_finite(*vals):
    for v in vals:
        if not math.isfinite(float(v)):
            raise CoefficientError(f"non-finite parameter {v}")


def convection_unidirectional_zero_div(b: float) -> VectorField:
    _check_finite(b)

    def rule(x, y):
        s = b * (1.0 + np.sin(2 * np.pi * (2 * y - x)))
        return 2.0 * s, s

    return VectorField(rule, lambda x, y: np.zeros(np.broadcast(x, y).shape), f"zero_div({b:g})")


def convection_unidirectional_nonzero_div(b: float) -> VectorField:
    _check_finite(b)

    def rule(x, y):
        s = b * (1.0 + np.sin(2 * np.pi * (2 * x + y)))
        return 2.0 * s, s

    def div(x, y):
        return 10.0 * np.pi * b * np.cos(2 * np.pi * (2 * x + y))

    return VectorField(rule, div, f"nonzero_div({b:g})")


def convection_circulating(b: float) -> VectorField:
    _check_finite(b)

    def rule(x, y):
        return b * 2 * y * (1 - x**2), -b * 2 * x * (1 - y**2)

    return VectorField(rule, lambda x, y: np.zeros(np.broadcast(x, y).shape), f"circulating({b:g})")


def convection_circulating_radial(b: float, n: int) -> VectorField:
    _check_finite(b, n)
    if n < 0:
        raise CoefficientError("n must be non-negative")

    def rule(x, y):
        s = b * np.sin(n * np.pi * (1 - x**2) * (1 - y**2))
        return s * 2 * y * (1 - x**2), -s * 2 * x * (1 - y**2)

    # the radial factor is constant along the streamlines of the circulating field
    return VectorField(rule, lambda x, y: np.zeros(np.broadcast(x, y).shape), f"circulating_radial({b:g},{n})")


def convection_unidirectional_oscillating(b: float, m: int) -> VectorField:
    _check_finite(b, m)
    if m < 0:
        raise CoefficientError("m must be non-negative")

    def rule(x, y):
        s = b * (1 + np.sin(m * np.pi * (2 * x + y))) * (1 + np.sin(2 * np.pi * (2 * y - x)))
        return 2.0 * s, s

    def div(x, y):
        return 5.0 * m * np.pi * b * np.cos(m * np.pi * (2 * x + y)) * (1 + np.sin(2 * np.pi * (2 * y - x)))

    return VectorField(rule, div, f"unidirectional_oscillating({b:g},{m})")


CONVECTION_FIELDS = {
    "zero_div": lambda b, n=0, m=0: convection_unidirectional_zero_div(b),
    "nonzero_div": lambda b, n=0, m=0: convection_unidirectional_nonzero_div(b),
    "circulating": lambda b, n=0, m=0: convection_circulating(b),
    "circulating_radial": lambda b, n=0, m=0: convection_circulating_radial(b, n),
    "unidirectional_oscillating": lambda b, n=0, m=0: convection_unidirectional_oscillating(b, m),
}


# --- reaction splitting ---------------------------------------------------

def split_reaction(c: ScalarField | float, mode: str = "nonneg_part", dt: float | None = None,
                   dt0: float | None = None) -> tuple[ScalarField, ScalarField]:
    """Split a reaction coefficient into (c+, c-) with c+ >= 0.

    Modes:
      ``nonneg_part``  c+ = max(c, 0)
      ``all_minus``    c+ = 0, c- = c
      ``timestep``     backward-Euler shift: the total reaction is c + 1/dt,
                       with c+ = 1/dt0 fixed and c- taking the rest.
    """
    if not isinstance(c, ScalarField):
        c = constant(c)
    if mode == "nonneg_part":
        cp = ScalarField(lambda x, y: np.maximum(c(x, y), 0.0), f"max({c.name},0)")
        cm = ScalarField(lambda x, y: c(x, y) - np.maximum(c(x, y), 0.0), f"min({c.name},0)")
        return cp, cm
    if mode == "all_minus":
        return constant(0.0), c
    if mode == "timestep":
        if dt is None or dt0 is None or not (dt > 0 and dt0 > 0):
            raise CoefficientError(f"time steps must be positive, got dt={dt}, dt0={dt0}")
        inv_dt, inv_dt0 = 1.0 / dt, 1.0 / dt0
        cp = constant(inv_dt0)
        cm = ScalarField(lambda x, y: c(x, y) + (inv_dt - inv_dt0), f"{c.name}+1/dt-1/dt0")
        return cp, cm
    raise CoefficientError(f"unknown splitting mode {mode!r}")
