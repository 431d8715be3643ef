"""Lagrangian, path action and the zero-cost (law of large numbers) path."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, PathError
from .modelspec.model import ModelDefinition
from .simulate import PathSample
from .spectral.cell import CellGrid
from .spectral.hamiltonian import hamiltonian, hamiltonian_grad_p, lln_velocity

SEARCH_TOL = 1e-8
BOUNDARY_TOL = 1e-6


class CoercivityError(NumericalError):
    """Legendre maximiser hit the search bound."""


@dataclass(frozen=True, eq=False)
class Segment:
    t0: float
    t1: float
    velocity: np.ndarray
    lagrangian: float
    p_star: np.ndarray


@dataclass(frozen=True, eq=False)
class ActionReport:
    total_action: float
    segments: list[Segment]
    rule: str = "midpoint"

    def to_dict(self) -> dict:
        return {
            "schema": "switchld.action_report/1",
            "total_action": self.total_action,
            "rule": self.rule,
            "segments": [
                {
                    "t0": s.t0,
                    "t1": s.t1,
                    "v": s.velocity.tolist(),
                    "L": s.lagrangian,
                    "p_star": s.p_star.tolist(),
                }
                for s in self.segments
            ],
        }


def momentum_bound(model: ModelDefinition, v) -> float:
    """Pb = 2|v| + 2 sqrt(G^2 + 1) + 4, outside which p.v - H(p) < -H(0)."""
    G = model.drift_sup_bound
    return 2.0 * float(np.linalg.norm(v)) + 2.0 * math.sqrt(G * G + 1.0) + 4.0


def legendre(model: ModelDefinition, grid: CellGrid, x, v) -> tuple[float, np.ndarray]:
    """L(x, v) = sup_p [p v - H(x, p)] and its maximiser (d = 1).

    The objective is concave, so its maximiser is where the slope
    v - dH/dp changes sign. The bracket [-Pb, Pb] is bisected on that sign
    (slopes from Hellmann-Feynman) down to a width of 1e-8. Comparing
    objective values instead would resolve p* only to about the square root
    of the eigenvalue accuracy.
    """
    if model.dimension != 1:
        raise NotImplementedError("the Legendre transform is implemented for d = 1")
    v = float(np.atleast_1d(v)[0])
    bound = momentum_bound(model, v)

    def slope(p):
        return v - float(hamiltonian_grad_p(model, grid, x, p)[0])

    a, b = -bound, bound
    if slope(a) <= 0 or slope(b) >= 0:
        edge = a if slope(a) <= 0 else b
        raise CoercivityError(
            f"Legendre maximiser lies at the search bound {edge:.6g} for v={v:.6g}; "
            "H is not coercive enough on this grid"
        )
    while b - a > SEARCH_TOL:
        mid = 0.5 * (a + b)
        if slope(mid) > 0:
            a = mid
        else:
            b = mid
    p_star = 0.5 * (a + b)
    if p_star + bound < BOUNDARY_TOL or bound - p_star < BOUNDARY_TOL:
        raise CoercivityError(
            f"Legendre maximiser p*={p_star:.6g} sits at the search bound {bound:.6g}; "
            "H is not coercive enough on this grid"
        )
    return p_star * v - hamiltonian(model, grid, x, p_star), np.array([p_star])


def lagrangian(model: ModelDefinition, grid: CellGrid, x, v) -> float:
    return legendre(model, grid, x, v)[0]


def path_action(model: ModelDefinition, grid: CellGrid, path: PathSample) -> ActionReport:
    """Midpoint-rule action sum_k dt_k L(xbar_k, v_k); the initial cost is 0 (Dirac)."""
    if path.dimension != model.dimension:
        raise PathError("path dimension does not match the model")
    segments = []
    total = 0.0
    for k in range(len(path.times) - 1):
        t0, t1 = float(path.times[k]), float(path.times[k + 1])
        vel = (path.points[k + 1] - path.points[k]) / (t1 - t0)
        mid = 0.5 * (path.points[k] + path.points[k + 1])
        L, p_star = legendre(model, grid, mid, vel)
        segments.append(Segment(t0, t1, vel, L, p_star))
        total += (t1 - t0) * L
    return ActionReport(total, segments)


def zero_cost_path(model: ModelDefinition, grid: CellGrid, x0, horizon: float, dt: float = 1e-2) -> PathSample:
    """Classical RK4 for dx/dt = v*(x) on [0, horizon]."""
    if not 0 < dt <= 1e-2:
        raise ValueError("dt must lie in (0, 1e-2]")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    steps = max(1, math.ceil(horizon / dt - 1e-9))
    h = horizon / steps
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    points = [x.copy()]

    def f(z):
        return lln_velocity(model, grid, z)

    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        points.append(x.copy())
    return PathSample(np.arange(steps + 1) * h, np.array(points))
