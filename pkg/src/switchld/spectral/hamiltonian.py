"""Effective Hamiltonian and the quantities derived from the cell eigenproblem."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ConvergenceError, NumericalError
from ..modelspec.model import ModelDefinition
from .cell import CellGrid, CellOperator, assemble_cell_operator
from .eigen import EigenPair, principal_eigenpair

CACHE_DIGITS = 12
STATIONARY_TOL = 1e-10
DV_MAX_SIZE = 256
DV_GRAD_TOL = 1e-8
DV_MAX_ITER = 50_000


@dataclass(frozen=True, eq=False)
class CellMeasure:
    """Probability weights over the n = N^d * J cells of a grid (row order)."""

    weights: np.ndarray
    grid: CellGrid

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} weights, got shape {w.shape}")
        if w.min() < 0 or not np.all(np.isfinite(w)):
            raise ValueError("measure weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("measure has zero mass")
        object.__setattr__(self, "weights", w / total)

    def state_marginal(self) -> np.ndarray:
        return self.weights.reshape(self.grid.states, self.grid.cells).sum(axis=1)


def _point(v, d) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if arr.size == 1 and d > 1:
        arr = np.repeat(arr, d)
    if arr.size != d:
        raise ValueError(f"expected a point with {d} components")
    return tuple(round(float(a), CACHE_DIGITS) + 0.0 for a in arr)


def _slow_key(model: ModelDefinition, x) -> tuple[float, ...]:
    # models without slow dependence share one cache line for every x
    if not model.slow_dependent:
        return (0.0,) * model.dimension
    return _point(x, model.dimension)


@lru_cache(maxsize=4096)
def _cached_eigenpair(model, grid, xkey, pkey) -> EigenPair:
    op = assemble_cell_operator(model, grid, np.array(xkey), np.array(pkey))
    return principal_eigenpair(op)


def eigenpair(model: ModelDefinition, grid: CellGrid, x, p) -> EigenPair:
    """Principal eigenpair at (x, p), rounded to 12 digits and cached."""
    return _cached_eigenpair(model, grid, _slow_key(model, x), _point(p, model.dimension))


def clear_cache() -> None:
    _cached_eigenpair.cache_clear()


def operator(model: ModelDefinition, grid: CellGrid, x, p) -> CellOperator:
    return assemble_cell_operator(
        model, grid, np.array(_slow_key(model, x)), np.array(_point(p, model.dimension))
    )


def hamiltonian(model: ModelDefinition, grid: CellGrid, x, p) -> float:
    """H(x, p): the principal eigenvalue of the discretised cell operator."""
    return eigenpair(model, grid, x, p).lam


def hamiltonian_grad_p(model: ModelDefinition, grid: CellGrid, x, p) -> np.ndarray:
    """dH/dp by Hellmann-Feynman: <left, (dM/dp) right> / <left, right>."""
    pair = eigenpair(model, grid, x, p)
    op = operator(model, grid, x, p)
    denom = float(pair.left @ pair.right)
    return np.array(
        [float(pair.left @ (op.dM_dp(a) @ pair.right)) / denom for a in range(grid.dimension)]
    )


def stationary_measure(model: ModelDefinition, grid: CellGrid, x) -> CellMeasure:
    """Invariant probability of the discrete generator at p = 0."""
    pair = eigenpair(model, grid, x, 0.0)
    if abs(pair.lam) > STATIONARY_TOL:
        raise NumericalError(
            f"generator eigenvalue {pair.lam:.3e} is not zero; discretisation is not conservative"
        )
    return CellMeasure(pair.left, grid)


def cell_drift(model: ModelDefinition, grid: CellGrid, x) -> np.ndarray:
    """g^i(x, y_k) in row order, shape (n, d)."""
    pts = grid.fast_points()
    xs = np.array(_slow_key(model, x))
    g = model.drift_at(np.broadcast_to(xs, pts.shape), pts)
    return g.reshape(grid.size, grid.dimension)


def lln_velocity(model: ModelDefinition, grid: CellGrid, x) -> np.ndarray:
    """Velocity of the limiting path: minus the drift averaged over the stationary measure."""
    mu = stationary_measure(model, grid, x)
    return -(mu.weights @ cell_drift(model, grid, x))


# --------------------------------------------------------------------------
# Donsker-Varadhan functional


@dataclass(frozen=True, eq=False)
class DVResult:
    value: float
    phi: np.ndarray
    iterations: int
    grad_norm: float


def _dv_terms(op: CellOperator):
    T = op.generator.tocoo()
    off = T.row != T.col
    return T.row[off], T.col[off], T.data[off], op.generator.diagonal()


def donsker_varadhan(
    model: ModelDefinition,
    grid: CellGrid,
    x,
    p,
    mu,
    tol: float = DV_GRAD_TOL,
    max_iter: int = DV_MAX_ITER,
) -> DVResult:
    """Minimise F(phi) = sum_z mu_z [e^-phi T e^phi]_z with phi_0 = 0.

    T is the generator part (diffusion, drift at momentum p, switching). F is
    convex; its Hessian is a weighted graph Laplacian, which preconditions
    each descent step (a damped Newton direction, falling back to the plain
    gradient). Armijo backtracking guarantees descent. Returns -F(phi).
    """
    if grid.size > DV_MAX_SIZE:
        raise ValueError(f"Donsker-Varadhan minimisation limited to n <= {DV_MAX_SIZE}, got {grid.size}")
    weights = mu.weights if isinstance(mu, CellMeasure) else CellMeasure(mu, grid).weights
    rows, cols, vals, diag = _dv_terms(operator(model, grid, x, p))
    base = float(weights @ diag)
    coef = weights[rows] * vals
    n = grid.size

    def objective(phi):
        w = coef * np.exp(phi[cols] - phi[rows])
        grad = np.bincount(cols, w, minlength=n) - np.bincount(rows, w, minlength=n)
        grad[0] = 0.0
        return base + w.sum(), grad, w

    def direction(g, w):
        hess = np.zeros((n, n))
        np.add.at(hess, (rows, rows), w)
        np.add.at(hess, (cols, cols), w)
        np.add.at(hess, (rows, cols), -w)
        np.add.at(hess, (cols, rows), -w)
        sub = hess[1:, 1:]
        sub[np.diag_indices(n - 1)] += 1e-14 * max(float(np.trace(sub)), 1e-300)
        d = np.zeros(n)
        try:
            d[1:] = -np.linalg.solve(sub, g[1:])
        except np.linalg.LinAlgError:
            return -g
        if not np.all(np.isfinite(d)) or float(d @ g) >= 0:
            return -g
        return d

    phi = np.zeros(n)
    F, g, w = objective(phi)
    for it in range(max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            return DVResult(-F, phi, it, gnorm)
        for d in (direction(g, w), -g):
            slope, step = float(d @ g), 1.0
            while step >= 1e-20:
                trial = phi + step * d
                F_trial, g_trial, w_trial = objective(trial)
                if F_trial <= F + 1e-4 * step * slope:
                    break
                step *= 0.5
            else:
                continue
            break
        else:
            raise ConvergenceError("line search failed in Donsker-Varadhan minimisation", gnorm, it)
        phi, F, g, w = trial, F_trial, g_trial, w_trial
    raise ConvergenceError(
        f"Donsker-Varadhan minimisation did not reach gradient {tol:g} in {max_iter} iterations "
        f"(last {float(np.max(np.abs(g))):.3e})",
        float(np.max(np.abs(g))),
        max_iter,
    )


def dv_functional(model: ModelDefinition, grid: CellGrid, x, p, mu) -> float:
    """I_{x,p}(mu) = -inf_phi sum mu e^-phi T e^phi (a certified lower estimate)."""
    return donsker_varadhan(model, grid, x, p, mu).value


def potential_average(model: ModelDefinition, grid: CellGrid, x, p, mu) -> float:
    """sum_z mu_z V_{x,p}(z)."""
    weights = mu.weights if isinstance(mu, CellMeasure) else CellMeasure(mu, grid).weights
    return float(weights @ operator(model, grid, x, p).potential)
