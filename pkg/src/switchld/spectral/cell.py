"""Finite-difference discretisation of the cell operator on the torus x states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..errors import EvaluationError, GridError, ModelError
from ..modelspec.expression import locate_nonfinite
from ..modelspec.model import ModelDefinition

PECLET_SLACK = 1e-12


@dataclass(frozen=True)
class CellGrid:
    """Uniform periodic grid of ``points`` nodes per fast axis, times J states.

    Row index of (grid multi-index k, state i) is ``i * N**d + ravel(k)``.
    """

    dimension: int
    points: int
    period: float
    states: int

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.points < 3:
            raise ValueError("need at least 3 points per axis")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.states < 1:
            raise ValueError("need at least one state")

    @classmethod
    def for_model(cls, model: ModelDefinition, points: int | None = None) -> "CellGrid":
        if points is None:
            points = 128 if model.dimension == 1 else 32
        return cls(model.dimension, int(points), model.period, model.states)

    @property
    def cells(self) -> int:
        return self.points**self.dimension

    @property
    def size(self) -> int:
        return self.cells * self.states

    @property
    def h(self) -> float:
        return self.period / self.points

    def index(self, k, state: int) -> int:
        k = np.atleast_1d(k)
        return state * self.cells + int(np.ravel_multi_index(tuple(k), (self.points,) * self.dimension))

    def unravel(self, row: int) -> tuple[tuple[int, ...], int]:
        state, flat = divmod(int(row), self.cells)
        return tuple(int(v) for v in np.unravel_index(flat, (self.points,) * self.dimension)), state

    def fast_points(self) -> np.ndarray:
        """Node coordinates, shape ``(N**d, d)`` in ravel order."""
        axis = np.arange(self.points) * self.h
        mesh = np.meshgrid(*([axis] * self.dimension), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def neighbours(self, axis: int, step: int) -> np.ndarray:
        """Ravelled index of the periodic neighbour k + step*e_axis for every node."""
        shape = (self.points,) * self.dimension
        idx = np.arange(self.cells).reshape(shape)
        return np.roll(idx, -step, axis=axis).ravel()


@dataclass(frozen=True, eq=False)
class CellOperator:
    """M = T + diag(V) with T = discretised generator (diffusion, drift, switching).

    ``stencil[a]`` is the central-difference d/dy_a matrix and ``drift`` the
    array p - g^i(x, y_k) per row, which together give dM/dp_a.
    """

    matrix: sp.csr_matrix
    generator: sp.csr_matrix
    potential: np.ndarray
    drift: np.ndarray
    stencil: tuple
    x: np.ndarray
    p: np.ndarray
    grid: CellGrid

    @property
    def n(self) -> int:
        return self.grid.size

    def dM_dp(self, axis: int) -> sp.csr_matrix:
        return (self.stencil[axis] + sp.diags(self.drift[:, axis])).tocsr()


def _as_point(v, d, what) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if arr.size == 1 and d > 1:
        arr = np.repeat(arr, d)
    if arr.size != d:
        raise ValueError(f"{what} must have {d} components")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite")
    return arr


def required_points(model: ModelDefinition, grid: CellGrid, x, p) -> int:
    """Smallest N meeting the grid-Péclet condition for the given (x, p)."""
    d = grid.dimension
    x = _as_point(x, d, "x")
    p = _as_point(p, d, "p")
    g = model.drift_at(x[None, :], grid.fast_points())
    return max(3, math.ceil(grid.period * float(np.max(np.abs(p - g)))))


def assemble_cell_operator(model: ModelDefinition, grid: CellGrid, x, p) -> CellOperator:
    """Assemble M = T + V at frozen slow position ``x`` and momentum ``p``.

    Raises GridError if h * |p - g| > 1 somewhere (negative off-diagonals),
    ModelError if the sparsity graph is not strongly connected and
    EvaluationError on non-finite drift or rates.
    """
    d = grid.dimension
    if (model.dimension, model.states) != (d, grid.states) or model.period != grid.period:
        raise ValueError("grid does not match model (dimension, states, period)")
    x = _as_point(x, d, "x")
    p = _as_point(p, d, "p")
    pts = grid.fast_points()
    slow = np.broadcast_to(x, pts.shape)
    J, C, h = grid.states, grid.cells, grid.h

    g = model.drift_at(slow, pts)  # (J, C, d)
    rates = model.rates_at(slow, pts)  # (C, J, J)
    for arr, exprs in ((g, model.drift), (rates, model.rates)):
        if not np.all(np.isfinite(arr)):
            _raise_nonfinite(model, exprs, slow, pts)

    b = p - g
    worst = float(np.max(np.abs(b))) * h
    if worst > 1.0 + PECLET_SLACK:
        need = math.ceil(grid.period * float(np.max(np.abs(b))))
        raise GridError(
            f"grid-Péclet condition violated: h*max|p - g| = {worst:.4f} > 1 at p={p.tolist()}; "
            f"use at least {need} points per axis (have {grid.points})",
            required_points=need,
        )

    rows, cols, vals = [], [], []
    st_rows, st_cols, st_vals = [], [], []
    diff = 0.5 / h**2
    base = np.arange(C)
    for i in range(J):
        off = i * C
        for a in range(d):
            for step, sign in ((1, 1.0), (-1, -1.0)):
                nb = grid.neighbours(a, step)
                rows.append(off + base)
                cols.append(off + nb)
                vals.append(diff + sign * b[i, :, a] / (2 * h))
                st_rows.append(off + base)
                st_cols.append(off + nb)
                st_vals.append(np.full(C, sign / (2 * h)))
        for j in range(J):
            if j == i:
                continue
            r = rates[:, i, j]
            keep = r != 0.0
            rows.append(off + base[keep])
            cols.append(j * C + base[keep])
            vals.append(r[keep])

    n = grid.size
    offdiag = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    offdiag.sum_duplicates()
    if offdiag.nnz and offdiag.data.min() < 0:
        offdiag.data[offdiag.data < 0] = 0.0  # only reachable at h|b| == 1 + slack
    offdiag.eliminate_zeros()
    generator = (offdiag - sp.diags(np.asarray(offdiag.sum(axis=1)).ravel())).tocsr()

    pot = 0.5 * float(p @ p) - np.einsum("jcd,d->jc", g, p).ravel()
    matrix = (generator + sp.diags(pot)).tocsr()
    matrix.sort_indices()

    ncomp, _ = connected_components(offdiag, directed=True, connection="strong")
    if ncomp != 1:
        raise ModelError(
            f"cell operator sparsity graph is reducible ({ncomp} strongly connected components)",
            invariant="irreducibility",
        )

    # stencil blocks were appended in (state, axis, step) order
    stencils = []
    for a in range(d):
        sr = np.concatenate([st_rows[k] for k in range(len(st_rows)) if (k // 2) % d == a])
        sc = np.concatenate([st_cols[k] for k in range(len(st_cols)) if (k // 2) % d == a])
        sv = np.concatenate([st_vals[k] for k in range(len(st_vals)) if (k // 2) % d == a])
        stencils.append(sp.coo_matrix((sv, (sr, sc)), shape=(n, n)).tocsr())

    drift = b.reshape(J * C, d)
    return CellOperator(matrix, generator, pot, drift, tuple(stencils), x, p, grid)


def _raise_nonfinite(model, exprs, slow, pts):
    for row in exprs:
        for e in row:
            for k in range(pts.shape[0]):
                err = locate_nonfinite(e, slow[k], pts[k])
                if err is not None:
                    raise EvaluationError(f"{err} at x={slow[k].tolist()}, y={pts[k].tolist()}", err.subexpression)
    raise EvaluationError("non-finite drift or rate value")
