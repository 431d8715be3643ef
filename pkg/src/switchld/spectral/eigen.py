"""Perron eigenpairs of the cell operator.

``principal_eigenpair`` runs power iteration on the entrywise nonnegative
matrix M + cI; ``dense_eigen_oracle`` is an independent dense
eigendecomposition used to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ..errors import ConvergenceError, NumericalError
from .cell import CellOperator

RQ_TOL = 1e-13
RESIDUAL_TOL = 1e-10
# kernel target leaves headroom for the final two-sided Rayleigh quotient
KERNEL_RESIDUAL_TOL = 0.5 * RESIDUAL_TOL
MAX_ITER = 200_000
DENSE_MAX = 2048
IMAG_TOL = 1e-8
# Rayleigh quotients of M + cI carry rounding of order eps * c
ROUNDING_FLOOR = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Principal eigenvalue with positive right (sup-norm 1) and left (sum 1) vectors."""

    lam: float
    right: np.ndarray
    left: np.ndarray
    residual_right: float
    residual_left: float
    iterations: int

    def tilted_measure(self) -> np.ndarray:
        """left * right normalised to a probability vector."""
        w = self.left * self.right
        return w / w.sum()


@numba.njit(cache=True)
def _power_iterate(indptr, indices, data, x, shift, max_iter, rq_tol, res_tol, floor):
    n = x.shape[0]
    y = np.empty(n)
    mu_prev = np.nan
    res = np.inf
    mu = 0.0
    for it in range(1, max_iter + 1):
        for r in range(n):
            s = 0.0
            for k in range(indptr[r], indptr[r + 1]):
                s += data[k] * x[indices[k]]
            y[r] = s
        num = 0.0
        den = 0.0
        for r in range(n):
            num += x[r] * y[r]
            den += x[r] * x[r]
        mu = num / den
        res = 0.0
        top = 0.0
        for r in range(n):
            e = abs(y[r] - mu * x[r])
            if e > res:
                res = e
            if y[r] > top:
                top = y[r]
        lam = mu - shift
        tol = rq_tol * (1.0 + abs(lam))
        if floor * abs(mu) > tol:
            tol = floor * abs(mu)
        if abs(mu - mu_prev) < tol and res <= res_tol:
            return x, mu, res, it
        mu_prev = mu
        for r in range(n):
            x[r] = y[r] / top
    return x, mu, res, -max_iter


def _iterate(A: sp.csr_matrix, shift: float, start, max_iter: int, what: str):
    x = np.ones(A.shape[0]) if start is None else np.array(start, dtype=float)
    x /= np.max(np.abs(x))
    x, mu, res, it = _power_iterate(
        A.indptr, A.indices, A.data, x, shift, max_iter, RQ_TOL, KERNEL_RESIDUAL_TOL, ROUNDING_FLOOR
    )
    if it < 0:
        raise ConvergenceError(
            f"power iteration for the {what} vector did not converge in {max_iter} iterations "
            f"(last residual {res:.3e})",
            residual=res,
            iterations=max_iter,
        )
    return x, it


def principal_eigenpair(
    op: CellOperator, max_iter: int = MAX_ITER, start_right=None, start_left=None
) -> EigenPair:
    """Perron eigenpair of M by power iteration on M + cI, c = 1 + max|diag M|."""
    M = op.matrix
    c = 1.0 + float(np.max(np.abs(M.diagonal())))
    shifted = (M + c * sp.identity(M.shape[0], format="csr")).tocsr()
    shifted.sort_indices()
    if shifted.data.min() < 0:
        raise NumericalError("M + cI has negative entries; operator is not essentially nonnegative")
    transposed = shifted.T.tocsr()
    transposed.sort_indices()

    right, it_r = _iterate(shifted, c, start_right, max_iter, "right")
    left, it_l = _iterate(transposed, c, start_left, max_iter, "left")
    return _finish(M, right, left, it_r + it_l)


def _finish(M, right, left, iterations) -> EigenPair:
    right = right / np.max(right)
    left = left / np.sum(left)
    if right.min() <= 0 or left.min() <= 0:
        raise NumericalError("Perron vector is not strictly positive")
    Mr = M @ right
    lam = float(left @ Mr) / float(left @ right)
    res_r = float(np.max(np.abs(Mr - lam * right)))
    ls = left / np.max(left)
    res_l = float(np.max(np.abs(M.T @ ls - lam * ls)))
    return EigenPair(lam, right, left, res_r, res_l, iterations)


def dense_eigen_oracle(op: CellOperator) -> EigenPair:
    """Dominant eigenpair from a full dense eigendecomposition (test oracle)."""
    n = op.n
    if n > DENSE_MAX:
        raise ValueError(f"dense oracle limited to n <= {DENSE_MAX}, got {n}")
    A = op.matrix.toarray()
    # one QR sweep yields both sides: u^H A = w u^H
    w, U, V = scipy.linalg.eig(A, left=True, right=True)
    k = int(np.argmax(w.real))
    if abs(w[k].imag) > IMAG_TOL:
        raise NumericalError(f"dominant eigenvalue is complex ({w[k]}); assembly bug?")
    right = _sign_fix(V[:, k])
    left = _sign_fix(np.conj(U[:, k]))
    lam = float(w[k].real)
    right = right / np.max(right)
    left = left / np.sum(left)
    res_r = float(np.max(np.abs(A @ right - lam * right)))
    ls = left / np.max(left)
    res_l = float(np.max(np.abs(A.T @ ls - lam * ls)))
    return EigenPair(lam, right, left, res_r, res_l, 0)


def _sign_fix(v: np.ndarray) -> np.ndarray:
    v = v.real if np.max(np.abs(v.imag)) <= IMAG_TOL * np.max(np.abs(v)) else v
    if np.iscomplexobj(v):
        raise NumericalError("dominant eigenvector is complex")
    v = v * np.sign(v[np.argmax(np.abs(v))])
    if v.min() < -1e-10 * np.max(v):
        raise NumericalError("dominant eigenvector changes sign")
    return v
