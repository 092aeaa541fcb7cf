"""Brute-force reference implementations used by tests and `verify`.

Everything here is deliberately naive: unblocked textbook eliminations
written out by hand, independent of the kernel layer and of LAPACK, so that
agreement with the production paths is meaningful evidence. Problem sizes
are capped; these routines are not for production use.
"""

from __future__ import annotations

import numpy as np

from .errors import NotPositiveDefinite, ZeroPivot

#: Largest dense order the oracle routines accept.
MAX_ORACLE_DIM = 4096


def _check_cap(dim: int) -> None:
    if dim > MAX_ORACLE_DIM:
        raise ValueError(
            f"oracle is capped at order {MAX_ORACLE_DIM}, got {dim}"
        )


def dense_cholesky(matrix: np.ndarray) -> np.ndarray:
    """Unblocked lower Cholesky factor of a dense symmetric matrix.

    Column-by-column elimination; raises :class:`NotPositiveDefinite` with
    the 1-based pivot index on the first non-positive pivot.
    """
    a = np.asarray(matrix, dtype=np.float64)
    dim = a.shape[0]
    _check_cap(dim)
    lower = np.zeros_like(a)
    for j in range(dim):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if not (pivot > 0.0) or not np.isfinite(pivot):
            raise NotPositiveDefinite(j + 1)
        root = np.sqrt(pivot)
        lower[j, j] = root
        if j + 1 < dim:
            lower[j + 1:, j] = (a[j + 1:, j] - lower[j + 1:, :j] @ lower[j, :j]) / root
    return lower


def _forward_substitution(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    y = np.array(rhs, dtype=np.float64)
    for i in range(lower.shape[0]):
        y[i] -= lower[i, :i] @ y[:i]
        y[i] /= lower[i, i]
    return y


def _backward_substitution(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    x = np.array(rhs, dtype=np.float64)
    for i in range(lower.shape[0] - 1, -1, -1):
        x[i] -= lower[i + 1:, i] @ x[i + 1:]
        x[i] /= lower[i, i]
    return x


def dense_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a dense SPD system by unblocked Cholesky plus two substitutions.

    Parameters
    ----------
    matrix : (dim, dim) symmetric array
    rhs : (dim,) or (dim, d) array

    Returns the solution with the same trailing shape as ``rhs``.
    """
    lower = dense_cholesky(matrix)
    return _backward_substitution(lower, _forward_substitution(lower, rhs))


def dense_schur(matrix: np.ndarray, interior: np.ndarray) -> np.ndarray:
    """Dense Schur complement after eliminating the given row/column set.

    ``interior`` lists the scalar indices to eliminate; the result is the
    reduced matrix over the complementary (separator) indices, in ascending
    order. The interior principal submatrix must be SPD.
    """
    a = np.asarray(matrix, dtype=np.float64)
    _check_cap(a.shape[0])
    interior = np.asarray(interior, dtype=np.intp)
    keep = np.setdiff1d(np.arange(a.shape[0]), interior)
    if interior.size == 0:
        return a[np.ix_(keep, keep)].copy()
    a_uu = a[np.ix_(interior, interior)]
    a_ul = a[np.ix_(interior, keep)]
    return a[np.ix_(keep, keep)] - a_ul.T @ dense_solve(a_uu, a_ul)


def thomas_scalar(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray,
                  rhs: np.ndarray) -> np.ndarray:
    """Classical scalar tridiagonal elimination (no pivoting).

    ``lower`` and ``upper`` have length len(diag) - 1. Raises
    :class:`ZeroPivot` if elimination hits an exactly zero pivot.
    """
    diag = np.asarray(diag, dtype=np.float64)
    count = diag.shape[0]
    _check_cap(count)
    c = np.zeros(count)
    x = np.array(rhs, dtype=np.float64)
    piv = diag[0]
    if piv == 0.0:
        raise ZeroPivot(0)
    c[0] = upper[0] / piv if count > 1 else 0.0
    x[0] = x[0] / piv
    for i in range(1, count):
        piv = diag[i] - lower[i - 1] * c[i - 1]
        if piv == 0.0:
            raise ZeroPivot(i)
        if i < count - 1:
            c[i] = upper[i] / piv
        x[i] = (x[i] - lower[i - 1] * x[i - 1]) / piv
    for i in range(count - 2, -1, -1):
        x[i] -= c[i] * x[i + 1]
    return x
