# linalg/dense.py
"""
Small dense real linear algebra.

Matrices here are at most a few dozen rows (the Newton systems in the
experiments are 11x11), so everything is plain numpy/LAPACK on float64 arrays.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import numpy.typing as npt
import scipy.linalg

from apps.core.exceptions import NonFiniteEntries, NotSymmetric, SingularMatrix

DenseMatrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]

PIVOT_THRESHOLD = 1e-14
CHOLESKY_PIVOT_MIN = 1e-12
SYMMETRY_TOL = 1e-12


def dense(entries: Iterable | np.ndarray, rows: int | None = None, cols: int | None = None) -> DenseMatrix:
    """
    Build a DenseMatrix from nested rows, or from a flat row-major sequence
    when rows/cols are given.
    """
    a = np.array(entries, dtype=np.float64)
    if rows is not None or cols is not None:
        if rows is None or cols is None or a.size != rows * cols:
            raise ValueError(f"expected {rows}x{cols} entries, got {a.size}")
        a = a.reshape(rows, cols)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteEntries("matrix has NaN/Inf entries")
    return a


def vector(entries: Iterable | np.ndarray) -> Vector:
    v = np.asarray(entries, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise NonFiniteEntries("vector has NaN/Inf entries")
    return v


@dataclass(frozen=True)
class CholeskyCheck:
    pd: bool
    min_pivot: float


def lu_solve(a: DenseMatrix, b: Vector) -> Vector:
    """
    Solve a x = b by LU with partial pivoting.

    Raises SingularMatrix when a pivot falls below 1e-14 times the largest
    row norm of the input.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"lu_solve needs a square matrix, got shape {a.shape}")
    if b.shape != (n,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({n},)")

    scale = float(np.max(np.linalg.norm(a, axis=1))) if n else 0.0
    if scale == 0.0:
        raise SingularMatrix("zero matrix", pivot=0.0)

    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrix
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)

    pivots = np.abs(np.diag(lu))
    k = int(np.argmin(pivots))
    if pivots[k] < PIVOT_THRESHOLD * scale:
        raise SingularMatrix(
            f"pivot {k} has magnitude {pivots[k]:.3e} (row scale {scale:.3e})",
            pivot=float(pivots[k]),
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def cholesky_check(a: DenseMatrix) -> CholeskyCheck:
    """
    Attempt a Cholesky factorization and report whether every pivot stayed
    above 1e-12. The pivots are the diagonal values before the square root.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"cholesky_check needs a square matrix, got shape {a.shape}")
    if np.any(np.abs(a - a.T) > SYMMETRY_TOL):
        raise NotSymmetric(f"max asymmetry {np.max(np.abs(a - a.T)):.3e}")

    low = np.zeros_like(a)
    min_pivot = np.inf
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        min_pivot = min(min_pivot, pivot)
        if pivot <= CHOLESKY_PIVOT_MIN:
            return CholeskyCheck(pd=False, min_pivot=float(pivot))
        low[j, j] = np.sqrt(pivot)
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return CholeskyCheck(pd=True, min_pivot=float(min_pivot))


def min_singular_value(a: DenseMatrix) -> float:
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError("min_singular_value of an empty matrix")
    return float(np.min(np.linalg.svd(a, compute_uv=False)))


def min_eigenvalue(a: DenseMatrix) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(np.asarray(a, dtype=np.float64))[0])


def spectral_norm(a: DenseMatrix) -> float:
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))
