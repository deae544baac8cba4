"""Dense real linear algebra primitives shared by every solver."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .constants import RANK_RTOL

logger = logging.getLogger(__name__)

# Dense float64 arrays; 1-D for vectors, 2-D for matrices.
Vector = np.ndarray
DenseMatrix = np.ndarray


class LinalgError(ValueError):
    """Raised when an array is not a valid finite vector or matrix."""
    pass


class DimensionError(ValueError):
    """Raised when operand shapes do not agree."""
    pass


def as_vector(x, name: str = "vector") -> Vector:
    """
    Coerce x to a finite, non-empty 1-D float64 array.

    Raises:
        LinalgError: If x is not 1-D, is empty, or has NaN/Inf entries
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise LinalgError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise LinalgError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise LinalgError(f"{name} has non-finite entries")
    return arr


def as_matrix(A, name: str = "matrix") -> DenseMatrix:
    """
    Coerce A to a finite, non-empty 2-D float64 array.

    Raises:
        LinalgError: If A is not 2-D, is empty, or has NaN/Inf entries
    """
    arr = np.asarray(A, dtype=np.float64)
    if arr.ndim != 2:
        raise LinalgError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise LinalgError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise LinalgError(f"{name} has non-finite entries")
    return arr


def frozen(arr: np.ndarray) -> np.ndarray:
    """Return a read-only copy of arr."""
    out = np.array(arr, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


def matvec(A: DenseMatrix, x: Vector) -> Vector:
    """
    Matrix-vector product A @ x.

    Raises:
        DimensionError: If A.cols != len(x)
    """
    if A.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot multiply {A.shape[0]}x{A.shape[1]} matrix by vector of length {x.shape[0]}")
    return A @ x


def norm2(x: Vector) -> float:
    """Euclidean norm."""
    return float(np.linalg.norm(x))


def norm_inf(x: Vector) -> float:
    """Max-abs norm."""
    return float(np.max(np.abs(x))) if x.size else 0.0


def dot(x: Vector, y: Vector) -> float:
    """
    Inner product of two equal-length vectors.

    Raises:
        DimensionError: If lengths differ
    """
    if x.shape != y.shape:
        raise DimensionError(f"dot of vectors with lengths {x.shape[0]} and {y.shape[0]}")
    return float(np.dot(x, y))


@dataclass(frozen=True)
class Spectrum:
    """Singular values of a matrix in descending order."""

    values: np.ndarray

    @property
    def spectral_norm(self) -> float:
        return float(self.values[0]) if self.values.size else 0.0

    @property
    def smallest(self) -> float:
        return float(self.values[-1]) if self.values.size else 0.0

    @property
    def cond(self) -> float:
        """sigma_max / sigma_min; infinite for singular (or zero) matrices."""
        if self.smallest == 0.0:
            return float("inf")
        return self.spectral_norm / self.smallest

    def tolerance(self, rtol: float = RANK_RTOL) -> float:
        return rtol * self.spectral_norm

    def rank(self, tol: Optional[float] = None) -> int:
        """Number of singular values above tol (default RANK_RTOL * sigma_max)."""
        cutoff = self.tolerance() if tol is None else tol
        return int(np.count_nonzero(self.values > cutoff))


def svd_spectrum(A: DenseMatrix) -> Spectrum:
    """Singular values of A, descending."""
    values = scipy.linalg.svdvals(as_matrix(A))
    return Spectrum(values=np.sort(values)[::-1])


def least_squares_solve(A: DenseMatrix, y: Vector) -> Vector:
    """
    Minimum-norm least-squares solution of A x = y through the pseudo-inverse.

    Singular values at or below RANK_RTOL * sigma_max are treated as zero.

    Raises:
        DimensionError: If len(y) != A.rows
    """
    A = as_matrix(A)
    if A.shape[0] != y.shape[0]:
        raise DimensionError(f"right-hand side of length {y.shape[0]} for {A.shape[0]}x{A.shape[1]} system")
    U, s, Vt = scipy.linalg.svd(A, full_matrices=False)
    keep = s > RANK_RTOL * (s[0] if s.size else 0.0)
    coeffs = (U[:, keep].T @ y) / s[keep]
    return Vt[keep].T @ coeffs


def orthonormal_range_basis(M: DenseMatrix) -> DenseMatrix:
    """
    Orthonormal basis of the numerical column space of M.

    Returns:
        rows x r matrix with orthonormal columns, r = numerical rank of M
    """
    basis = scipy.linalg.orth(as_matrix(M), rcond=RANK_RTOL)
    logger.debug("range basis: %d of %d columns kept", basis.shape[1], M.shape[1])
    return basis
