"""
Dense matrix kernels used by the reducers and the DMD surrogates.

All routines are thin, validated wrappers over LAPACK (through SciPy/NumPy):
inputs are checked for shape and finiteness, LAPACK failures are reported as
``ConvergenceError`` and the tolerance conventions of the tool (rank cutoff,
pseudoinverse cutoff) live here and nowhere else.
"""
import logging
from typing import NamedTuple, Tuple

import numpy as np
import scipy.linalg

from src.utils.errors import ConvergenceError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-14
PINV_RCOND = 1e-12


class SvdResult(NamedTuple):
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray


def _as_matrix(A, name: str = "A", dtype=np.float64) -> np.ndarray:
    A = np.asarray(A, dtype=dtype)
    if A.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D matrix, got shape {A.shape}")
    if A.size == 0:
        raise ShapeError(f"{name} is empty")
    if not np.all(np.isfinite(A)):
        raise NumericalError(f"{name} contains non-finite entries")
    return A


def _matrix_dtype(A) -> type:
    return np.complex128 if np.iscomplexobj(A) else np.float64


def _svd(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        # gesvd: Householder bidiagonalization followed by implicit-shift QR
        U, sigma, Vh = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD (gesvd) did not converge for a {A.shape[0]}x{A.shape[1]} matrix: {exc}") from exc
    return U, sigma, Vh


def thin_svd(A) -> SvdResult:
    """
    Thin SVD ``A = U diag(sigma) V^T`` with ``sigma`` sorted descending.
    """
    A = _as_matrix(A)
    U, sigma, Vh = _svd(A)
    return SvdResult(U=U, sigma=sigma, V=Vh.T)


def truncate_rank(sigma, epsilon: float, rtol: float = RANK_RTOL) -> int:
    """
    Smallest rank whose retained energy fraction reaches ``1 - epsilon``.

    With ``epsilon == 0`` the numerical rank is returned instead: the number of
    singular values above ``rtol * sigma[0]``.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    if sigma.ndim != 1 or sigma.size == 0 or not np.any(sigma > 0.0):
        raise NumericalError("cannot truncate an all-zero spectrum")

    if epsilon == 0.0:
        return int(np.count_nonzero(sigma > rtol * sigma[0]))

    energy = np.cumsum(sigma ** 2)
    energy /= energy[-1]
    rank = int(np.searchsorted(energy, 1.0 - epsilon, side="left")) + 1
    return min(rank, sigma.size)


def eig_dense(A) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues and right eigenvectors of a dense square matrix.

    Real input goes through ``dgeev`` (Hessenberg reduction + Francis QR), which
    returns complex eigenvalues in exact conjugate pairs.
    """
    A = _as_matrix(A, dtype=_matrix_dtype(A))
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"eigendecomposition needs a square matrix, got {A.shape}")
    try:
        eigenvalues, eigenvectors = scipy.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"QR iteration (geev) did not converge for a {A.shape[0]}x{A.shape[0]} matrix: {exc}") from exc
    return eigenvalues.astype(np.complex128), eigenvectors.astype(np.complex128)


def lstsq(A, b) -> np.ndarray:
    """
    Minimum-norm least-squares solution of ``A x = b``.
    """
    A = _as_matrix(A, dtype=_matrix_dtype(A))
    b = np.asarray(b)
    vector_rhs = b.ndim == 1
    b = _as_matrix(b[:, None] if vector_rhs else b, name="b", dtype=_matrix_dtype(b))
    if b.shape[0] != A.shape[0]:
        raise ShapeError(f"right-hand side has {b.shape[0]} rows, matrix has {A.shape[0]}")
    try:
        x, _, _, _ = scipy.linalg.lstsq(A, b, lapack_driver="gelsd")
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"least squares (gelsd) did not converge: {exc}") from exc
    return x[:, 0] if vector_rhs else x


def pinv(A, rcond: float = PINV_RCOND) -> np.ndarray:
    """
    Moore-Penrose pseudoinverse; singular values below ``rcond * sigma_1`` count as zero.
    """
    A = _as_matrix(A, dtype=_matrix_dtype(A))
    U, sigma, Vh = _svd(A)
    keep = sigma > rcond * sigma[0] if sigma[0] > 0.0 else np.zeros_like(sigma, dtype=bool)
    inverse = np.zeros_like(sigma)
    inverse[keep] = 1.0 / sigma[keep]
    return (Vh.conj().T * inverse) @ U.conj().T


def vandermonde(lambdas, ncols: int) -> np.ndarray:
    """
    Matrix with entry ``(l, j) = lambdas[l] ** j`` for ``j = 0 .. ncols - 1``.
    """
    if ncols < 1:
        raise ValueError(f"ncols must be at least 1, got {ncols}")
    lambdas = np.asarray(lambdas, dtype=np.complex128).ravel()
    if not np.all(np.isfinite(lambdas)):
        raise NumericalError("eigenvalues contain non-finite entries")
    return np.vander(lambdas, N=ncols, increasing=True)
