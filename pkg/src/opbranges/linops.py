"""
Dense complex linear algebra used throughout the toolkit.

Every matrix is a 2-D ``numpy`` array of ``complex128``. All routines are
deterministic (LAPACK eigen/SVD drivers, no randomized sketching).
"""

from dataclasses import dataclass

import numpy as np

from opbranges.errors import PreconditionError

__all__ = [
    "Tolerances",
    "as_cmat",
    "is_hermitian",
    "is_psd",
    "psd_sqrt",
    "pinv",
    "sigma_min",
    "is_unitary",
    "fredholm_index",
    "spectral_norm",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared by the toolkit.

    psd_tol : float
        Relative slack (times ``1 + ||M||``) allowed below zero in PSD tests.
    rank_rel_tol : float
        Singular values below ``rank_rel_tol * sigma_max`` count as zero.
    unitary_tol : float
        Absolute bound on ``||MM* - I||`` and ``||M*M - I||``.
    singular_accept : float
        Relative threshold under which a matrix is treated as singular.
    """

    psd_tol: float = 1e-10
    rank_rel_tol: float = 1e-12
    unitary_tol: float = 1e-8
    singular_accept: float = 1e-8

    def __post_init__(self):
        for name in ("psd_tol", "rank_rel_tol", "unitary_tol", "singular_accept"):
            value = getattr(self, name)
            if not (value >= 0.0) or not np.isfinite(value):
                raise ValueError(f"{name} must be a finite nonnegative number, got {value!r}")


DEFAULT_TOLERANCES = Tolerances()


def as_cmat(M) -> np.ndarray:
    """Coerce ``M`` to a finite 2-D complex array."""
    A = np.asarray(M, dtype=complex)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _require_square(A):
    if A.shape[0] != A.shape[1]:
        raise PreconditionError(f"matrix must be square, got shape {A.shape}")


def spectral_norm(M) -> float:
    A = np.asarray(M, dtype=complex)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def is_hermitian(M, tol: float = 1e-12) -> bool:
    """True iff ``max|M - M*| <= tol * (1 + max|M|)`` entrywise."""
    A = as_cmat(M)
    _require_square(A)
    if A.size == 0:
        return True
    return float(np.max(np.abs(A - A.conj().T))) <= tol * (1.0 + float(np.max(np.abs(A))))


def _hermitian_eigvalsh(A, tol):
    herm_tol = max(tol, 1e-12)
    if not is_hermitian(A, herm_tol):
        raise PreconditionError("matrix is not Hermitian within tolerance")
    H = 0.5 * (A + A.conj().T)
    return H


def is_psd(M, tol: float = DEFAULT_TOLERANCES.psd_tol) -> bool:
    """
    Test positive semi-definiteness of a Hermitian matrix.

    The smallest eigenvalue of the Hermitian part must be at least
    ``-tol * (1 + ||M||_2)``.

    Raises
    ------
    PreconditionError
        If ``M`` is not square or not Hermitian within ``max(tol, 1e-12)``.
    """
    A = as_cmat(M)
    _require_square(A)
    if A.size == 0:
        return True
    H = _hermitian_eigvalsh(A, tol)
    w = np.linalg.eigvalsh(H)
    return bool(w[0] >= -tol * (1.0 + float(np.max(np.abs(w)))))


def psd_sqrt(M, psd_tol: float = DEFAULT_TOLERANCES.psd_tol) -> np.ndarray:
    """Hermitian PSD square root by eigen-decomposition, negative eigenvalues clamped to zero."""
    A = as_cmat(M)
    _require_square(A)
    H = _hermitian_eigvalsh(A, psd_tol)
    w, U = np.linalg.eigh(H)
    scale = 1.0 + (float(np.max(np.abs(w))) if w.size else 0.0)
    if w.size and w[0] < -psd_tol * scale:
        raise PreconditionError(f"matrix is indefinite: smallest eigenvalue {w[0]:.3e}")
    root = np.sqrt(np.clip(w, 0.0, None))
    R = (U * root) @ U.conj().T
    return 0.5 * (R + R.conj().T)


def pinv(M, rank_rel_tol: float = DEFAULT_TOLERANCES.rank_rel_tol) -> np.ndarray:
    """Moore-Penrose pseudoinverse via the SVD, truncating at ``rank_rel_tol * sigma_max``."""
    A = as_cmat(M)
    if A.size == 0:
        return np.zeros((A.shape[1], A.shape[0]), dtype=complex)
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    cutoff = rank_rel_tol * s[0]
    keep = s > cutoff
    if not np.any(keep):
        return np.zeros((A.shape[1], A.shape[0]), dtype=complex)
    return (Vh[keep].conj().T / s[keep]) @ U[:, keep].conj().T


def sigma_min(M) -> float:
    """Smallest singular value (of the ``min(rows, cols)`` available)."""
    A = as_cmat(M)
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def is_unitary(M, tol: float = DEFAULT_TOLERANCES.unitary_tol) -> bool:
    A = as_cmat(M)
    _require_square(A)
    eye = np.eye(A.shape[0])
    left = spectral_norm(A @ A.conj().T - eye)
    right = spectral_norm(A.conj().T @ A - eye)
    return left <= tol and right <= tol


def numerical_rank(M, rank_rel_tol: float = DEFAULT_TOLERANCES.rank_rel_tol) -> int:
    A = as_cmat(M)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rank_rel_tol * s[0])) if s[0] > 0 else 0


def fredholm_index(M, rank_rel_tol: float = DEFAULT_TOLERANCES.rank_rel_tol) -> int:
    """
    Index ``dim ker M - dim ker M*`` of a finite matrix.

    For a ``rows x cols`` matrix this is ``cols - rows`` regardless of rank,
    so every square truncation has index zero.
    """
    A = as_cmat(M)
    rank = numerical_rank(A, rank_rel_tol)
    rows, cols = A.shape
    return (cols - rank) - (rows - rank)
