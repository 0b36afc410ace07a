"""Complex dense linear-algebra kernels shared by the whole pipeline.

All solver-side math runs in double precision (complex128); single precision
appears only at dataset/model file boundaries.  These are thin, contract-
checked wrappers around LAPACK via numpy.linalg.
"""

from typing import NamedTuple

import numpy as np


class DecompositionError(RuntimeError):
    """A matrix factorization failed to converge."""


class RankDeficientError(RuntimeError):
    """An operand does not have the full rank its operation requires."""


class NotHpdError(RuntimeError):
    """A matrix required to be Hermitian positive definite is not."""


class SvdResult(NamedTuple):
    left: np.ndarray       # (n_rows, r), orthonormal columns
    singulars: np.ndarray  # (r,), real, descending, >= 0
    right: np.ndarray      # (n_cols, r), orthonormal columns


def _as_cmat(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    return a


def herm(a: np.ndarray) -> np.ndarray:
    """Hermitian part (a + a^H)/2, used to scrub roundoff asymmetry."""
    return 0.5 * (a + a.conj().T)


def svd(a) -> SvdResult:
    """Thin SVD a = left @ diag(singulars) @ right^H with r = min(rows, cols).

    Raises DecompositionError (with norm diagnostics) if the underlying
    iteration does not converge.
    """
    a = _as_cmat(a)
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(
            f"SVD did not converge for {a.shape[0]}x{a.shape[1]} matrix "
            f"with Frobenius norm {np.linalg.norm(a):.6e}"
        ) from exc
    return SvdResult(u, s, vh.conj().T)


def lstsq(a, b) -> np.ndarray:
    """Least-squares solution x of min ||b - a x||_F for full-column-rank a.

    Raises RankDeficientError when the smallest singular value of a falls
    below 1e-12 times the largest.
    """
    a = _as_cmat(a)
    b = _as_cmat(b)
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0 or s[-1] < 1e-12 * s[0]:
        raise RankDeficientError(
            f"rank-deficient system: singular values span "
            f"[{s[-1]:.3e}, {s[0]:.3e}] for shape {a.shape}"
        )
    x, _, _, _ = np.linalg.lstsq(a, b, rcond=None)
    return x


def logdet2_hpd(a) -> float:
    """log2 det(a) for Hermitian positive definite a, via Cholesky pivots.

    Never forms the raw determinant; the result is the sum of logs of the
    Cholesky diagonal.  Raises NotHpdError if a deviates from Hermitian by
    more than 1e-10 (relative to max(1, ||a||_F)) or has a non-positive
    pivot.
    """
    a = _as_cmat(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    dev = np.linalg.norm(a - a.conj().T)
    if dev > 1e-10 * max(1.0, np.linalg.norm(a)):
        raise NotHpdError(f"Hermitian deviation {dev:.3e} exceeds tolerance")
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotHpdError("matrix is not positive definite") from exc
    return float(2.0 * np.sum(np.log2(np.real(np.diag(chol)))))
