"""Small dense linear-algebra helpers: SVD rank splits and FD Jacobians."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateSplitting

SV_RELATIVE_CUTOFF = 1e-8


def svd_split(T, cutoff_rel: float = SV_RELATIVE_CUTOFF):
    """Rank, orthonormal kernel and cokernel-complement bases of a matrix.

    Returns (rank, kernel, coker, sigma) where kernel is (n, n-rank) from the
    right singular vectors, coker is (m, m-rank) spanning the orthogonal
    complement of the range, and sigma the singular values.  The cutoff is
    cutoff_rel * max(sigma_max, 1).
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    m, n = T.shape
    if n == 0 or m == 0:
        return 0, np.zeros((n, n)), np.zeros((m, m)), np.zeros(0)
    U, s, Vt = np.linalg.svd(T)
    cut = cutoff_rel * max(s[0] if s.size else 0.0, 1.0)
    rank = int(np.sum(s > cut))
    kernel = Vt[rank:].T
    coker = U[:, rank:]
    return rank, kernel, coker, s


def guard_rank_band(sigma, cutoff: float, band_factor: float = 10.0):
    """Raise DegenerateSplitting when singular values fall in [cutoff, band*cutoff]."""
    sigma = np.asarray(sigma)
    bad = sigma[(sigma >= cutoff) & (sigma <= band_factor * cutoff)]
    if bad.size:
        raise DegenerateSplitting(
            f"singular values {bad} inside ambiguity band [{cutoff:.3e}, {band_factor * cutoff:.3e}]",
            singular_values=sigma,
        )


def smallest_sv_ratio(T) -> float:
    """sigma_min / sigma_max of a matrix over its smaller dimension (0 if empty)."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if min(T.shape) == 0:
        return 0.0
    s = np.linalg.svd(T, compute_uv=False)
    return float(s[min(T.shape) - 1] / s[0]) if s[0] > 0 else 0.0


def is_surjective(T, rel_tol: float = SV_RELATIVE_CUTOFF) -> bool:
    """Full row rank test: smallest of the first m singular values > rel_tol * largest."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    m, n = T.shape
    if m == 0:
        return True
    if n < m:
        return False
    s = np.linalg.svd(T, compute_uv=False)
    return bool(s[m - 1] > rel_tol * max(s[0], 1e-300))


def fd_jacobian(f, x, h: float | None = None):
    """Central finite-difference Jacobian of f at x, shape (len(f(x)), len(x))."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-6 * (1.0 + float(np.sum(np.abs(x))))
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        fp = np.atleast_1d(np.asarray(f(x + e), dtype=float))
        fm = np.atleast_1d(np.asarray(f(x - e), dtype=float))
        J[:, j] = (fp - fm) / (2.0 * h)
    return J


def orthonormal_columns(A, tol: float = 1e-12):
    """Orthonormal basis of the column span of A (possibly empty)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] == 0:
        return A.copy()
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > tol * max(s[0] if s.size else 0.0, 1.0)))
    return U[:, :rank]


def subspace_intersection(A, B, tol: float = 1e-10):
    """Orthonormal basis of span(A) ∩ span(B) for column-basis matrices A, B."""
    A = orthonormal_columns(A)
    B = orthonormal_columns(B)
    if A.shape[1] == 0 or B.shape[1] == 0:
        return np.zeros((A.shape[0], 0))
    # x in both spans: x = A u = B v; solve [A, -B] [u; v] = 0.
    M = np.hstack([A, -B])
    _, kernel, _, _ = svd_split(M, cutoff_rel=tol)
    if kernel.shape[1] == 0:
        return np.zeros((A.shape[0], 0))
    return orthonormal_columns(A @ kernel[: A.shape[1], :])
