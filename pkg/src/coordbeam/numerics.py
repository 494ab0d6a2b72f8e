"""Small dense complex linear algebra used by every solver.

All matrices here are at most K x K or M x M with K, M around 8, so plain
LU/QR factorizations are used throughout.
"""

import warnings

import numpy as np
import scipy.linalg as sla

from .errors import RankDeficient, SingularMatrix, ZeroChannel

PIVOT_RTOL = 1e-14
RANK_RTOL = 1e-12
ZERO_CHANNEL_ATOL = 1e-14


def _lu_checked(A):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = np.linalg.norm(A)
    if not np.all(np.isfinite(A)):
        raise SingularMatrix("matrix has non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)  # reported below as SingularMatrix
        lu, piv = sla.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if scale == 0 or pivots.min() < PIVOT_RTOL * scale:
        raise SingularMatrix(f"pivot {pivots.min():.3e} below {PIVOT_RTOL:g}*|A| = {PIVOT_RTOL * scale:.3e}")
    return lu, piv


def linear_solve(A, b):
    """Solve A x = b for a general square A, raising SingularMatrix on a tiny pivot."""
    lu, piv = _lu_checked(A)
    return sla.lu_solve((lu, piv), np.asarray(b), check_finite=False)


def hermitian_solve(A, b):
    """Solve A x = b where A is Hermitian (checked to 1e-12 relative)."""
    A = np.asarray(A)
    if not np.allclose(A, A.conj().T, rtol=0, atol=1e-12 * max(np.abs(A).max(), 1e-300)):
        raise ValueError("matrix is not Hermitian")
    return linear_solve(A, b)


def canonical_phase(f):
    """Rotate ``f`` so that its first non-negligible entry is real and nonnegative."""
    f = np.asarray(f, dtype=complex)
    mags = np.abs(f)
    if mags.max() == 0:
        return f
    idx = int(np.argmax(mags > 1e-12 * mags.max()))
    return f * np.exp(-1j * np.angle(f[idx]))


def mmse_direction(B, h):
    """Unit-norm maximizer of (f^H h h^H f) / (f^H B f), i.e. f proportional to B^-1 h.

    The output is phase-canonicalized (first nonzero entry real, >= 0).
    """
    h = np.asarray(h, dtype=complex)
    if np.linalg.norm(h) < ZERO_CHANNEL_ATOL:
        raise ZeroChannel("channel vector has (near) zero norm")
    x = hermitian_solve(B, h)
    return canonical_phase(x / np.linalg.norm(x))


def mmse_directions(C, h):
    """Batched MMSE directions: C has shape (K, M, M), h shape (K, M).

    Returns (f, gain) with f[k] proportional to C[k]^-1 h[k] (unit norm, no phase
    canonicalization) and gain[k] = h[k]^H C[k]^-1 h[k], the maximal quotient.
    Used inside fixed-point loops where the checked scalar path is too slow.
    """
    x = np.linalg.solve(C, h[..., None])[..., 0]
    gain = np.real(np.einsum("km,km->k", h.conj(), x))
    f = x / np.linalg.norm(x, axis=1, keepdims=True)
    return f, gain


def project_complement(h, others):
    """Project ``h`` onto the orthogonal complement of span(others).

    Equivalent to (I - H (H^H H)^-1 H^H) h with H = [others...] as columns, but
    computed through a QR factorization for accuracy. Raises RankDeficient when
    the columns of H are linearly dependent (relative pivot below 1e-12).
    """
    h = np.asarray(h, dtype=complex)
    others = [np.asarray(o, dtype=complex) for o in others]
    if not others:
        return h.copy()
    Hbar = np.stack(others, axis=1)
    if Hbar.shape[0] != h.shape[0]:
        raise ValueError("vectors must share length M")
    if Hbar.shape[1] > Hbar.shape[0]:
        raise RankDeficient(f"{Hbar.shape[1]} vectors cannot be independent in dimension {Hbar.shape[0]}")
    Q, R = np.linalg.qr(Hbar)
    d = np.abs(np.diag(R))
    if d.max() == 0 or d.min() < RANK_RTOL * d.max():
        raise RankDeficient("linearly dependent columns in the projector")
    out = h - Q @ (Q.conj().T @ h)
    # second pass removes the O(eps*|h|) residual along span(Q)
    return out - Q @ (Q.conj().T @ out)
