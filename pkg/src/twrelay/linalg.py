"""
Dense complex linear-algebra primitives.

All functions accept double-precision complex (or real) arrays. `pinv`
and `singular_values_rank` also broadcast over leading stack dimensions,
which the balanced scheme uses to evaluate the whole balancing grid at
once.
"""

import numpy as np

from .errors import DegenerateInput

__all__ = ['RANK_RTOL', 'rank_threshold', 'numerical_rank', 'pinv',
           'orth_complement_projector', 'null_space_basis',
           'dominant_left_singular_vector', 'canonical_phase', 'kron',
           'vec', 'unvec']

# Relative singular-value cutoff, further multiplied by max(rows, cols).
RANK_RTOL = 1e-10


def rank_threshold(s, shape):
    """Absolute singular-value cutoff for singular values `s`.

    `s` holds singular values along its last axis (descending, as
    returned by `numpy.linalg.svd`); `shape` is the matrix shape.
    """
    s = np.asarray(s)
    smax = s[..., :1] if s.shape[-1] else np.zeros(s.shape[:-1] + (1,))
    return smax * RANK_RTOL * max(shape[-2], shape[-1])


def numerical_rank(M):
    """Number of singular values above the rank threshold (stackable)."""
    M = np.asarray(M)
    if 0 in M.shape[-2:]:
        return np.zeros(M.shape[:-2], dtype=int)
    s = np.linalg.svd(M, compute_uv=False)
    return np.sum(s > rank_threshold(s, M.shape), axis=-1)


def pinv(M):
    """
    Moore-Penrose pseudo-inverse via SVD.

    Singular values at or below ``smax * 1e-10 * max(rows, cols)`` are
    treated as zero, so a zero matrix maps to a zero matrix.

    Parameters
    ----------
    M : array_like, shape (..., m, n)

    Returns
    -------
    numpy.ndarray, shape (..., n, m)
    """
    M = np.asarray(M, dtype=complex)
    m, n = M.shape[-2:]
    if m == 0 or n == 0:
        return np.zeros(M.shape[:-2] + (n, m), dtype=complex)
    u, s, vh = np.linalg.svd(M, full_matrices=False)
    keep = s > rank_threshold(s, M.shape)
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (vh.conj().mT * s_inv[..., None, :]) @ u.conj().mT


def orth_complement_projector(X):
    """
    Projector onto the orthogonal subspace of `X`.

    For a wide (or square) `X` this is ``I - X^H (X X^H)^{-1} X``, an
    ``n x n`` projector with ``X @ P = 0``. For a tall `X` it is
    ``I - X (X^H X)^{-1} X^H``, an ``m x m`` projector with
    ``P @ X = 0``. Rank-deficient inputs use the pseudo-inverse in place
    of the inverse, so a zero (or empty) `X` gives the identity.
    """
    X = np.asarray(X, dtype=complex)
    m, n = X.shape
    if m <= n:
        return np.eye(n, dtype=complex) - pinv(X) @ X
    return np.eye(m, dtype=complex) - X @ pinv(X)


def null_space_basis(M):
    """Orthonormal basis (as columns) of the right null space of `M`.

    Returns an ``n x (n - rank)`` array; the column count is zero when
    `M` has full column rank.
    """
    M = np.asarray(M, dtype=complex)
    m, n = M.shape
    if m == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > rank_threshold(s, M.shape)))
    return vh[rank:].conj().T


def canonical_phase(v):
    """Rotate `v` so its largest-magnitude entry is real and positive."""
    v = np.asarray(v, dtype=complex)
    k = int(np.argmax(np.abs(v)))
    a = np.abs(v[k])
    if a == 0:
        return v.copy()
    out = v * (np.conj(v[k]) / a)
    out[k] = a
    return out


def dominant_left_singular_vector(M):
    """
    Unit vector `x` maximizing ``||x^T M||``.

    This is the conjugate of the left singular vector of `M` for its
    largest singular value, returned in canonical phase.

    Raises
    ------
    DegenerateInput
        If `M` is numerically zero.
    """
    M = np.asarray(M, dtype=complex)
    if M.size == 0:
        raise DegenerateInput("empty matrix has no dominant direction")
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    if not s[0] > 0:
        raise DegenerateInput("zero matrix has no dominant direction")
    return canonical_phase(u[:, 0].conj())


def kron(A, B):
    """Kronecker product."""
    return np.kron(np.asarray(A), np.asarray(B))


def vec(M):
    """Stack the columns of `M` into one vector."""
    return np.asarray(M).reshape(-1, order='F')


def unvec(v, rows, cols):
    """Inverse of `vec`."""
    return np.asarray(v).reshape((rows, cols), order='F')
