"""Deterministic matrix utilities shared by the factorizers."""
from collections import namedtuple

import numpy as np

from .errors import InvalidInputError, NumericError

EPS = 1e-16
PINV_RCOND = 1e-12

SignSplit = namedtuple("SignSplit", ["pos", "neg"])


def as_matrix(A, name="matrix"):
    """Return ``A`` as a finite 2-D float64 array or raise InvalidInputError."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInputError(f"{name} must be non-empty, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


def _check_nonneg(A, name):
    if np.any(A < 0):
        raise InvalidInputError(f"{name} must be entrywise nonnegative")


def pos_neg_split(A):
    """Split ``A`` into its positive and negative sections.

    Returns ``SignSplit(pos, neg)`` with ``pos = (|A| + A) / 2`` and
    ``neg = (|A| - A) / 2`` so that ``A == pos - neg`` exactly.
    """
    A = as_matrix(A)
    absA = np.abs(A)
    return SignSplit((absA + A) / 2.0, (absA - A) / 2.0)


def pinv(A, rcond=PINV_RCOND):
    """Moore-Penrose pseudo-inverse.

    Singular values below ``rcond * sigma_max`` are treated as zero.
    """
    if rcond < 0:
        raise InvalidInputError("rcond must be >= 0")
    A = np.asarray(A, dtype=np.float64)
    try:
        return np.linalg.pinv(A, rcond=rcond)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge in pinv: {exc}") from exc


def safe_div(num, den):
    """Entrywise ``num / (den + 1e-16)`` for nonnegative operands."""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    _check_nonneg(num, "numerator")
    _check_nonneg(den, "denominator")
    return num / (den + EPS)


def _check_rank(X, k):
    p, n = X.shape
    if not (1 <= k <= min(p, n)):
        raise InvalidInputError(f"k={k} out of range [1, {min(p, n)}] for a {p}x{n} matrix")


def _svd(X):
    try:
        return np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc


def nndsvd_init(X, k):
    """Nonnegative double SVD initialization (Boutsidis & Gallopoulos).

    Each singular triplet is replaced by the dominant of its positive or
    negative sections. Zeros in both factors are then filled with
    ``1e-4 * mean(X)`` so multiplicative updates can move them.

    Parameters
    ----------
    X : ndarray, shape (p, n)
        Nonnegative data.
    k : int
        Number of components, ``1 <= k <= min(p, n)``.

    Returns
    -------
    Z0 : ndarray, shape (p, k)
    H0 : ndarray, shape (k, n)
    """
    X = as_matrix(X, "X")
    _check_nonneg(X, "X")
    _check_rank(X, k)
    U, S, Vt = _svd(X)
    p, n = X.shape
    Z = np.zeros((p, k))
    H = np.zeros((k, n))

    Z[:, 0] = np.sqrt(S[0]) * np.abs(U[:, 0])
    H[0, :] = np.sqrt(S[0]) * np.abs(Vt[0, :])
    for j in range(1, k):
        x, y = U[:, j], Vt[j, :]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        xpn, ypn = np.linalg.norm(xp), np.linalg.norm(yp)
        xnn, ynn = np.linalg.norm(xn), np.linalg.norm(yn)
        mp, mn = xpn * ypn, xnn * ynn
        if mp >= mn:
            u, v, sigma = xp / xpn if xpn else xp, yp / ypn if ypn else yp, mp
        else:
            u, v, sigma = xn / xnn if xnn else xn, yn / ynn if ynn else yn, mn
        scale = np.sqrt(S[j] * sigma)
        Z[:, j] = scale * u
        H[j, :] = scale * v

    fill = 1e-4 * X.mean()
    Z[Z == 0] = fill
    H[H == 0] = fill
    return Z, H


def svd_seminmf_init(X, k, shift=0.1):
    """SVD-based Semi-NMF starting point.

    The rows of ``H0`` are the leading ``k`` right singular vectors scaled by
    their singular values, each oriented so its larger-magnitude extreme is
    positive and then shifted to be strictly positive (the shift leaves a
    margin of ``shift`` times the row's range above zero, or of its
    magnitude for a constant row). ``Z0`` is the
    least-squares fit ``X H0^+``.
    """
    X = as_matrix(X, "X")
    _check_rank(X, k)
    _, S, Vt = _svd(X)
    V = S[:k, None] * Vt[:k]
    flip = np.abs(V.min(axis=1)) > np.abs(V.max(axis=1))
    V[flip] *= -1
    lo = V.min(axis=1)
    spread = V.max(axis=1) - lo
    # a (numerically) constant row has no range; use its magnitude instead
    size = np.abs(V).max(axis=1)
    spread = np.where(spread > 1e-12 * size, spread, size)
    spread[spread == 0] = 1.0
    H = V - (lo - shift * spread)[:, None]
    Z = X @ pinv(H)
    return Z, H
