"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin. The compiled versions are used unless
numba is missing or ``DSNMF_DISABLE_NUMBA`` is set to a truthy value, in
which case the numpy twins are bound instead. Both sets stay importable
(``numpy_kernels`` / ``numba_kernels``) so they can be compared directly.
"""
import math
import os
from types import SimpleNamespace

import numpy as np

EPS = 1e-16


def _flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


# --------------------------------------------------------------------------
# numpy reference implementations


def _np_mu_update(H, B, pos_gram_H, neg_gram_H, reg_num, reg_den, eta):
    """H * ((B^+ + G^- H + R_num) / (B^- + G^+ H + R_den + eps)) ** eta."""
    absB = np.abs(B)
    num = (absB + B) / 2.0 + neg_gram_H + reg_num
    den = (absB - B) / 2.0 + pos_gram_H + reg_den
    ratio = num / (den + EPS)
    if eta == 0.5:
        return H * np.sqrt(ratio)
    if eta == 1.0:
        return H * ratio
    return H * ratio ** eta


def _np_pairwise_sqdist(X):
    # columns are samples; differences formed explicitly so equal distances stay equal
    n = X.shape[1]
    out = np.empty((n, n))
    step = max(1, 4_000_000 // max(1, X.shape[0] * n))
    for s in range(0, n, step):
        diff = X[:, s:s + step, None] - X[:, None, :]
        out[s:s + step] = np.einsum("pij,pij->ij", diff, diff)
    return out


def _np_assign(points, centers):
    # points: n x d, centers: k x d -> nearest-center index (lowest on ties), sq distance
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(points.shape[0]), labels]


numpy_kernels = SimpleNamespace(
    name="numpy",
    mu_update=_np_mu_update,
    pairwise_sqdist=_np_pairwise_sqdist,
    assign=_np_assign,
)


# --------------------------------------------------------------------------
# numba implementations

def _build_numba():
    from numba import njit

    @njit(cache=True)
    def mu_update(H, B, pos_gram_H, neg_gram_H, reg_num, reg_den, eta):
        k, n = H.shape
        out = np.empty((k, n))
        for i in range(k):
            for j in range(n):
                b = B[i, j]
                ab = abs(b)
                num = (ab + b) / 2.0 + neg_gram_H[i, j] + reg_num[i, j]
                den = (ab - b) / 2.0 + pos_gram_H[i, j] + reg_den[i, j]
                r = num / (den + EPS)
                if eta == 0.5:
                    out[i, j] = H[i, j] * math.sqrt(r)
                elif eta == 1.0:
                    out[i, j] = H[i, j] * r
                else:
                    out[i, j] = H[i, j] * r ** eta
        return out

    @njit(cache=True)
    def pairwise_sqdist(X):
        p, n = X.shape
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                s = 0.0
                for r in range(p):
                    d = X[r, i] - X[r, j]
                    s += d * d
                out[i, j] = s
                out[j, i] = s
        return out

    @njit(cache=True)
    def assign(points, centers):
        n, d = points.shape
        k = centers.shape[0]
        labels = np.empty(n, dtype=np.int64)
        dist = np.empty(n)
        for i in range(n):
            best = np.inf
            arg = 0
            for c in range(k):
                s = 0.0
                for r in range(d):
                    t = points[i, r] - centers[c, r]
                    s += t * t
                if s < best:
                    best = s
                    arg = c
            labels[i] = arg
            dist[i] = best
        return labels, dist

    return SimpleNamespace(
        name="numba",
        mu_update=mu_update,
        pairwise_sqdist=pairwise_sqdist,
        assign=assign,
    )


try:
    numba_kernels = _build_numba()
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba_kernels = None

USE_NUMBA = numba_kernels is not None and not _flag("DSNMF_DISABLE_NUMBA")
active = numba_kernels if USE_NUMBA else numpy_kernels


def mu_update(H, B, pos_gram_H, neg_gram_H, reg_num=None, reg_den=None, eta=0.5):
    """Multiplicative nonnegative update shared by every Semi-NMF style rule.

    ``B`` is the cross term (``Z^T X``), ``pos_gram_H``/``neg_gram_H`` are
    ``[Z^T Z]^pos H`` and ``[Z^T Z]^neg H``. Optional ``reg_num``/``reg_den``
    are added to numerator and denominator (graph terms).
    """
    if reg_num is None:
        reg_num = np.zeros_like(H)
    if reg_den is None:
        reg_den = np.zeros_like(H)
    return active.mu_update(
        np.ascontiguousarray(H, dtype=np.float64),
        np.ascontiguousarray(B, dtype=np.float64),
        np.ascontiguousarray(pos_gram_H, dtype=np.float64),
        np.ascontiguousarray(neg_gram_H, dtype=np.float64),
        np.ascontiguousarray(reg_num, dtype=np.float64),
        np.ascontiguousarray(reg_den, dtype=np.float64),
        float(eta),
    )


def pairwise_sqdist(X):
    """Squared Euclidean distances between the columns of ``X``."""
    return active.pairwise_sqdist(np.ascontiguousarray(X, dtype=np.float64))


def assign(points, centers):
    """Nearest center for each row of ``points``; ties go to the lower index."""
    return active.assign(
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(centers, dtype=np.float64),
    )
