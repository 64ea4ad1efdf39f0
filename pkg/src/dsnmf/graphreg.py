"""Attribute graphs, Laplacians and the smoothness penalty."""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidInputError, ParseError, ShapeError
from .numerics import as_matrix

SCHEMES = ("binary", "rbf", "dot")
UNLABELED = -1


@dataclass(frozen=True)
class AttributeLabels:
    """Per-sample class ids for one attribute; ``-1`` marks an unlabeled sample."""

    labels: np.ndarray
    name: str = "attribute"

    def __post_init__(self):
        vals = self.labels
        if isinstance(vals, np.ndarray) and vals.dtype != object:
            arr = vals.astype(np.int64)
        else:
            arr = np.array([UNLABELED if v is None else int(v) for v in vals], dtype=np.int64)
        if arr.ndim != 1:
            raise InvalidInputError("labels must be one-dimensional")
        if np.any(arr < UNLABELED):
            raise InvalidInputError("class ids must be nonnegative (-1 = unlabeled)")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def labeled(self):
        return self.labels != UNLABELED

    @property
    def fully_labeled(self):
        return bool(np.all(self.labeled))


def as_labels(labels, name="attribute"):
    if isinstance(labels, AttributeLabels):
        return labels
    return AttributeLabels(labels, name)


@dataclass(frozen=True)
class AttributeGraph:
    """Similarity matrix ``W`` over samples with its degree and Laplacian."""

    W: np.ndarray
    degree: np.ndarray = field(init=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ShapeError(f"W must be square, got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise InvalidInputError("W contains non-finite entries")
        if np.any(W < 0):
            raise InvalidInputError("W must be nonnegative")
        if not np.array_equal(W, W.T):
            raise InvalidInputError("W must be symmetric")
        if np.any(np.diag(W) != 0):
            raise InvalidInputError("W must have a zero diagonal")
        d = W.sum(axis=1)
        W.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "degree", d)

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def D(self):
        return np.diag(self.degree)

    @property
    def L(self):
        return self.D - self.W

    @property
    def nnz(self):
        return int(np.count_nonzero(self.W))

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((n, n)))


def _pair_weights(X, scheme, sigma):
    if scheme == "binary":
        return None
    if X is None:
        raise InvalidInputError(f"scheme '{scheme}' requires the data matrix X")
    X = as_matrix(X, "X")
    if scheme == "rbf":
        if sigma is None or not sigma > 0:
            raise InvalidInputError("rbf weighting requires sigma > 0")
        return np.exp(-_kernels.pairwise_sqdist(X) / (2.0 * sigma ** 2))
    # negative inner products would break W >= 0; they are clipped to zero
    return np.maximum(X.T @ X, 0.0)


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise InvalidInputError(f"unknown weighting scheme {scheme!r}; expected one of {SCHEMES}")


def build_weight_matrix(labels, scheme="binary", X=None, sigma=None):
    """Graph connecting samples known to share a label.

    Unlabeled samples get no edges. With ``rbf`` or ``dot`` the edge weight
    is computed from the columns of ``X``.
    """
    _check_scheme(scheme)
    labels = as_labels(labels)
    y = labels.labels
    n = len(labels)
    if X is not None and np.shape(X)[1] != n:
        raise ShapeError(f"X has {np.shape(X)[1]} samples but labels has {n}")
    same = (y[:, None] == y[None, :]) & (y[:, None] != UNLABELED)
    np.fill_diagonal(same, False)
    weights = _pair_weights(X, scheme, sigma)
    W = same.astype(np.float64) if weights is None else np.where(same, weights, 0.0)
    return AttributeGraph(np.maximum(W, W.T))


def knn_graph(X, n_neighbors, scheme="binary", sigma=None):
    """Symmetrized k-nearest-neighbour graph over the columns of ``X``.

    An edge is kept if either endpoint selects the other. Distance ties are
    broken by ascending sample index.
    """
    _check_scheme(scheme)
    X = as_matrix(X, "X")
    n = X.shape[1]
    if not (1 <= n_neighbors < n):
        raise InvalidInputError(f"n_neighbors={n_neighbors} out of range [1, {n - 1}]")
    d2 = _kernels.pairwise_sqdist(X)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :n_neighbors]
    adj = np.zeros((n, n), dtype=bool)
    adj[np.repeat(np.arange(n), n_neighbors), order.ravel()] = True
    adj |= adj.T
    if scheme == "binary":
        W = adj.astype(np.float64)
    elif scheme == "rbf":
        if sigma is None or not sigma > 0:
            raise InvalidInputError("rbf weighting requires sigma > 0")
        np.fill_diagonal(d2, 0.0)
        W = np.where(adj, np.exp(-d2 / (2.0 * sigma ** 2)), 0.0)
    else:
        W = np.where(adj, np.maximum(X.T @ X, 0.0), 0.0)
    return AttributeGraph(np.maximum(W, W.T))


def smoothness(H, graph):
    """Graph smoothness ``Tr(H L H^T)`` of the columns of ``H``.

    Equals half of ``sum_jl W_jl ||h_j - h_l||^2``.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != graph.n:
        raise ShapeError(f"H has shape {H.shape}, graph expects {graph.n} columns")
    HW = H @ graph.W
    return float(np.sum(H * (H * graph.degree)) - np.sum(H * HW))


def save_graph(graph, path):
    """Write ``W`` as sparse triplets: header ``n nnz`` then ``i j w`` lines."""
    rows, cols = np.nonzero(graph.W)
    lines = [f"{graph.n} {rows.size}"]
    lines += [f"{i} {j} {float(graph.W[i, j])!r}" for i, j in zip(rows.tolist(), cols.tolist())]
    from .io import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")


def load_graph(path):
    """Read a graph written by :func:`save_graph`."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty graph file")
    try:
        n, nnz = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise ParseError(f"{path}:1: expected header 'n nnz'") from exc
    if len(lines) - 1 != nnz:
        raise ParseError(f"{path}: header declares {nnz} entries, found {len(lines) - 1}")
    W = np.zeros((n, n))
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}:{lineno}: expected 'i j w'") from exc
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"{path}:{lineno}: index out of range for n={n}")
        W[i, j] = w
    return AttributeGraph(W)
