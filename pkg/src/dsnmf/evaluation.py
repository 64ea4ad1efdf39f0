"""Clustering/classification metrics and synthetic data generators."""
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .errors import InvalidInputError
from .graphreg import AttributeLabels, as_labels
from .numerics import as_matrix


# --------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    wcss: float
    wcss_trace: list


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    chosen = [int(rng.integers(n))]
    centers[0] = points[chosen[0]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a center; fall back to an unused index
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(free[rng.integers(free.size)])
        chosen.append(idx)
        centers[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def _lloyd(points, centers, max_iter, tol):
    k = centers.shape[0]
    labels, dist = _kernels.assign(points, centers)
    trace = [float(dist.sum())]
    for _ in range(max_iter):
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
            else:
                # empty cluster: move it onto the worst-fit point
                far = int(np.argmax(dist))
                centers[c] = points[far]
                dist[far] = 0.0
        new_labels, dist = _kernels.assign(points, centers)
        trace.append(float(dist.sum()))
        if np.array_equal(new_labels, labels) or trace[-2] - trace[-1] <= tol * trace[-2]:
            labels = new_labels
            break
        labels = new_labels
    return labels, centers, trace


def kmeans_fit(H, k, seed=0, restarts=10, max_iter=300, tol=0.0):
    """Lloyd's algorithm on the columns of ``H`` with k-means++ seeding.

    Returns the best of ``restarts`` runs (lowest within-cluster sum of
    squares) as a :class:`KMeansResult`.
    """
    H = as_matrix(H, "H")
    n = H.shape[1]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k={k} must lie in [1, n={n}]")
    points = np.ascontiguousarray(H.T)
    best = None
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    for ss in seeds:
        rng = np.random.default_rng(ss)
        centers = _kmeanspp(points, k, rng)
        labels, centers, trace = _lloyd(points, centers, max_iter, tol)
        if best is None or trace[-1] < best.wcss:
            best = KMeansResult(labels, centers, trace[-1], trace)
    return best


def kmeans(H, k, seed=0, restarts=10):
    """Cluster assignment (length ``n``, values in ``[0, k)``) for the columns of ``H``."""
    return kmeans_fit(H, k, seed, restarts).labels


# --------------------------------------------------------------------------
# metrics


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.int64).ravel()
    truth = as_labels(truth).labels
    if pred.shape[0] != truth.shape[0]:
        raise InvalidInputError(f"length mismatch: {pred.shape[0]} predictions, {truth.shape[0]} labels")
    if np.any(truth < 0):
        raise InvalidInputError("ground truth must be fully labeled")
    if np.any(pred < 0):
        raise InvalidInputError("cluster ids must be nonnegative")
    return pred, truth


def contingency(pred, truth):
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def clustering_accuracy(pred, truth):
    """Fraction matched under the best one-to-one cluster-to-class mapping."""
    pred, truth = _pair(pred, truth)
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / pred.shape[0])


def accuracy_bruteforce(pred, truth):
    """Exhaustive version of :func:`clustering_accuracy` for small label sets."""
    pred, truth = _pair(pred, truth)
    table = contingency(pred, truth)
    r, c = table.shape
    if r <= c:
        best = max(sum(table[i, perm[i]] for i in range(r)) for perm in permutations(range(c), r))
    else:
        best = max(sum(table[perm[j], j] for j in range(c)) for perm in permutations(range(r), c))
    return float(best / pred.shape[0])


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth):
    """Mutual information normalized by the larger marginal entropy.

    Returns 0 when either partition has zero entropy.
    """
    pred, truth = _pair(pred, truth)
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    pi, pj = table.sum(axis=1), table.sum(axis=0)
    hp, ht = _entropy(pi), _entropy(pj)
    denom = max(hp, ht)
    if denom == 0.0 or hp == 0.0 or ht == 0.0:
        return 0.0
    nz = table > 0
    mi = float(np.sum(table[nz] / n * np.log(table[nz] * n / np.outer(pi, pj)[nz])))
    return min(1.0, max(0.0, mi / denom))


# --------------------------------------------------------------------------
# linear classifier


@dataclass
class LinearClassifier:
    """One-vs-rest linear SVM (hinge loss) on standardized features."""

    classes: np.ndarray
    weights: np.ndarray
    bias: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    def decision_function(self, H):
        H = np.asarray(H, dtype=np.float64)
        Xs = (H.T - self.mean) / self.scale
        return Xs @ self.weights.T + self.bias

    def predict(self, H):
        scores = self.decision_function(H)
        if self.classes.size == 2:
            return np.where(scores[:, 0] >= 0, self.classes[1], self.classes[0])
        return self.classes[np.argmax(scores, axis=1)]


def _train_binary(Xs, y, gamma, n_iter, rng):
    # minimize 1/2 ||w||^2 + gamma * mean(hinge); full-batch subgradient with 1/t steps
    n, d = Xs.shape
    w = 1e-3 * rng.standard_normal(d)
    b = 0.0
    best = (np.inf, w.copy(), b)
    for t in range(1, n_iter + 1):
        margin = y * (Xs @ w + b)
        viol = margin < 1.0
        obj = 0.5 * float(w @ w) + gamma * float(np.mean(np.maximum(0.0, 1.0 - margin)))
        if obj < best[0]:
            best = (obj, w.copy(), b)
        gw = w - gamma * (y[viol] @ Xs[viol]) / n
        gb = -gamma * float(np.sum(y[viol])) / n
        lr = 1.0 / t
        w = w - lr * gw
        b = b - lr * gb
    return best[1], best[2]


def linear_classifier(train_H, labels, gamma=1.0, seed=0, n_iter=2000):
    """Train a one-vs-rest hinge-loss linear classifier on the columns of ``train_H``.

    ``gamma`` weighs the mean hinge loss against ``1/2 ||w||^2``.
    """
    H = as_matrix(train_H, "train_H")
    y = as_labels(labels).labels
    if y.shape[0] != H.shape[1]:
        raise InvalidInputError("labels and features disagree on the number of samples")
    if np.any(y < 0):
        raise InvalidInputError("training labels must be complete")
    classes = np.unique(y)
    if classes.size < 2:
        raise InvalidInputError("need at least two classes to train a classifier")
    if not gamma > 0:
        raise InvalidInputError("gamma must be > 0")
    mean = H.mean(axis=1)
    scale = H.std(axis=1)
    scale[scale == 0] = 1.0
    Xs = (H.T - mean) / scale
    rng = np.random.default_rng(seed)
    targets = [classes[1]] if classes.size == 2 else list(classes)
    ws, bs = [], []
    for c in targets:
        w, b = _train_binary(Xs, np.where(y == c, 1.0, -1.0), gamma, n_iter, rng)
        ws.append(w)
        bs.append(b)
    return LinearClassifier(classes, np.array(ws), np.array(bs), mean, scale)


def classify(classifier, H):
    return classifier.predict(H)


def classification_accuracy(classifier, H, labels):
    y = as_labels(labels).labels
    return float(np.mean(classifier.predict(H) == y))


# --------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticDataset:
    X: np.ndarray
    attributes: list
    seed: int

    def attribute(self, name):
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)


def gen_xor(n_per_cluster=100, sigma=1.0, seed=0):
    """Four isotropic Gaussian clusters centred at ``(+-1, +-1)``.

    ``identity`` is the XOR of the centre's quadrant signs; ``pose`` is the
    sign of the centre's first coordinate.
    """
    if n_per_cluster < 1:
        raise InvalidInputError("n_per_cluster must be >= 1")
    rng = np.random.default_rng(seed)
    centers = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    cols, ident, pose = [], [], []
    for cx, cy in centers:
        pts = np.array([cx, cy])[:, None] + sigma * rng.standard_normal((2, n_per_cluster))
        cols.append(pts)
        ident += [int((cx > 0) != (cy > 0))] * n_per_cluster
        pose += [int(cx > 0)] * n_per_cluster
    X = np.hstack(cols)
    return SyntheticDataset(X, [AttributeLabels(ident, "identity"), AttributeLabels(pose, "pose")], seed)


def gen_multiattr(n_ids=5, n_poses=4, samples_per_cell=20, dims=50, noise=0.3, seed=0,
                  pose_scale=3.0, id_scale=1.5, pose_jitter=0.3):
    """Hierarchical two-attribute mixture.

    Identity centroids are drawn first. Each (identity, pose) cell then gets
    an offset made of a pose direction shared by all identities plus a small
    identity-specific perturbation. Isotropic noise is added last. Pose
    offsets are larger than identity spread, so pose is the dominant factor
    of variation and identity the finer one.
    """
    for name, v in (("n_ids", n_ids), ("n_poses", n_poses), ("samples_per_cell", samples_per_cell), ("dims", dims)):
        if v < 1:
            raise InvalidInputError(f"{name} must be >= 1")
    rng = np.random.default_rng(seed)
    ids = id_scale * rng.standard_normal((n_ids, dims))
    poses = pose_scale * rng.standard_normal((n_poses, dims))
    jitter = pose_jitter * rng.standard_normal((n_ids, n_poses, dims))
    cols, ident, pose = [], [], []
    for a in range(n_ids):
        for q in range(n_poses):
            center = ids[a] + poses[q] + jitter[a, q]
            cols.append(center[:, None] + noise * rng.standard_normal((dims, samples_per_cell)))
            ident += [a] * samples_per_cell
            pose += [q] * samples_per_cell
    X = np.hstack(cols)
    return SyntheticDataset(X, [AttributeLabels(ident, "identity"), AttributeLabels(pose, "pose")], seed)
