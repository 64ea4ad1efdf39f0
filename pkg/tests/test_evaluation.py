import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsnmf.errors import InvalidInputError
from dsnmf.evaluation import (accuracy_bruteforce, classification_accuracy, classify,
                              clustering_accuracy, gen_multiattr, gen_xor, kmeans, kmeans_fit,
                              linear_classifier, nmi)

label_pairs = st.integers(1, 40).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 4), min_size=n, max_size=n)))


def blobs(seed=0, sigma=0.01):
    r = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 10.0 * math.sqrt(0.75)]])
    truth = np.repeat(np.arange(3), 30)
    X = centers[truth].T + sigma * r.standard_normal((2, 90))
    return X, truth


# --------------------------------------------------------------------------
# k-means


def test_kmeans_separated_blobs():
    X, truth = blobs()
    assert clustering_accuracy(kmeans(X, 3, seed=1), truth) == 1.0


def test_kmeans_k_equals_n(rng):
    X = rng.standard_normal((3, 12))
    res = kmeans_fit(X, 12, seed=0)
    assert res.wcss == 0.0
    assert len(set(res.labels.tolist())) == 12


def test_kmeans_deterministic(rng):
    X = rng.standard_normal((4, 60))
    np.testing.assert_array_equal(kmeans(X, 5, seed=3), kmeans(X, 5, seed=3))


def test_kmeans_labels_in_range(rng):
    lab = kmeans(rng.standard_normal((2, 30)), 4, seed=0)
    assert lab.shape == (30,) and lab.min() >= 0 and lab.max() < 4


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_wcss_trace_nonincreasing(seed):
    X = np.random.default_rng(seed).standard_normal((3, 80))
    res = kmeans_fit(X, 6, seed=seed, restarts=3)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res.wcss_trace, res.wcss_trace[1:]))


def test_kmeans_duplicate_points():
    X = np.zeros((2, 5))
    lab = kmeans(X, 3, seed=0)
    assert lab.shape == (5,)


def test_kmeans_k_too_large(rng):
    with pytest.raises(InvalidInputError):
        kmeans(rng.standard_normal((2, 4)), 5)


# --------------------------------------------------------------------------
# accuracy


def test_accuracy_identity_and_relabel():
    truth = [0, 0, 1, 2, 2, 2]
    assert clustering_accuracy(truth, truth) == 1.0
    assert clustering_accuracy([2, 2, 0, 1, 1, 1], truth) == 1.0


def test_accuracy_half():
    assert clustering_accuracy([0, 0, 1, 1], [0, 1, 0, 1]) == 0.5


def test_accuracy_unequal_cluster_counts():
    # 3 clusters vs 2 classes: best one-to-one leaves one cluster unmatched
    assert clustering_accuracy([0, 0, 1, 1, 2, 2], [0, 0, 1, 1, 1, 1]) == pytest.approx(4 / 6)


def test_accuracy_errors():
    with pytest.raises(InvalidInputError):
        clustering_accuracy([0, 1], [0, 1, 1])
    with pytest.raises(InvalidInputError):
        clustering_accuracy([0, 1, 1], [0, -1, 1])


def test_hungarian_matches_bruteforce_random(rng):
    for _ in range(100):
        n = int(rng.integers(1, 30))
        kp, kt = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        pred, truth = rng.integers(0, kp, n), rng.integers(0, kt, n)
        assert clustering_accuracy(pred, truth) == accuracy_bruteforce(pred, truth)


@settings(max_examples=60, deadline=None)
@given(label_pairs, st.permutations(range(5)), st.randoms(use_true_random=False))
def test_accuracy_invariances(pair, perm, rnd):
    pred, truth = (np.array(v) for v in pair)
    base = clustering_accuracy(pred, truth)
    assert base == accuracy_bruteforce(pred, truth)
    assert clustering_accuracy(np.array(perm)[pred], truth) == base
    order = list(range(len(pred)))
    rnd.shuffle(order)
    assert clustering_accuracy(pred[order], truth[order]) == pytest.approx(base, abs=1e-15)


# --------------------------------------------------------------------------
# NMI


def test_nmi_hand_cases():
    assert nmi([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert nmi([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0
    assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0


def test_nmi_max_entropy_normalization():
    # pred splits 4 classes into 2 pairs: MI = ln 2, H(pred) = ln 2, H(truth) = ln 4
    assert nmi([0, 0, 1, 1], [0, 1, 2, 3]) == pytest.approx(0.5, abs=1e-15)


def test_nmi_unbalanced_hand_value():
    pred, truth = [0, 0, 0, 1], [0, 0, 1, 1]
    # contingency [[2,1],[0,1]]
    n = 4.0
    mi = (2 / n) * math.log(2 * n / (3 * 2)) + (1 / n) * math.log(1 * n / (3 * 2)) + (1 / n) * math.log(1 * n / (1 * 2))
    hp = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    ht = math.log(2)
    assert nmi(pred, truth) == pytest.approx(mi / max(hp, ht), rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(label_pairs)
def test_nmi_symmetric_and_bounded(pair):
    a, b = pair
    v = nmi(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(nmi(b, a), abs=1e-12)


# --------------------------------------------------------------------------
# classifier


def test_classifier_separable(rng):
    X = np.hstack([rng.normal(-3, 0.5, (2, 40)), rng.normal(3, 0.5, (2, 40))])
    y = [0] * 40 + [1] * 40
    clf = linear_classifier(X, y)
    assert classification_accuracy(clf, X, y) == 1.0
    assert set(classify(clf, X).tolist()) == {0, 1}


def test_classifier_multiclass(rng):
    X, truth = blobs(sigma=0.5)
    clf = linear_classifier(X, truth)
    assert classification_accuracy(clf, X, truth) == 1.0


@pytest.mark.parametrize("seed", range(3))
def test_classifier_raw_xor(seed):
    ds = gen_xor(seed=seed)
    y = ds.attribute("identity")
    clf = linear_classifier(ds.X, y)
    assert classification_accuracy(clf, ds.X, y) <= 0.75


def test_classifier_duplication_invariant(rng):
    X = rng.standard_normal((3, 30))
    y = (X[0] + 0.3 * X[1] > 0).astype(int)
    a = linear_classifier(X, y, seed=2)
    b = linear_classifier(np.hstack([X, X]), np.concatenate([y, y]), seed=2)
    np.testing.assert_allclose(a.weights, b.weights, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(a.bias, b.bias, rtol=1e-9, atol=1e-12)


def test_classifier_errors(rng):
    X = rng.standard_normal((2, 6))
    with pytest.raises(InvalidInputError):
        linear_classifier(X, [1] * 6)
    with pytest.raises(InvalidInputError):
        linear_classifier(X, [0, 1, 0, 1, 0, -1])
    with pytest.raises(InvalidInputError):
        linear_classifier(X, [0, 1, 0])


# --------------------------------------------------------------------------
# generators


def test_xor_defaults():
    ds = gen_xor()
    assert ds.X.shape == (2, 400)
    for a in ds.attributes:
        assert len(a.labels) == 400 and sorted(set(a.labels.tolist())) == [0, 1]


def test_xor_sigma_zero():
    ds = gen_xor(10, 0.0, seed=1)
    pts = {tuple(c) for c in ds.X.T}
    assert pts == {(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)}
    ident, pose = ds.attribute("identity").labels, ds.attribute("pose").labels
    np.testing.assert_array_equal(ident, (ds.X[0] > 0) != (ds.X[1] > 0))
    np.testing.assert_array_equal(pose, ds.X[0] > 0)


def test_generators_deterministic():
    np.testing.assert_array_equal(gen_xor(seed=4).X, gen_xor(seed=4).X)
    np.testing.assert_array_equal(gen_multiattr(seed=4).X, gen_multiattr(seed=4).X)
    assert not np.array_equal(gen_xor(seed=4).X, gen_xor(seed=5).X)


def test_multiattr_noise_zero():
    ds = gen_multiattr(3, 2, 5, 8, 0.0, seed=0)
    assert ds.X.shape == (8, 30)
    assert np.unique(ds.X, axis=1).shape[1] == 6
    assert all(len(a.labels) == 30 for a in ds.attributes)


def test_multiattr_kmeans_recovers_cells():
    ds = gen_multiattr(5, 4, 20, 50, 1e-3, seed=0)
    joint = ds.attribute("identity").labels * 4 + ds.attribute("pose").labels
    assert clustering_accuracy(kmeans(ds.X, 20, seed=0), joint) == 1.0


def test_generator_errors():
    with pytest.raises(InvalidInputError):
        gen_xor(0)
    with pytest.raises(InvalidInputError):
        gen_multiattr(n_poses=0)
