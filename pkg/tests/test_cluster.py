import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolal.cluster import cluster_pseudo_labels, kmeans
from poolal.errors import EngineError


def test_three_separated_blobs_recovered():
    rng = np.random.default_rng(0)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    labels = np.repeat(np.arange(3), 20)
    X = centers[labels] + rng.normal(0, 0.1, (60, 2))
    cl = kmeans(X, 3, seed=1)
    # assignment matches the generating partition up to cluster relabeling
    for k in range(3):
        members = cl.assignment[labels == k]
        assert len(set(members.tolist())) == 1
    assert cl.inertia < 60 * 0.1 ** 2 * 10


def test_assignment_is_a_lloyd_fixpoint():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 3))
    cl = kmeans(X, 4, seed=7)
    d = np.linalg.norm(X[:, None, :] - cl.centroids[None, :, :], axis=2) ** 2
    np.testing.assert_array_equal(cl.assignment, np.argmin(d, axis=1))
    if cl.reseeds == 0:
        for j in range(4):
            members = X[cl.assignment == j]
            if members.size:
                np.testing.assert_allclose(cl.centroids[j], members.mean(axis=0),
                                           atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_inertia_history_monotone_without_reseeds(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 2))
    cl = kmeans(X, k, seed=seed)
    if cl.reseeds == 0:
        diffs = np.diff(cl.inertia_history)
        assert (diffs <= 1e-9).all()
    assert cl.inertia == pytest.approx(cl.inertia_history[-1], rel=1e-9)


def test_k_equals_n_gives_zero_inertia():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(8, 2))
    cl = kmeans(X, 8, seed=0)
    # expanded-form distances leave rounding noise at the true-zero optimum
    assert cl.inertia == pytest.approx(0.0, abs=1e-12)


def test_k_one_centroid_is_the_mean():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(25, 3))
    cl = kmeans(X, 1, seed=0)
    np.testing.assert_allclose(cl.centroids[0], X.mean(axis=0), atol=1e-12)
    assert cl.inertia == pytest.approx(((X - X.mean(axis=0)) ** 2).sum())


def test_seeding_uses_data_points():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 2))
    cl = kmeans(X, 5, seed=9, max_iter=0)
    # with no Lloyd steps the centroids are exactly the seeded points
    # (max_iter=0 skips the update loop entirely)
    rows = {tuple(row) for row in X}
    assert all(tuple(c) in rows for c in cl.centroids)


def test_duplicate_points_handled():
    X = np.zeros((10, 2))
    cl = kmeans(X, 3, seed=0)
    assert cl.inertia == pytest.approx(0.0)


def test_determinism_under_seed():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 4))
    a = kmeans(X, 6, seed=11)
    b = kmeans(X, 6, seed=11)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    np.testing.assert_array_equal(a.centroids, b.centroids)


def test_k_bounds_rejected():
    X = np.zeros((5, 2))
    with pytest.raises(EngineError, match="k must satisfy"):
        kmeans(X, 0, seed=0)
    with pytest.raises(EngineError, match="k must satisfy"):
        kmeans(X, 6, seed=0)


def test_cluster_pseudo_labels_shape():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(15, 2))
    cl = kmeans(X, 4, seed=0)
    labels, c = cluster_pseudo_labels(cl)
    assert c == 4
    assert labels.shape == (15,)
    assert labels.min() >= 0 and labels.max() < 4
    labels[0] = -1  # returned array is a copy, not a view
    assert cl.assignment.min() >= 0
