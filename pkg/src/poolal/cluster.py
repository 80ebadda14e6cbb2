"""k-means with k-means++ seeding, used for unsupervised pre-training.

Lloyd iterations run until the assignment reaches a fixpoint or max_iter.
A cluster that loses all members is reseeded to the point currently farthest
from its assigned centroid, which keeps the number of clusters stable across
the pre-training alternation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EngineError


@dataclass
class Clustering:
    centroids: np.ndarray          # (k, d)
    assignment: np.ndarray         # (n,) cluster ids
    inertia: float                 # sum of squared distances to assigned centroids
    inertia_history: list[float] = field(default_factory=list)
    reseeds: int = 0               # empty-cluster reseed events (monotonicity holds when 0)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n, k)."""
    d = np.sum(X ** 2, axis=1)[:, None] + np.sum(C ** 2, axis=1)[None, :] - 2.0 * (X @ C.T)
    return np.clip(d, 0.0, None)


def _seed_plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    centroids[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centroids[:1]).ravel()
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all points coincide with chosen centroids; any point works
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[j] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centroids[j:j + 1]).ravel())
    return centroids


def kmeans(features: np.ndarray, k: int, seed, max_iter: int = 100) -> Clustering:
    """Cluster rows of ``features`` into k groups; deterministic under seed."""
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise EngineError(f"k must satisfy 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centroids = _seed_plus_plus(X, k, rng)
    assignment = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    reseeds = 0
    for _ in range(max_iter):
        dists = _sq_dists(X, centroids)
        new_assignment = np.argmin(dists, axis=1)
        point_d = dists[np.arange(n), new_assignment]
        history.append(float(point_d.sum()))
        if np.array_equal(new_assignment, assignment):
            break
        for j in range(k):
            members = new_assignment == j
            if members.any():
                centroids[j] = X[members].mean(axis=0)
            else:
                far = int(np.argmax(point_d))
                centroids[j] = X[far]
                new_assignment[far] = j
                point_d[far] = 0.0
                reseeds += 1
        assignment = new_assignment
    dists = _sq_dists(X, centroids)
    assignment = np.argmin(dists, axis=1)
    inertia = float(dists[np.arange(n), assignment].sum())
    return Clustering(centroids=centroids, assignment=assignment, inertia=inertia,
                      inertia_history=history, reseeds=reseeds)


def cluster_pseudo_labels(cl: Clustering) -> tuple[np.ndarray, int]:
    """Reinterpret cluster assignments as training labels with c = k."""
    return cl.assignment.copy(), cl.centroids.shape[0]
