"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's own code paths: dense
linear solves instead of conjugate gradient, quadratic-time loops instead of
vectorized graph construction, and explicit sequential greedy selection.
Tests compare the fast implementations against these.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from poolal.dataset import Dataset, LabelState
from poolal.graph import SparseGraph, from_adjacency


def dense_propagation(g: SparseGraph, Y: np.ndarray, alpha: float) -> np.ndarray:
    """Direct dense solve of (I - alpha * What) X = (1 - alpha) * Y."""
    What = g.normalized.toarray()
    A = np.eye(g.n) - alpha * What
    return np.linalg.solve(A, (1.0 - alpha) * np.asarray(Y, dtype=np.float64))


def brute_reciprocal_knn(X: np.ndarray, k: int) -> np.ndarray:
    """Quadratic-time reciprocal-kNN adjacency with clipped-cosine-cubed weights."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    unit = X / np.linalg.norm(X, axis=1, keepdims=True)
    S = np.clip(unit @ unit.T, 0.0, None) ** 3
    np.fill_diagonal(S, 0.0)
    topk = []
    for i in range(n):
        ranked = sorted(range(n), key=lambda j: (-S[i, j], j))
        topk.append(set(j for j in ranked[:k] if j != i))
    W = np.zeros((n, n))
    for i in range(n):
        for j in topk[i]:
            if i in topk[j] and S[i, j] > 0.0:
                W[i, j] = S[i, j]
                W[j, i] = S[i, j]
    return W


def brute_farthest_first(E: np.ndarray, labeled: list[int], pool: list[int],
                         b: int) -> list[int]:
    """Sequential greedy max-min-distance selection, one explicit pass per pick."""
    chosen: list[int] = []
    for _ in range(b):
        best, best_d = None, -1.0
        anchors = labeled + chosen
        for i in pool:
            if i in chosen:
                continue
            d = min(float(np.linalg.norm(E[i] - E[j])) for j in anchors) if anchors else np.inf
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


def random_sparse_graph(rng: np.random.Generator, n: int, k: int) -> SparseGraph:
    """Random symmetric nonnegative adjacency with roughly k edges per node."""
    W = np.zeros((n, n))
    for i in range(n):
        others = rng.choice(n - 1, size=min(k, n - 1), replace=False)
        others = np.where(others >= i, others + 1, others)
        W[i, others] = rng.uniform(0.1, 1.0, others.size)
    W = np.triu(W, 1)
    W = W + W.T
    return from_adjacency(sp.csr_matrix(W))


def state_for(ds: Dataset, labeled: list[int]) -> LabelState:
    """LabelState with ground-truth labels on the given indices."""
    labeled = sorted(labeled)
    lset = set(labeled)
    return LabelState(
        labeled=labeled,
        unlabeled=[i for i in range(ds.n) if i not in lset],
        labels={i: int(ds.eval_labels[i]) for i in labeled},
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def moons_small():
    from poolal.synth import make_two_moons
    return make_two_moons(120, noise=0.1, seed=5)
