"""Reciprocal k-nearest-neighbor affinity graph and its symmetric normalization.

The affinity between two embeddings is the clipped cosine raised to the third
power, so antipodal or orthogonal directions contribute nothing. Edges are
kept only when each endpoint ranks the other among its k most similar
neighbors (reciprocity); surviving edges carry the affinity as weight, and
exact-zero affinities are dropped. The propagation operator is the symmetric
normalization D^{-1/2} W D^{-1/2}, with all-zero rows for isolated nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import EngineError


@dataclass
class SparseGraph:
    n: int
    adjacency: sp.csr_matrix     # symmetric, nonnegative, zero diagonal
    degrees: np.ndarray          # W @ 1
    normalized: sp.csr_matrix    # D^{-1/2} W D^{-1/2}


def similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Affinity of two direction vectors: max(0, cos(u, v))**3."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise EngineError("similarity undefined for zero vectors")
    c = float(u @ v) / (nu * nv)
    return max(0.0, c) ** 3


def _pairwise_similarity(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise EngineError(f"zero-norm embedding rows {zero[:5].tolist()} have no direction")
    unit = features / norms[:, None]
    S = np.clip(unit @ unit.T, 0.0, None) ** 3
    np.fill_diagonal(S, 0.0)
    return S


def build_reciprocal_knn(features: np.ndarray, k: int) -> SparseGraph:
    """Brute-force reciprocal-kNN graph over embedding rows.

    Neighbor ranking is by descending similarity with ties broken by
    ascending index, so results are deterministic across platforms.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if not 1 <= k < n:
        raise EngineError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    S = _pairwise_similarity(features)
    # stable argsort on -S keeps equal similarities in ascending-index order
    order = np.argsort(-S, axis=1, kind="stable")
    neighbor = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), k)
    cols = order[:, :k].ravel()
    # self cannot appear: diagonal similarity was zeroed, but a zero-similarity
    # row could still rank self; mask it explicitly
    keep = rows != cols
    neighbor[rows[keep], cols[keep]] = True
    mutual = neighbor & neighbor.T
    W = np.where(mutual, S, 0.0)
    W = np.triu(W, 1)
    W = W + W.T  # exact symmetry of stored triangles
    return _finish(sp.csr_matrix(W))


def normalize(W) -> sp.csr_matrix:
    """Symmetric normalization D^{-1/2} W D^{-1/2}; zero-degree rows stay zero."""
    Wc = sp.csr_matrix(W, dtype=np.float64)
    Wc.eliminate_zeros()
    if (Wc != Wc.T).nnz != 0:
        raise EngineError("adjacency must be exactly symmetric")
    if Wc.diagonal().any():
        raise EngineError("adjacency must have zero diagonal")
    if Wc.nnz and Wc.data.min() < 0:
        raise EngineError("adjacency must be nonnegative")
    deg = np.asarray(Wc.sum(axis=1)).ravel()
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    coo = Wc.tocoo()
    # w * (inv_i * inv_j) keeps the two triangles bit-identical; the
    # left-associated D @ W @ D product would not
    data = coo.data * (inv_sqrt[coo.row] * inv_sqrt[coo.col])
    out = sp.csr_matrix(sp.coo_matrix((data, (coo.row, coo.col)), shape=Wc.shape))
    out.sort_indices()
    return out


def from_adjacency(W) -> SparseGraph:
    """Wrap an explicit adjacency matrix (dense or sparse) as a SparseGraph."""
    return _finish(sp.csr_matrix(W, dtype=np.float64))


def _finish(W: sp.csr_matrix) -> SparseGraph:
    W.eliminate_zeros()
    W.sort_indices()
    deg = np.asarray(W.sum(axis=1)).ravel()
    return SparseGraph(n=W.shape[0], adjacency=W, degrees=deg, normalized=normalize(W))


def dump_edges(g: SparseGraph, path: str) -> None:
    """Write one `i j weight` line per undirected edge (i < j), sorted by (i, j)."""
    coo = sp.triu(g.adjacency, 1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for idx in order:
            fh.write(f"{int(coo.row[idx])} {int(coo.col[idx])} {float(coo.data[idx])!r}\n")


def load_edges(path: str, n: int | None = None) -> SparseGraph:
    """Read the format written by :func:`dump_edges`."""
    ii: list[int] = []
    jj: list[int] = []
    ww: list[float] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise EngineError(f"{path}: line {lineno}: expected 'i j weight'")
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            if i == j:
                raise EngineError(f"{path}: line {lineno}: self-loop not allowed")
            ii.append(i)
            jj.append(j)
            ww.append(w)
    size = n if n is not None else (max(ii + jj) + 1 if ii else 0)
    W = sp.coo_matrix((ww + ww, (ii + jj, jj + ii)), shape=(size, size))
    return _finish(sp.csr_matrix(W))
