"""Transductive label propagation and its derived quantities.

Known labels are encoded one-hot and diffused over the normalized graph by
solving (I - alpha * What) x = (1 - alpha) * y per class column with conjugate
gradient; the system is symmetric positive definite for alpha < 1 since the
spectral radius of What is at most 1. Row-normalizing the diffused scores
gives per-node class distributions, from which each unlabeled node receives a
pseudo-label (argmax) and a certainty weight (one minus normalized entropy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import LabelState
from .errors import ConvergenceError, EngineError
from .graph import SparseGraph

DEFAULT_TOL = 1e-8


@dataclass
class Propagation:
    """Diffusion output; per-U vectors are aligned with ``unlabeled`` order."""

    scores: np.ndarray        # (n, c) nonnegative diffusion scores
    probs: np.ndarray         # (n, c) row-normalized where defined, else zero rows
    defined: np.ndarray       # (n,) True where the score row sum is positive
    unlabeled: np.ndarray     # (|U|,) indices this propagation pseudo-labels
    pseudo_labels: np.ndarray  # (|U|,) argmax class per unlabeled node
    weights: np.ndarray       # (|U|,) certainty weights in [0, 1]
    alpha: float


def one_hot(L, y, n: int, c: int) -> np.ndarray:
    """Indicator matrix with row i = e_{y_i} for i in L, zero elsewhere."""
    L = np.asarray(L, dtype=np.int64)
    Y = np.zeros((n, c), dtype=np.float64)
    if L.size == 0:
        return Y
    y = np.asarray(y, dtype=np.int64)
    if y.min() < 0 or y.max() >= c:
        raise EngineError(f"label outside [0, {c})")
    Y[L, y] = 1.0
    return Y


def default_max_iter(n: int) -> int:
    return int(10 * math.sqrt(n)) + 100


def cg_solve(matvec, b: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Conjugate gradient for an SPD operator given as a matvec callable.

    Stops when ||b - A x|| <= tol * ||b||. Raises ConvergenceError carrying
    the final relative residual if the iteration budget runs out.
    """
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    threshold = tol * b_norm
    for _ in range(max_iter):
        if math.sqrt(rs) <= threshold:
            return x
        Ap = matvec(p)
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if math.sqrt(rs) <= threshold:
        return x
    raise ConvergenceError(
        f"conjugate gradient did not converge in {max_iter} iterations",
        residual=math.sqrt(rs) / b_norm,
    )


def solve_propagation(g: SparseGraph, Y: np.ndarray, alpha: float,
                      tol: float = DEFAULT_TOL, max_iter: int | None = None) -> np.ndarray:
    """Diffuse Y over the graph: columns of (1-alpha) (I - alpha What)^{-1} Y.

    Columns are independent SPD solves. Tiny negative values from finite CG
    tolerance are clipped at zero; the exact solution is a nonnegative
    Neumann series.
    """
    if not 0.0 <= alpha < 1.0:
        raise EngineError(f"alpha must lie in [0, 1), got {alpha}")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != g.n:
        raise EngineError(f"Y must be (n, c) with n={g.n}")
    if Y.size and Y.min() < 0:
        raise EngineError("Y must be nonnegative")
    if max_iter is None:
        max_iter = default_max_iter(g.n)
    What = g.normalized

    def matvec(v: np.ndarray) -> np.ndarray:
        return v - alpha * (What @ v)

    out = np.empty_like(Y)
    for k in range(Y.shape[1]):
        out[:, k] = cg_solve(matvec, (1.0 - alpha) * Y[:, k], tol, max_iter)
    np.clip(out, 0.0, None, out=out)
    return out


def prediction(p: np.ndarray) -> int:
    """Most probable class; ties resolve to the lowest class id."""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        raise EngineError("prediction on empty vector")
    return int(np.argmax(p))


def entropy(p: np.ndarray) -> float:
    """Shannon entropy (natural log) of a nonnegative vector, renormalized
    internally; lies in [0, ln c]."""
    p = np.asarray(p, dtype=np.float64)
    if p.size and p.min() < 0:
        raise EngineError("entropy undefined for negative entries")
    total = p.sum()
    if total <= 0:
        raise EngineError("entropy undefined for zero-sum vector")
    q = p / total
    nz = q > 0
    return float(-np.sum(q[nz] * np.log(q[nz])))


def certainty_weight(p: np.ndarray, c: int) -> float:
    """1 - H(p)/ln(c): 1 for one-hot rows, 0 for uniform rows."""
    if c < 2:
        raise EngineError("certainty weight needs at least 2 classes")
    return 1.0 - entropy(p) / math.log(c)


def _row_entropies(P: np.ndarray) -> np.ndarray:
    safe = np.where(P > 0, P, 1.0)
    return -np.sum(P * np.log(safe), axis=1)


def pseudo_label_all(g: SparseGraph, state: LabelState, c: int, alpha: float,
                     tol: float = DEFAULT_TOL, max_iter: int | None = None) -> Propagation:
    """Propagate current labels and pseudo-label every unlabeled node.

    Nodes the diffusion cannot reach (zero score row) get weight 0, so they
    contribute nothing to weighted sampling, and the majority class of the
    labeled set as a placeholder pseudo-label.
    """
    if not state.labeled:
        raise EngineError("propagation needs at least one labeled example")
    Y = one_hot(state.labeled_array(), state.labels_array(), g.n, c)
    scores = solve_propagation(g, Y, alpha, tol, max_iter)
    sums = scores.sum(axis=1)
    defined = sums > 0
    probs = np.zeros_like(scores)
    probs[defined] = scores[defined] / sums[defined, None]

    U = state.unlabeled_array()
    counts = np.bincount(state.labels_array(), minlength=c)
    majority = int(np.argmax(counts))
    pseudo = np.full(U.size, majority, dtype=np.int64)
    weights = np.zeros(U.size, dtype=np.float64)
    du = defined[U]
    if du.any():
        PU = probs[U[du]]
        pseudo[du] = np.argmax(PU, axis=1)
        weights[du] = 1.0 - _row_entropies(PU) / math.log(c)
    np.clip(weights, 0.0, 1.0, out=weights)
    return Propagation(scores=scores, probs=probs, defined=defined, unlabeled=U,
                       pseudo_labels=pseudo, weights=weights, alpha=alpha)
