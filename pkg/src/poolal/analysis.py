"""Agreement study between acquisition strategies.

Two strategies acquire from the same starting state; each acquired batch is
oracle-labeled and the enlarged label set is propagated over the shared
graph. On the pool both runs still leave unlabeled, the certainty weights are
averaged and pseudo-label agreement is measured: the percentage of agreeing
indices, weighted accuracies against the truth on the agreeing and
disagreeing subsets (weights renormalized per subset), and the average
weights per subset. A rank-scatter export pairs the per-example rankings of
two score vectors for qualitative comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquire import (AcquisitionContext, Strategy, _pairwise_distance,
                      acquire_batch, score_uncertainty)
from .dataset import Dataset, commit_batch, oracle_label
from .errors import EngineError
from .propagate import pseudo_label_all, solve_propagation


@dataclass
class AgreementReport:
    strategy_a: str
    strategy_b: str
    pool_size: int               # |U'| = indices unlabeled under both runs
    agree_count: int
    pct_agree: float             # unweighted percentage of agreeing pseudo-labels
    agreement_weighted: float    # weighted accuracy of a's labels against b's
    acc_agree: float | None      # weighted accuracy vs truth where labels agree
    acc_disagree_a: float | None  # a's weighted accuracy vs truth where they differ
    acc_disagree_b: float | None
    acc_overall_a: float         # a's weighted accuracy vs truth on the whole pool
    acc_overall_b: float
    w_agree: float | None        # mean averaged weight on the agreeing subset
    w_disagree: float | None

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


AGREEMENT_HEADER = ["strategy_a", "strategy_b", "pool_size", "agree_count",
                    "pct_agree", "agreement_weighted", "acc_agree",
                    "acc_disagree_a", "acc_disagree_b", "acc_overall_a",
                    "acc_overall_b", "w_agree", "w_disagree"]


def weighted_accuracy(z, z_prime, w, indices=None) -> float:
    """Weight-normalized agreement rate of two labelings.

    Weights are normalized to sum to one, so the result is invariant to
    positive rescaling of w. ``indices`` optionally restricts full-length
    vectors to a subset first.
    """
    z = np.asarray(z)
    z_prime = np.asarray(z_prime)
    w = np.asarray(w, dtype=np.float64)
    if indices is not None:
        idx = np.asarray(indices, dtype=np.int64)
        z, z_prime, w = z[idx], z_prime[idx], w[idx]
    if not (z.shape == z_prime.shape == w.shape):
        raise EngineError("weighted_accuracy inputs must have equal length")
    if w.size and w.min() < 0:
        raise EngineError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise EngineError("weighted accuracy undefined for all-zero weights")
    return float(np.sum((w / total) * (z == z_prime)))


def _subset_accuracy(z, truth, w) -> float | None:
    """Weighted accuracy on a subset, or None when the subset carries no mass."""
    if z.size == 0 or w.sum() <= 0:
        return None
    return weighted_accuracy(z, truth, w)


def compare_strategies(ds: Dataset, ctx: AcquisitionContext, strat_a: Strategy,
                       strat_b: Strategy, b: int, alpha: float,
                       tol: float = 1e-8, max_iter: int | None = None) -> AgreementReport:
    """Acquire with both strategies from the same state and compare pseudo-labels.

    Each strategy's batch is labeled through the oracle (metered like any
    other oracle use), then propagated with the shared graph.
    """
    if ctx.graph is None:
        raise EngineError("agreement comparison needs a graph in the context")
    c = ds.num_classes
    per_strategy = {}
    for name, strat in (("a", strat_a), ("b", strat_b)):
        rng = np.random.default_rng(int(ctx.rng.integers(2 ** 63)))
        sub = AcquisitionContext(probs=ctx.probs, embeddings=ctx.embeddings,
                                 state=ctx.state, rng=rng, graph=ctx.graph,
                                 tol=tol, max_iter=max_iter)
        result = acquire_batch(sub, strat, b)
        answers = [oracle_label(ds, i) for i in result.selected]
        new_state = commit_batch(ctx.state, result.selected, answers)
        prop = pseudo_label_all(ctx.graph, new_state, c, alpha, tol, max_iter)
        per_strategy[name] = {
            "selected": set(result.selected),
            "labels": dict(zip(prop.unlabeled.tolist(), prop.pseudo_labels.tolist())),
            "weights": dict(zip(prop.unlabeled.tolist(), prop.weights.tolist())),
        }

    banned = per_strategy["a"]["selected"] | per_strategy["b"]["selected"]
    common = np.asarray([i for i in ctx.state.unlabeled if i not in banned],
                        dtype=np.int64)
    if common.size == 0:
        raise EngineError("no common unlabeled pool left to compare on")
    ya = np.asarray([per_strategy["a"]["labels"][i] for i in common.tolist()])
    yb = np.asarray([per_strategy["b"]["labels"][i] for i in common.tolist()])
    wa = np.asarray([per_strategy["a"]["weights"][i] for i in common.tolist()])
    wb = np.asarray([per_strategy["b"]["weights"][i] for i in common.tolist()])
    w_avg = 0.5 * (wa + wb)
    if w_avg.sum() <= 0:
        raise EngineError("averaged weights are all zero; nothing to weight")
    truth = ds.eval_labels[common]
    agree = ya == yb

    return AgreementReport(
        strategy_a=strat_a.kind,
        strategy_b=strat_b.kind,
        pool_size=int(common.size),
        agree_count=int(agree.sum()),
        pct_agree=float(100.0 * agree.mean()),
        agreement_weighted=weighted_accuracy(ya, yb, w_avg),
        acc_agree=_subset_accuracy(ya[agree], truth[agree], w_avg[agree]),
        acc_disagree_a=_subset_accuracy(ya[~agree], truth[~agree], w_avg[~agree]),
        acc_disagree_b=_subset_accuracy(yb[~agree], truth[~agree], w_avg[~agree]),
        acc_overall_a=weighted_accuracy(ya, truth, w_avg),
        acc_overall_b=weighted_accuracy(yb, truth, w_avg),
        w_agree=float(w_avg[agree].mean()) if agree.any() else None,
        w_disagree=float(w_avg[~agree].mean()) if (~agree).any() else None,
    )


def score_vector_for(ctx: AcquisitionContext, strat: Strategy) -> np.ndarray:
    """Per-unlabeled preference scores at the current state (higher = earlier).

    Sequential strategies are scored by their first-pick criterion: distance
    to the nearest labeled embedding for farthest-first, negated diffused
    similarity for the propagation strategy. Random draws uniform scores from
    the context generator, giving a random ranking.
    """
    U = ctx.state.unlabeled_array()
    if strat.kind in ("uncertainty", "ceal"):
        return score_uncertainty(ctx)
    if strat.kind == "coreset":
        L = ctx.state.labeled_array()
        if L.size == 0:
            raise EngineError("coreset scores need at least one labeled example")
        E = np.asarray(ctx.embeddings, dtype=np.float64)
        return _pairwise_distance(E[U], E[L], strat.coreset_metric).min(axis=1)
    if strat.kind == "jlp":
        if ctx.graph is None:
            raise EngineError("jlp scores need a graph in the context")
        indicator = np.zeros((ctx.graph.n, 1))
        indicator[ctx.state.labeled_array(), 0] = 1.0
        h = solve_propagation(ctx.graph, indicator, strat.jlp_alpha,
                              ctx.tol, ctx.max_iter)[:, 0]
        return -h[U]
    return ctx.rng.uniform(size=U.size)


def dense_ranks(scores: np.ndarray) -> np.ndarray:
    """Dense ranks on descending score: rank 1 is the highest score, ties share."""
    scores = np.asarray(scores, dtype=np.float64)
    uniq = np.unique(scores)                 # ascending
    return uniq.size - np.searchsorted(uniq, scores)


def export_rank_scatter(scores_a, scores_b, sample_frac: float, seed=0) -> list[tuple[int, int, int]]:
    """Pair the dense ranks of two score vectors on a random index sample.

    Returns (index, rank_a, rank_b) rows sorted by index; the sample holds
    floor(frac * len) distinct indices drawn under ``seed``.
    """
    scores_a = np.asarray(scores_a, dtype=np.float64)
    scores_b = np.asarray(scores_b, dtype=np.float64)
    if scores_a.shape != scores_b.shape or scores_a.ndim != 1:
        raise EngineError("score vectors must be 1-D and equally long")
    if not 0.0 < sample_frac <= 1.0:
        raise EngineError("sample_frac must lie in (0, 1]")
    ra = dense_ranks(scores_a)
    rb = dense_ranks(scores_b)
    n = scores_a.size
    m = max(1, int(n * sample_frac))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=m, replace=False))
    return [(int(i), int(ra[i]), int(rb[i])) for i in chosen]


SCATTER_HEADER = ["index", "rank_a", "rank_b"]
