import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolal.acquire import (AcquisitionContext, Strategy, acquire_batch,
                            score_uncertainty, select_ceal, select_coreset,
                            select_jlp, select_uncertainty)
from poolal.dataset import Dataset, LabelState
from poolal.errors import EngineError
from poolal.graph import build_reciprocal_knn
from poolal.synth import make_chain

from conftest import brute_farthest_first, state_for


def make_ctx(probs=None, embeddings=None, labeled=(0,), n=None, seed=0, graph=None):
    if probs is None:
        rng = np.random.default_rng(seed)
        probs = rng.dirichlet(np.ones(3), size=n)
    n = probs.shape[0] if n is None else n
    if embeddings is None:
        embeddings = np.random.default_rng(seed + 1).normal(size=(n, 2))
    labeled = sorted(labeled)
    state = LabelState(labeled=list(labeled),
                       unlabeled=[i for i in range(n) if i not in set(labeled)],
                       labels={i: 0 for i in labeled})
    return AcquisitionContext(probs=probs, embeddings=embeddings, state=state,
                              rng=np.random.default_rng(seed), graph=graph)


# --- uncertainty ---

def test_uncertainty_picks_highest_entropy():
    probs = np.array([
        [0.98, 0.01, 0.01],   # 0: labeled
        [1/3, 1/3, 1/3],      # 1: max entropy
        [0.9, 0.05, 0.05],
        [0.5, 0.5, 0.0],
        [0.99, 0.005, 0.005],
    ])
    ctx = make_ctx(probs=probs)
    result = select_uncertainty(ctx, 2)
    assert result.selected == [1, 3]
    assert result.scores[0] == pytest.approx(math.log(3))
    assert result.scores[0] >= result.scores[1]


def test_uncertainty_tie_breaks_by_index():
    probs = np.tile(np.array([0.5, 0.25, 0.25]), (6, 1))
    ctx = make_ctx(probs=probs)
    assert select_uncertainty(ctx, 3).selected == [1, 2, 3]


def test_uncertainty_scores_align_with_pool():
    ctx = make_ctx(n=10, seed=3)
    H = score_uncertainty(ctx)
    assert H.shape == (len(ctx.state.unlabeled),)
    assert H.min() >= 0.0


# --- ceal ---

def test_ceal_pseudo_set_thresholds():
    probs = np.array([
        [0.98, 0.01, 0.01],
        [1/3, 1/3, 1/3],
        [1.0, 0.0, 0.0],     # zero entropy: always pseudo-labeled
        [0.6, 0.4, 0.0],
        [0.0, 1.0, 0.0],     # zero entropy
    ])
    ctx = make_ctx(probs=probs)
    result = select_ceal(ctx, 1, epsilon=0.0)
    assert result.selected == [1]
    assert sorted(result.pseudo) == [(2, 0), (4, 1)]

    # maximal threshold: every non-acquired unlabeled row is pseudo-labeled
    result = select_ceal(ctx, 1, epsilon=math.log(3))
    assert result.selected == [1]
    assert sorted(i for i, _ in result.pseudo) == [2, 3, 4]

    # strictly mixed rows with eps=0 yield nothing
    mixed = np.tile(np.array([0.6, 0.3, 0.1]), (4, 1))
    result = select_ceal(make_ctx(probs=mixed), 1, epsilon=0.0)
    assert result.pseudo == []


def test_ceal_pseudo_excludes_acquired():
    probs = np.array([[0.98, 0.02], [1.0, 0.0], [1.0, 0.0], [0.5, 0.5]])
    ctx = make_ctx(probs=probs)
    result = select_ceal(ctx, 2, epsilon=1.0)  # acquires 3 then a tie pick
    assert 3 in result.selected
    assert all(i not in result.selected for i, _ in result.pseudo)


# --- coreset ---

def test_coreset_one_dimensional_fixture():
    E = np.array([[0.0], [1.0], [2.0], [10.0]])
    probs = np.full((4, 2), 0.5)
    ctx = make_ctx(probs=probs, embeddings=E, labeled=(0,))
    result = select_coreset(ctx, 2)
    assert result.selected == [3, 2]
    assert result.scores == [pytest.approx(10.0), pytest.approx(2.0)]


@pytest.mark.parametrize("seed", range(10))
def test_coreset_matches_bruteforce_greedy(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 60))
    E = rng.normal(size=(n, 3))
    labeled = sorted(int(i) for i in rng.choice(n, size=3, replace=False))
    pool = [i for i in range(n) if i not in labeled]
    b = int(rng.integers(1, 6))
    ctx = make_ctx(probs=np.full((n, 2), 0.5), embeddings=E, labeled=labeled)
    fast = select_coreset(ctx, b).selected
    assert fast == brute_farthest_first(E, labeled, pool, b)


def test_coreset_cosine_metric():
    E = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [10.0, 0.0]])
    ctx = make_ctx(probs=np.full((4, 2), 0.5), embeddings=E, labeled=(0,))
    # under cosine distance, node 3 is identical in direction to node 0
    result = select_coreset(ctx, 1, metric="cosine")
    assert result.selected == [2]


def test_coreset_cosine_rejects_zero_embedding():
    E = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    ctx = make_ctx(probs=np.full((3, 2), 0.5), embeddings=E, labeled=(0,))
    with pytest.raises(EngineError, match="zero embeddings"):
        select_coreset(ctx, 1, metric="cosine")


def test_coreset_without_labels_seeds_lowest_index():
    E = np.array([[0.0], [5.0], [1.0]])
    ctx = make_ctx(probs=np.full((3, 2), 0.5), embeddings=E, labeled=())
    result = select_coreset(ctx, 2)
    assert result.selected[0] == 0  # all min-dists infinite: first argmax wins


# --- jlp ---

def chain_ctx(labeled=(0,)):
    ds = make_chain()
    g = build_reciprocal_knn(ds.features, 2)
    probs = np.full((3, 2), 0.5)
    return make_ctx(probs=probs, embeddings=ds.features, labeled=labeled, graph=g)


def test_jlp_chain_picks_farthest_node():
    result = select_jlp(chain_ctx(), 1, alpha=0.5)
    assert result.selected == [2]


def test_jlp_is_sequential():
    result = select_jlp(chain_ctx(), 2, alpha=0.5)
    assert result.selected == [2, 1]
    # second score reflects the updated labeled-plus-picked indicator
    assert result.scores[1] > result.scores[0]


def test_jlp_requires_graph_and_labels():
    ctx = make_ctx(n=5)
    with pytest.raises(EngineError, match="graph"):
        select_jlp(ctx, 1, alpha=0.5)
    empty = chain_ctx(labeled=())
    with pytest.raises(EngineError, match="labeled"):
        select_jlp(empty, 1, alpha=0.5)


# --- random and the dispatcher ---

def test_random_draws_without_replacement():
    ctx = make_ctx(n=30, seed=5)
    result = acquire_batch(ctx, Strategy("random"), 10)
    assert len(set(result.selected)) == 10
    assert set(result.selected) <= set(ctx.state.unlabeled)
    assert all(math.isnan(s) for s in result.scores)


def test_random_deterministic_under_rng():
    a = acquire_batch(make_ctx(n=30, seed=5), Strategy("random"), 5)
    b = acquire_batch(make_ctx(n=30, seed=5), Strategy("random"), 5)
    assert a.selected == b.selected


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["random", "uncertainty", "coreset", "ceal"]),
       st.integers(0, 1000), st.integers(1, 6))
def test_acquired_batch_is_distinct_unlabeled_subset(kind, seed, b):
    ctx = make_ctx(n=20, seed=seed, labeled=(0, 7))
    result = acquire_batch(ctx, Strategy(kind), b)
    assert len(result.selected) == b == len(set(result.selected))
    assert set(result.selected) <= set(ctx.state.unlabeled)
    assert result.seconds >= 0.0


def test_acquire_batch_bounds():
    ctx = make_ctx(n=5)
    with pytest.raises(EngineError, match="cannot acquire"):
        acquire_batch(ctx, Strategy("uncertainty"), 5)  # only 4 unlabeled
    with pytest.raises(EngineError, match="nonnegative"):
        acquire_batch(ctx, Strategy("uncertainty"), -1)
    empty = acquire_batch(ctx, Strategy("uncertainty"), 0)
    assert empty.selected == [] and empty.scores == []


def test_strategy_validation():
    with pytest.raises(EngineError, match="unknown strategy"):
        Strategy("bogus")
    with pytest.raises(EngineError, match="metric"):
        Strategy("coreset", coreset_metric="manhattan")
    with pytest.raises(EngineError, match="epsilon"):
        Strategy("ceal", ceal_epsilon=-1.0)
