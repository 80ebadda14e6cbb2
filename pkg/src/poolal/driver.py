"""End-to-end acquisition-cycle orchestration.

One run executes, per repeat seed: optional unsupervised pre-training for the
initial parameters, then a fixed number of cycles of {re-initialize from the
pre-trained state, train on the current labels (optionally with per-epoch
graph propagation and weighted pseudo-label batches), measure test accuracy,
acquire a batch, query the oracle, commit}. Accuracy is always recorded after
training and before acquisition, so a record at cycle j reflects
|L0| + j * budget labels.

For models whose embedding is the raw input the affinity graph cannot change
across epochs; the driver builds it once per run unless forced otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .acquire import (DEFAULT_CEAL_EPSILON, AcquisitionContext, Strategy,
                      acquire_batch)
from .dataset import Dataset, LabelState, commit_batch, init_labels, oracle_label
from .errors import EngineError
from .graph import SparseGraph, build_reciprocal_knn
from .model import (Classifier, TrainPlan, make_model, predict_all,
                    pretrain_unsupervised, train_semi, train_supervised)
from .propagate import pseudo_label_all


@dataclass
class RunConfig:
    strategy: str = "random"
    budget: int = 2
    cycles: int = 5
    repeats: int = 5
    seed: int = 0
    pre: bool = False
    semi: bool = False
    per_class: int = 1
    unbalanced: bool = False
    model: str = "linear"
    embed_dim: int | None = None
    k_graph: int = 50
    alpha: float = 0.99
    k_pretrain: int | None = None        # default: 10 * num_classes
    pretrain_rounds: int = 3
    ceal_epsilon: float = DEFAULT_CEAL_EPSILON
    coreset_metric: str = "euclidean"
    tol: float = 1e-8
    max_iter: int | None = None
    force_rebuild: bool = False          # rebuild the graph every epoch regardless
    plan: TrainPlan = field(default_factory=TrainPlan)

    def __post_init__(self):
        if self.cycles < 1 or self.budget < 1 or self.repeats < 1:
            raise EngineError("cycles, budget, and repeats must all be >= 1")

    def strategy_obj(self) -> Strategy:
        return Strategy(kind=self.strategy, ceal_epsilon=self.ceal_epsilon,
                        jlp_alpha=self.alpha, coreset_metric=self.coreset_metric)


@dataclass
class CycleRecord:
    strategy: str
    seed: int                  # master seed of the run
    repeat: int                # repeat index under the master seed
    cycle: int
    labeled_count: int         # |L| used for training this cycle
    accuracy: float
    lp_accuracy: float | None  # pseudo-label accuracy on U at the first semi epoch
    acquisition_seconds: float
    oracle_calls: int          # cumulative dataset counter after this cycle's commit
    ceal_pseudo_count: int     # confident pseudo-labels produced by this acquisition

    def to_json_dict(self) -> dict[str, Any]:
        # Wall-clock timing is reporting-only and excluded here: serialized
        # records must be byte-identical across reruns with equal argv+seed.
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "repeat": self.repeat,
            "cycle": self.cycle,
            "labeled_count": self.labeled_count,
            "accuracy": self.accuracy,
            "lp_accuracy": self.lp_accuracy,
            "oracle_calls": self.oracle_calls,
            "ceal_pseudo_count": self.ceal_pseudo_count,
        }


@dataclass
class RunStats:
    propagation_calls: int = 0
    graph_builds: int = 0


@dataclass
class RunResult:
    records: list[CycleRecord]
    stats: RunStats


class _GraphCache:
    """Builds the affinity graph on demand; caches it when it cannot change."""

    def __init__(self, k: int, static: bool, stats: RunStats):
        self.k = k
        self.static = static
        self.stats = stats
        self._cached: SparseGraph | None = None

    def get(self, embeddings: np.ndarray) -> SparseGraph:
        if self.static and self._cached is not None:
            return self._cached
        g = build_reciprocal_knn(embeddings, self.k)
        self.stats.graph_builds += 1
        if self.static:
            self._cached = g
        return g


def run(config: RunConfig, train: Dataset, test: Dataset) -> RunResult:
    """Execute the full acquisition simulation over all repeats."""
    if train.dim != test.dim or train.num_classes != test.num_classes:
        raise EngineError("train and test datasets must share dimensions and classes")
    c = train.num_classes
    strat = config.strategy_obj()
    needs_graph_for_acquire = strat.kind == "jlp"
    plan = config.plan
    stats = RunStats()
    records: list[CycleRecord] = []
    master = np.random.SeedSequence(config.seed)
    repeat_seqs = master.spawn(config.repeats)

    for r in range(config.repeats):
        labels_seq, pre_seq, model_seq, train_seq, acquire_seq = repeat_seqs[r].spawn(5)
        state = init_labels(train, config.per_class, labels_seq, unbalanced=config.unbalanced)
        if config.pre:
            k_pre = config.k_pretrain if config.k_pretrain is not None else 10 * c
            theta0 = pretrain_unsupervised(train, min(k_pre, train.n), config.pretrain_rounds,
                                           plan, pre_seq, config.model, config.embed_dim)
        else:
            theta0 = make_model(config.model, train.dim, c,
                                np.random.default_rng(model_seq), config.embed_dim)
        rng_train = np.random.default_rng(train_seq)
        rng_acquire = np.random.default_rng(acquire_seq)
        graphs = _GraphCache(config.k_graph,
                             theta0.embedding_is_static and not config.force_rebuild, stats)
        calls_before = train.oracle_calls
        extra_pseudo: tuple[np.ndarray, np.ndarray] | None = None

        for cycle in range(config.cycles):
            labeled_count = len(state.labeled)
            lp_accuracy: float | None = None
            if config.semi:
                model = train_supervised(train, state, plan, theta0, rng_train,
                                         epochs=plan.warmup_epochs, extra=extra_pseudo)
                for epoch in range(plan.epochs):
                    g = graphs.get(model.embed(train.features))
                    prop = pseudo_label_all(g, state, c, config.alpha,
                                            config.tol, config.max_iter)
                    stats.propagation_calls += 1
                    if epoch == 0:
                        truth = train.eval_labels[prop.unlabeled]
                        lp_accuracy = float(np.mean(prop.pseudo_labels == truth))
                    lr_t = plan.warmup_epochs + epoch
                    if prop.weights.sum() <= 0:
                        # nothing to sample from: plain supervised epoch instead
                        model = train_supervised(train, state, plan, model, rng_train,
                                                 epochs=1, lr_t0=lr_t, extra=extra_pseudo)
                    else:
                        model = train_semi(train, state, prop, plan, model,
                                           rng_train, lr_t=lr_t)
            else:
                model = train_supervised(train, state, plan, theta0, rng_train,
                                         extra=extra_pseudo)

            probs_test = predict_all(test, model)
            accuracy = float(np.mean(np.argmax(probs_test, axis=1) == test.eval_labels))

            ctx = AcquisitionContext(
                probs=predict_all(train, model),
                embeddings=model.embed(train.features),
                state=state,
                rng=rng_acquire,
                graph=graphs.get(model.embed(train.features)) if needs_graph_for_acquire else None,
                tol=config.tol,
                max_iter=config.max_iter,
            )
            result = acquire_batch(ctx, strat, config.budget)
            answers = [oracle_label(train, i) for i in result.selected]
            state = commit_batch(state, result.selected, answers)
            extra_pseudo = None
            if strat.kind == "ceal" and result.pseudo:
                idx = np.asarray([i for i, _ in result.pseudo], dtype=np.int64)
                lab = np.asarray([y for _, y in result.pseudo], dtype=np.int64)
                extra_pseudo = (idx, lab)

            records.append(CycleRecord(
                strategy=strat.kind,
                seed=config.seed,
                repeat=r,
                cycle=cycle,
                labeled_count=labeled_count,
                accuracy=accuracy,
                lp_accuracy=lp_accuracy,
                acquisition_seconds=result.seconds,
                oracle_calls=train.oracle_calls,
                ceal_pseudo_count=len(result.pseudo),
            ))

        spent = train.oracle_calls - calls_before
        expected = config.cycles * config.budget
        if spent != expected:
            raise EngineError(f"budget audit failed: {spent} oracle calls, expected {expected}")

    return RunResult(records=records, stats=stats)


@dataclass
class SummaryRow:
    strategy: str
    cycle: int
    labeled_count: int
    mean_accuracy: float
    std_accuracy: float
    repeats: int
    single_repeat: bool      # std reported as 0 by convention when True

    def to_csv_row(self) -> list:
        return [self.strategy, self.cycle, self.labeled_count,
                repr(self.mean_accuracy), repr(self.std_accuracy),
                self.repeats, int(self.single_repeat)]


SUMMARY_HEADER = ["strategy", "cycle", "labeled_count", "mean_accuracy",
                  "std_accuracy", "repeats", "single_repeat"]


def summarize(records: list[CycleRecord]) -> list[SummaryRow]:
    """Per-(strategy, cycle) mean and unbiased std of test accuracy."""
    if not records:
        raise EngineError("cannot summarize an empty record list")
    groups: dict[tuple[str, int], list[CycleRecord]] = {}
    for rec in records:
        groups.setdefault((rec.strategy, rec.cycle), []).append(rec)
    rows = []
    for (strategy, cycle) in sorted(groups):
        group = groups[(strategy, cycle)]
        accs = np.asarray([g.accuracy for g in group], dtype=np.float64)
        single = accs.size == 1
        std = 0.0 if single else float(np.std(accs, ddof=1))
        rows.append(SummaryRow(
            strategy=strategy,
            cycle=cycle,
            labeled_count=group[0].labeled_count,
            mean_accuracy=float(accs.mean()),
            std_accuracy=std,
            repeats=accs.size,
            single_repeat=single,
        ))
    return rows
