"""HTTP facade over the engine.

Requests name input dataset files by path (the service reads them) and all
computed results come back in the response body; clients own output files.
Engine failures map to 400 for bad inputs (unparseable files, invalid
parameters) and 500 for runtime failures such as solver non-convergence.
"""

from __future__ import annotations

import functools
import math

import numpy as np
import scipy.sparse as sp
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from .acquire import AcquisitionContext, Strategy, acquire_batch
from .analysis import compare_strategies, export_rank_scatter, score_vector_for
from .config import AcquireJob, AgreeJob, GenDataJob, PropagateJob, RunJob
from .dataset import Dataset, LabelState, init_labels, load_dataset, split_holdout
from .driver import SUMMARY_HEADER, run, summarize
from .errors import ConfigError, DataFormatError, EngineError
from .graph import build_reciprocal_knn
from .model import load_checkpoint, make_model, predict_all, train_supervised, TrainPlan
from .propagate import pseudo_label_all
from .synth import gen_synthetic

app = FastAPI(title="poolal", version=__version__)


class HealthResponse(BaseModel):
    status: str
    version: str


class RunResponse(BaseModel):
    records: list[dict]
    curves: list[dict]
    propagation_calls: int
    graph_builds: int
    acquisition_seconds_total: float  # reporting only; never serialized to disk


class PropagationRow(BaseModel):
    index: int
    pseudo_label: int
    weight: float


class PropagateResponse(BaseModel):
    rows: list[PropagationRow]
    edges: list[tuple[int, int, float]]


class AcquiredRow(BaseModel):
    order: int
    index: int
    score: float | None


class AcquireResponse(BaseModel):
    rows: list[AcquiredRow]


class AgreeResponse(BaseModel):
    report: dict
    scatter: list[tuple[int, int, int]]


class GenDataResponse(BaseModel):
    features: list[list[float]]
    labels: list[int]
    num_classes: int


def _engine_errors(fn):
    @functools.wraps(fn)  # FastAPI reads the endpoint signature for the request model
    def wrapped(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (FileNotFoundError, ConfigError, DataFormatError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        except EngineError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from None
    return wrapped


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def _load_pair(job: RunJob) -> tuple[Dataset, Dataset]:
    train = load_dataset(job.dataset, job.format)
    if job.test_dataset is not None:
        return train, load_dataset(job.test_dataset, job.format)
    return split_holdout(train, job.holdout_frac, job.seed)


@app.post("/run", response_model=RunResponse)
@_engine_errors
def run_endpoint(job: RunJob) -> RunResponse:
    train, test = _load_pair(job)
    result = run(job.to_run_config(), train, test)
    curves = [dict(zip(SUMMARY_HEADER,
                       [row.strategy, row.cycle, row.labeled_count, row.mean_accuracy,
                        row.std_accuracy, row.repeats, row.single_repeat]))
              for row in summarize(result.records)]
    return RunResponse(
        records=[rec.to_json_dict() for rec in result.records],
        curves=curves,
        propagation_calls=result.stats.propagation_calls,
        graph_builds=result.stats.graph_builds,
        acquisition_seconds_total=sum(r.acquisition_seconds for r in result.records),
    )


def _initial_state(ds: Dataset, labeled: list[int] | None, per_class: int, seed) -> LabelState:
    if labeled is None:
        return init_labels(ds, per_class, seed)
    labeled = sorted(set(int(i) for i in labeled))
    bad = [i for i in labeled if not 0 <= i < ds.n]
    if bad:
        raise ConfigError(f"labeled indices out of range: {bad}")
    unlabeled = [i for i in range(ds.n) if i not in set(labeled)]
    labels = {i: int(ds.eval_labels[i]) for i in labeled}
    return LabelState(labeled=labeled, unlabeled=unlabeled, labels=labels)


@app.post("/propagate", response_model=PropagateResponse)
@_engine_errors
def propagate_endpoint(job: PropagateJob) -> PropagateResponse:
    ds = load_dataset(job.dataset, job.format)
    state = _initial_state(ds, job.labeled, job.per_class, job.seed)
    g = build_reciprocal_knn(ds.features, job.k_graph)
    prop = pseudo_label_all(g, state, ds.num_classes, job.alpha, job.tol, job.max_iter)
    rows = [PropagationRow(index=int(i), pseudo_label=int(y), weight=float(w))
            for i, y, w in zip(prop.unlabeled, prop.pseudo_labels, prop.weights)]
    coo = sp.triu(g.adjacency, 1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    edges = [(int(coo.row[i]), int(coo.col[i]), float(coo.data[i])) for i in order]
    return PropagateResponse(rows=rows, edges=edges)


def _scored_context(ds: Dataset, state: LabelState, job) -> AcquisitionContext:
    """Train (or load) the reference model and assemble an acquisition context."""
    if getattr(job, "checkpoint", None):
        model = load_checkpoint(job.checkpoint)
        if model.input_dim != ds.dim or model.num_classes != ds.num_classes:
            raise ConfigError("checkpoint dimensions do not match the dataset")
    else:
        ss = np.random.SeedSequence(job.seed)
        mseed, tseed = ss.spawn(2)
        init = make_model(job.model, ds.dim, ds.num_classes,
                          np.random.default_rng(mseed), job.embed_dim)
        plan = TrainPlan(epochs=job.epochs)
        model = train_supervised(ds, state, plan, init, np.random.default_rng(tseed))
    needs_graph = job.strategy == "jlp" if hasattr(job, "strategy") else True
    graph = build_reciprocal_knn(model.embed(ds.features), job.k_graph) if needs_graph else None
    return AcquisitionContext(
        probs=predict_all(ds, model),
        embeddings=model.embed(ds.features),
        state=state,
        rng=np.random.default_rng(np.random.SeedSequence(job.seed).spawn(3)[-1]),
        graph=graph,
        tol=job.tol,
        max_iter=job.max_iter,
    )


@app.post("/acquire", response_model=AcquireResponse)
@_engine_errors
def acquire_endpoint(job: AcquireJob) -> AcquireResponse:
    ds = load_dataset(job.dataset, job.format)
    state = _initial_state(ds, job.labeled, job.per_class, job.seed)
    ctx = _scored_context(ds, state, job)
    strat = Strategy(kind=job.strategy, ceal_epsilon=job.ceal_epsilon,
                     jlp_alpha=job.alpha, coreset_metric=job.coreset_metric)
    result = acquire_batch(ctx, strat, job.budget)
    rows = [AcquiredRow(order=o, index=i, score=None if math.isnan(s) else s)
            for o, (i, s) in enumerate(zip(result.selected, result.scores))]
    return AcquireResponse(rows=rows)


@app.post("/agree", response_model=AgreeResponse)
@_engine_errors
def agree_endpoint(job: AgreeJob) -> AgreeResponse:
    ds = load_dataset(job.dataset, job.format)
    state = _initial_state(ds, None, job.per_class, job.seed)
    ctx = _scored_context(ds, state, job)
    strat_a = Strategy(kind=job.strategy_a, ceal_epsilon=job.ceal_epsilon,
                       jlp_alpha=job.alpha, coreset_metric=job.coreset_metric)
    strat_b = Strategy(kind=job.strategy_b, ceal_epsilon=job.ceal_epsilon,
                       jlp_alpha=job.alpha, coreset_metric=job.coreset_metric)
    report = compare_strategies(ds, ctx, strat_a, strat_b, job.budget, job.alpha,
                                job.tol, job.max_iter)
    scores_a = score_vector_for(ctx, strat_a)
    scores_b = score_vector_for(ctx, strat_b)
    scatter = export_rank_scatter(scores_a, scores_b, job.sample_frac, seed=job.seed)
    return AgreeResponse(report=report.to_json_dict(), scatter=scatter)


@app.post("/gen-data", response_model=GenDataResponse)
@_engine_errors
def gen_data_endpoint(job: GenDataJob) -> GenDataResponse:
    ds = gen_synthetic(job.shape, n=job.n, noise=job.noise, c=job.c, seed=job.seed,
                       feature_dim=job.feature_dim, bandwidth=job.bandwidth, dim=job.dim)
    return GenDataResponse(
        features=[[float(v) for v in row] for row in ds.features],
        labels=[int(v) for v in ds.eval_labels],
        num_classes=ds.num_classes,
    )
