"""Pluggable classifier with SGD training, weighted semi-supervised batches,
and the clustering pre-training alternation.

Two reference models implement the capability interface (probabilities,
embedding, gradient step): a plain linear softmax whose embedding is the
input features themselves, and a variant with one learned linear embedding
layer before the softmax head. Both are trained by mini-batch SGD with
momentum under a cosine-annealed learning rate.

Semi-supervised training draws each mini-batch partly uniformly from the
labeled set and partly from the unlabeled set under the certainty-weight
distribution, so confident pseudo-labels are seen more often; an epoch ends
once a target number of pseudo-label draws (default half the unlabeled pool)
has been consumed.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cluster import cluster_pseudo_labels, kmeans
from .dataset import Dataset, LabelState
from .errors import DataFormatError, EngineError
from .propagate import Propagation

PROB_FLOOR = 1e-12

CHECKPOINT_MAGIC = b"PALC"
CHECKPOINT_VERSION = 1
_MODEL_KIND_CODES = {"linear": 0, "linear-embedding": 1}


def cross_entropy(p: np.ndarray, y: int) -> float:
    """-ln p_y, with the probability floored at 1e-12 so the loss stays finite."""
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= y < p.size:
        raise EngineError(f"class {y} outside probability vector of length {p.size}")
    return float(-np.log(max(float(p[y]), PROB_FLOOR)))


def cosine_lr(t: float, lr0: float, horizon: int) -> float:
    """Cosine annealing from lr0 at t=0 to exactly 0 at t=horizon (clamped after)."""
    if horizon <= 0:
        raise EngineError("anneal horizon must be positive")
    t = min(float(t), float(horizon))
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / horizon))


@dataclass
class TrainPlan:
    """Hyperparameters of one training run."""

    epochs: int = 200
    lr0: float = 0.2
    anneal_horizon: int = 210
    batch_supervised: int = 32
    batch_labeled: int = 50
    batch_total: int = 128
    momentum: float = 0.9
    warmup_epochs: int = 10           # supervised epochs before the semi loop
    loss_weighting: bool = False      # additionally scale pseudo losses by weight
    epoch_draws: Callable[[int], int] | None = None  # default: ceil(|U| / 2)

    def __post_init__(self):
        if self.batch_labeled > self.batch_total:
            raise EngineError("batch_labeled cannot exceed batch_total")

    def draws_per_epoch(self, n_unlabeled: int) -> int:
        if self.epoch_draws is not None:
            return int(self.epoch_draws(n_unlabeled))
        return math.ceil(n_unlabeled / 2)


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Classifier:
    """Capability interface: class probabilities, embedding, gradient step.

    Parameters are exposed as a list of arrays (`params`), with momentum
    buffers aligned to it; `step` performs one SGD-with-momentum update on a
    mini-batch. Subclasses define the forward pass and analytic gradients.
    """

    kind: str
    num_classes: int
    input_dim: int
    embedding_is_static: bool  # True when embed(X) is X itself, unaffected by training

    def params(self) -> list[np.ndarray]:
        raise NotImplementedError

    def velocities(self) -> list[np.ndarray]:
        raise NotImplementedError

    def embed(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, X, y, sample_weights=None) -> list[np.ndarray]:
        raise NotImplementedError

    def clone(self) -> "Classifier":
        raise NotImplementedError

    def with_new_head(self, num_classes: int, seed) -> "Classifier":
        """Same embedding parameters, freshly initialized output head."""
        raise NotImplementedError

    def logits(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(np.asarray(X, dtype=np.float64)))

    def mean_loss(self, X, y, sample_weights=None) -> float:
        P = self.probabilities(X)
        y = np.asarray(y, dtype=np.int64)
        py = np.maximum(P[np.arange(len(y)), y], PROB_FLOOR)
        losses = -np.log(py)
        if sample_weights is not None:
            losses = losses * np.asarray(sample_weights, dtype=np.float64)
        return float(losses.mean())

    def step(self, X, y, lr: float, mom: float = 0.9, sample_weights=None) -> None:
        grads = self.gradients(X, y, sample_weights)
        for p, v, g in zip(self.params(), self.velocities(), grads):
            v *= mom
            v += g
            p -= lr * v

    def _logit_gradient(self, X, y, sample_weights) -> np.ndarray:
        """d(mean weighted cross-entropy)/d(logits), shape (m, c)."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        m = X.shape[0]
        G = _softmax(self.logits(X))
        G[np.arange(m), y] -= 1.0
        if sample_weights is not None:
            G *= np.asarray(sample_weights, dtype=np.float64)[:, None]
        G /= m
        return G


class LinearSoftmax(Classifier):
    """Softmax regression on the input features; embedding is the identity."""

    kind = "linear"
    embedding_is_static = True

    def __init__(self, input_dim: int, num_classes: int, seed):
        rng = _as_generator(seed)
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.W = rng.normal(0.0, 0.01, (num_classes, input_dim))
        self.b = np.zeros(num_classes)
        self.vW = np.zeros_like(self.W)
        self.vb = np.zeros_like(self.b)

    @property
    def embed_dim(self) -> int:
        return self.input_dim

    def params(self):
        return [self.W, self.b]

    def velocities(self):
        return [self.vW, self.vb]

    def embed(self, X):
        return np.asarray(X, dtype=np.float64)

    def logits(self, X):
        return X @ self.W.T + self.b

    def gradients(self, X, y, sample_weights=None):
        X = np.asarray(X, dtype=np.float64)
        G = self._logit_gradient(X, y, sample_weights)
        return [G.T @ X, G.sum(axis=0)]

    def clone(self):
        out = LinearSoftmax.__new__(LinearSoftmax)
        out.input_dim = self.input_dim
        out.num_classes = self.num_classes
        out.W = self.W.copy()
        out.b = self.b.copy()
        out.vW = self.vW.copy()
        out.vb = self.vb.copy()
        return out

    def with_new_head(self, num_classes: int, seed):
        # no learned embedding to carry over
        return LinearSoftmax(self.input_dim, num_classes, seed)


class LinearEmbedding(Classifier):
    """One learned linear embedding layer followed by a softmax head.

    When embed_dim equals the input dimension the embedding starts at the
    identity, so the untrained model sees the raw feature geometry.
    """

    kind = "linear-embedding"
    embedding_is_static = False

    def __init__(self, input_dim: int, num_classes: int, embed_dim: int | None, seed):
        rng = _as_generator(seed)
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.embed_dim = embed_dim if embed_dim is not None else input_dim
        if self.embed_dim == input_dim:
            self.A = np.eye(input_dim)
        else:
            self.A = rng.normal(0.0, 1.0 / math.sqrt(input_dim), (self.embed_dim, input_dim))
        self.a = np.zeros(self.embed_dim)
        self.W = rng.normal(0.0, 0.01, (num_classes, self.embed_dim))
        self.b = np.zeros(num_classes)
        self.vA = np.zeros_like(self.A)
        self.va = np.zeros_like(self.a)
        self.vW = np.zeros_like(self.W)
        self.vb = np.zeros_like(self.b)

    def params(self):
        return [self.A, self.a, self.W, self.b]

    def velocities(self):
        return [self.vA, self.va, self.vW, self.vb]

    def embed(self, X):
        return np.asarray(X, dtype=np.float64) @ self.A.T + self.a

    def logits(self, X):
        return self.embed(X) @ self.W.T + self.b

    def gradients(self, X, y, sample_weights=None):
        X = np.asarray(X, dtype=np.float64)
        E = self.embed(X)
        G = self._logit_gradient(X, y, sample_weights)
        GE = G @ self.W
        return [GE.T @ X, GE.sum(axis=0), G.T @ E, G.sum(axis=0)]

    def clone(self):
        out = LinearEmbedding.__new__(LinearEmbedding)
        out.input_dim = self.input_dim
        out.num_classes = self.num_classes
        out.embed_dim = self.embed_dim
        for name in ("A", "a", "W", "b", "vA", "va", "vW", "vb"):
            setattr(out, name, getattr(self, name).copy())
        return out

    def with_new_head(self, num_classes: int, seed):
        rng = _as_generator(seed)
        out = self.clone()
        out.num_classes = num_classes
        out.W = rng.normal(0.0, 0.01, (num_classes, self.embed_dim))
        out.b = np.zeros(num_classes)
        out.vW = np.zeros_like(out.W)
        out.vb = np.zeros_like(out.b)
        # embedding momentum restarts with the new objective
        out.vA = np.zeros_like(out.vA)
        out.va = np.zeros_like(out.va)
        return out


def make_model(kind: str, input_dim: int, num_classes: int, seed,
               embed_dim: int | None = None) -> Classifier:
    if kind == "linear":
        return LinearSoftmax(input_dim, num_classes, seed)
    if kind == "linear-embedding":
        return LinearEmbedding(input_dim, num_classes, embed_dim, seed)
    raise EngineError(f"unknown model kind {kind!r}")


def predict_all(ds: Dataset, state: Classifier) -> np.ndarray:
    """Class probabilities for every pool example."""
    if state.input_dim != ds.dim:
        raise EngineError(f"model expects dim {state.input_dim}, dataset has {ds.dim}")
    if state.num_classes != ds.num_classes:
        raise EngineError(
            f"model has {state.num_classes} classes, dataset has {ds.num_classes}")
    return state.probabilities(ds.features)


def _check_finite(model: Classifier) -> None:
    for p in model.params():
        if not np.all(np.isfinite(p)):
            raise EngineError("training diverged: non-finite parameters")


def _sgd_epochs(model: Classifier, X: np.ndarray, indices: np.ndarray,
                targets: np.ndarray, plan: TrainPlan, rng: np.random.Generator,
                epochs: int, lr_t0: float) -> None:
    """In-place supervised epochs over a fixed index/target set."""
    m = indices.size
    if m == 0:
        raise EngineError("cannot train on an empty index set")
    bs = plan.batch_supervised
    for e in range(epochs):
        lr = cosine_lr(lr_t0 + e, plan.lr0, plan.anneal_horizon)
        perm = rng.permutation(m)
        for s in range(0, m, bs):
            sel = perm[s:s + bs]
            model.step(X[indices[sel]], targets[sel], lr, plan.momentum)
    _check_finite(model)


def train_supervised(ds: Dataset, state: LabelState, plan: TrainPlan,
                     init: Classifier, seed, *, epochs: int | None = None,
                     lr_t0: float = 0.0,
                     extra: tuple[np.ndarray, np.ndarray] | None = None) -> Classifier:
    """Train a copy of ``init`` on the labeled set by mini-batch SGD.

    ``extra`` optionally appends additional (index, target) pairs to the
    supervised pool, used for externally pseudo-labeled examples whose
    targets did not come from the oracle.
    """
    if not state.labeled:
        raise EngineError("supervised training needs at least one label")
    rng = _as_generator(seed)
    indices = state.labeled_array()
    targets = state.labels_array()
    if extra is not None and len(extra[0]):
        indices = np.concatenate([indices, np.asarray(extra[0], dtype=np.int64)])
        targets = np.concatenate([targets, np.asarray(extra[1], dtype=np.int64)])
    model = init.clone()
    n_epochs = plan.epochs if epochs is None else epochs
    if n_epochs > 0:
        _sgd_epochs(model, ds.features, indices, targets, plan, rng, n_epochs, lr_t0)
    return model


def sample_pseudo_indices(weights: np.ndarray, n_draws: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Draw positions 0..len(weights)-1 with replacement, proportional to weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size and weights.min() < 0:
        raise EngineError("sampling weights must be nonnegative")
    total = weights.sum()
    if total <= 0:
        raise EngineError("all sampling weights are zero")
    return rng.choice(weights.size, size=n_draws, replace=True, p=weights / total)


def train_semi(ds: Dataset, state: LabelState, prop: Propagation, plan: TrainPlan,
               init: Classifier, rng, lr_t: float = 0.0) -> Classifier:
    """One epoch of mixed labeled/pseudo-labeled training on a copy of ``init``.

    Each mini-batch holds ``batch_labeled`` uniform draws from L (without
    replacement when L is large enough) and ``batch_total - batch_labeled``
    certainty-weighted draws from U. The epoch ends once the pseudo-label
    draw budget for the epoch is spent.
    """
    rng = _as_generator(rng)
    if not state.labeled:
        raise EngineError("semi-supervised training needs at least one label")
    if plan.batch_total <= plan.batch_labeled:
        raise EngineError("semi-supervised batches need batch_total > batch_labeled")
    if prop.weights.sum() <= 0:
        raise EngineError("all propagation weights are zero; fall back to supervised")
    L = state.labeled_array()
    yL = state.labels_array()
    U = prop.unlabeled
    p = prop.weights / prop.weights.sum()
    lr = cosine_lr(lr_t, plan.lr0, plan.anneal_horizon)
    n_pseudo = plan.batch_total - plan.batch_labeled
    target = plan.draws_per_epoch(U.size)
    model = init.clone()
    drawn = 0
    while drawn < target:
        li = rng.choice(L.size, size=plan.batch_labeled, replace=L.size < plan.batch_labeled)
        ui = rng.choice(U.size, size=n_pseudo, replace=True, p=p)
        xb = np.concatenate([ds.features[L[li]], ds.features[U[ui]]])
        yb = np.concatenate([yL[li], prop.pseudo_labels[ui]])
        sw = None
        if plan.loss_weighting:
            sw = np.concatenate([np.ones(li.size), prop.weights[ui]])
        model.step(xb, yb, lr, plan.momentum, sample_weights=sw)
        drawn += n_pseudo
    _check_finite(model)
    return model


def pretrain_unsupervised(ds: Dataset, k: int, rounds: int, plan: TrainPlan, seed,
                          model_kind: str = "linear",
                          embed_dim: int | None = None) -> Classifier:
    """Alternate k-means pseudo-labeling and training to warm up the embedding.

    Each round clusters the current embedding, then trains the full model
    with a fresh k-way output head on the cluster assignments. The returned
    state carries the learned embedding and a fresh head sized for the
    dataset's real classes. For models with a static embedding this is a
    documented no-op pathway: only heads are trained and discarded.
    """
    if k > ds.n:
        raise EngineError(f"pre-training k={k} exceeds pool size {ds.n}")
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    init_seed, *round_seeds = ss.spawn(3 * rounds + 2)
    model = make_model(model_kind, ds.dim, ds.num_classes, np.random.default_rng(init_seed),
                       embed_dim=embed_dim)
    if rounds == 0:
        return model
    all_idx = np.arange(ds.n)
    for r in range(rounds):
        kseed, hseed, bseed = round_seeds[3 * r:3 * r + 3]
        cl = kmeans(model.embed(ds.features), k, kseed)
        labels, kc = cluster_pseudo_labels(cl)
        work = model.with_new_head(kc, np.random.default_rng(hseed))
        _sgd_epochs(work, ds.features, all_idx, labels, plan,
                    np.random.default_rng(bseed), plan.epochs, 0.0)
        model = work
    return model.with_new_head(ds.num_classes, np.random.default_rng(round_seeds[-1]))


def save_checkpoint(model: Classifier, path: str) -> None:
    """Versioned header plus the parameters as a single f32 blob."""
    code = _MODEL_KIND_CODES.get(model.kind)
    if code is None:
        raise EngineError(f"cannot checkpoint model kind {model.kind!r}")
    embed_dim = model.embed_dim if model.kind == "linear-embedding" else model.input_dim
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<IBQQQ", CHECKPOINT_VERSION, code,
                          model.input_dim, model.num_classes, embed_dim))
    for p in model.params():
        buf.write(p.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str) -> Classifier:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataFormatError(f"{path}: not a model checkpoint")
        version, code, d, c, de = struct.unpack("<IBQQQ", fh.read(29))
        if version != CHECKPOINT_VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
        kinds = {v: k for k, v in _MODEL_KIND_CODES.items()}
        if code not in kinds:
            raise DataFormatError(f"{path}: unknown model kind code {code}")
        model = make_model(kinds[code], int(d), int(c), 0, embed_dim=int(de))
        for p in model.params():
            raw = np.fromfile(fh, dtype="<f4", count=p.size)
            if raw.size != p.size:
                raise DataFormatError(f"{path}: truncated parameter blob")
            p[...] = raw.reshape(p.shape).astype(np.float64)
        if fh.read(1):
            raise DataFormatError(f"{path}: trailing bytes in checkpoint")
    return model
