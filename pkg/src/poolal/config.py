"""Typed job descriptions shared by the HTTP service and the CLI.

Every tunable has one definition here; the CLI builds these models from
``flags > config file > defaults`` and the service accepts them as request
bodies, so both entry points validate identically (unknown keys are
rejected by the models themselves).
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from .acquire import DEFAULT_CEAL_EPSILON, STRATEGY_KINDS
from .driver import RunConfig
from .errors import ConfigError
from .model import TrainPlan

FAST_EPOCH_CAP = 20  # --fast CI profile; deliberately smaller than any tuned default

_FORMATS = ("auto", "csv", "raw-f32")
_MODELS = ("linear", "linear-embedding")
_METRICS = ("euclidean", "cosine")
_SHAPES = ("two-moons", "blobs", "chain")


def _choice(value: str, allowed: tuple[str, ...], label: str) -> str:
    if value not in allowed:
        raise ValueError(f"{label} must be one of: {', '.join(allowed)}")
    return value


class _JobBase(BaseModel):
    """Shared validation: unknown keys rejected, enums checked eagerly."""

    model_config = ConfigDict(extra="forbid")

    @field_validator("format", check_fields=False)
    @classmethod
    def _check_format(cls, v: str) -> str:
        return _choice(v, _FORMATS, "format")

    @field_validator("strategy", "strategy_a", "strategy_b", check_fields=False)
    @classmethod
    def _check_strategy(cls, v: str) -> str:
        return _choice(v, tuple(STRATEGY_KINDS), "strategy")

    @field_validator("model", check_fields=False)
    @classmethod
    def _check_model(cls, v: str) -> str:
        return _choice(v, _MODELS, "model")

    @field_validator("coreset_metric", check_fields=False)
    @classmethod
    def _check_metric(cls, v: str) -> str:
        return _choice(v, _METRICS, "coreset_metric")

    @field_validator("shape", check_fields=False)
    @classmethod
    def _check_shape(cls, v: str) -> str:
        return _choice(v, _SHAPES, "shape")

    @field_validator("alpha", check_fields=False)
    @classmethod
    def _check_alpha(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError("alpha must be in [0, 1)")
        return v


class RunJob(_JobBase):
    """One full acquisition simulation."""

    dataset: str
    test_dataset: str | None = None
    holdout_frac: float = 0.25       # used only when test_dataset is absent
    format: str = "auto"
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
    k_pretrain: int | None = None
    pretrain_rounds: int = 3
    ceal_epsilon: float = DEFAULT_CEAL_EPSILON
    coreset_metric: str = "euclidean"
    tol: float = 1e-8
    max_iter: int | None = None
    force_rebuild: bool = False
    epochs: int = 200
    lr0: float = 0.2
    anneal_horizon: int = 210
    batch_supervised: int = 32
    batch_labeled: int = 50
    batch_total: int = 128
    momentum: float = 0.9
    warmup_epochs: int = 10
    loss_weighting: bool = False
    fast: bool = False               # cap epochs at FAST_EPOCH_CAP for quick checks

    def to_run_config(self) -> RunConfig:
        epochs = min(self.epochs, FAST_EPOCH_CAP) if self.fast else self.epochs
        plan = TrainPlan(
            epochs=epochs,
            lr0=self.lr0,
            anneal_horizon=self.anneal_horizon,
            batch_supervised=self.batch_supervised,
            batch_labeled=self.batch_labeled,
            batch_total=self.batch_total,
            momentum=self.momentum,
            warmup_epochs=self.warmup_epochs,
            loss_weighting=self.loss_weighting,
        )
        return RunConfig(
            strategy=self.strategy,
            budget=self.budget,
            cycles=self.cycles,
            repeats=self.repeats,
            seed=self.seed,
            pre=self.pre,
            semi=self.semi,
            per_class=self.per_class,
            unbalanced=self.unbalanced,
            model=self.model,
            embed_dim=self.embed_dim,
            k_graph=self.k_graph,
            alpha=self.alpha,
            k_pretrain=self.k_pretrain,
            pretrain_rounds=self.pretrain_rounds,
            ceal_epsilon=self.ceal_epsilon,
            coreset_metric=self.coreset_metric,
            tol=self.tol,
            max_iter=self.max_iter,
            force_rebuild=self.force_rebuild,
            plan=plan,
        )


class PropagateJob(_JobBase):
    """Label propagation over one dataset, serialized per unlabeled index."""

    dataset: str
    format: str = "auto"
    k_graph: int = 50
    alpha: float = 0.99
    labeled: list[int] | None = None   # explicit indices; labels come from the pool
    per_class: int = 1                 # used when `labeled` is absent
    seed: int = 0
    tol: float = 1e-8
    max_iter: int | None = None


class AcquireJob(_JobBase):
    """Score and select one acquisition batch."""

    dataset: str
    format: str = "auto"
    strategy: str = "uncertainty"
    budget: int = 10
    labeled: list[int] | None = None
    per_class: int = 1
    seed: int = 0
    checkpoint: str | None = None      # model file; otherwise train briefly on L
    model: str = "linear"
    embed_dim: int | None = None
    epochs: int = 200
    k_graph: int = 50
    alpha: float = 0.99
    ceal_epsilon: float = DEFAULT_CEAL_EPSILON
    coreset_metric: str = "euclidean"
    tol: float = 1e-8
    max_iter: int | None = None


class AgreeJob(_JobBase):
    """Agreement study between two strategies from a shared trained state."""

    dataset: str
    format: str = "auto"
    strategy_a: str = "uncertainty"
    strategy_b: str = "jlp"
    budget: int = 10
    per_class: int = 1
    seed: int = 0
    model: str = "linear"
    embed_dim: int | None = None
    epochs: int = 200
    k_graph: int = 50
    alpha: float = 0.99
    ceal_epsilon: float = DEFAULT_CEAL_EPSILON
    coreset_metric: str = "euclidean"
    sample_frac: float = 0.05
    tol: float = 1e-8
    max_iter: int | None = None


class GenDataJob(_JobBase):
    """Synthesize a dataset."""

    shape: str = "two-moons"
    n: int = 500
    noise: float | None = None
    c: int = 10
    seed: int = 0
    feature_dim: int | None = None
    bandwidth: float | None = None
    dim: int | None = None


def parse_config_file(path: str) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment; blank lines ignored."""
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{path}: line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"{path}: line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def build_job(model_cls: type[BaseModel], file_values: dict[str, str],
              flag_values: dict) -> BaseModel:
    """Merge config-file values and CLI flag overrides into a validated job.

    Flags beat the file, the file beats defaults. A 'none' string in the file
    clears optional fields. Unknown keys fail validation.
    """
    merged: dict = {}
    for key, value in file_values.items():
        if value.lower() in ("none", "null"):
            merged[key] = None
        elif key == "labeled":  # the one list-valued key: comma-separated ints
            merged[key] = [v.strip() for v in value.split(",") if v.strip()]
        else:
            merged[key] = value
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    try:
        return model_cls(**merged)
    except ValidationError as exc:
        issues = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors())
        raise ConfigError(f"invalid configuration: {issues}") from None


def validate_strategy(name: str) -> str:
    if name not in STRATEGY_KINDS:
        raise ConfigError(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGY_KINDS)}")
    return name
