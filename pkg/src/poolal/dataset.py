"""Example pool, label bookkeeping, the simulated oracle, and file ingestion.

A :class:`Dataset` owns the feature matrix and the ground-truth labels. The
labels drive two distinct access paths: :func:`oracle_label` is the metered
query used by the acquisition loop (every call increments ``oracle_calls``),
while :attr:`Dataset.eval_labels` is the unmetered view for computing test
accuracy and building evaluation fixtures.

:class:`LabelState` tracks which indices are labeled (L) and unlabeled (U)
across acquisition cycles; the two lists always partition ``range(n)``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, EngineError

RAW_MAGIC_LEN = 24  # three little-endian u64: n, d, c


@dataclass
class Dataset:
    features: np.ndarray          # (n, d) float64
    num_classes: int
    _labels: np.ndarray           # (n,) int64, read via oracle_label / eval_labels
    oracle_calls: int = 0

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def eval_labels(self) -> np.ndarray:
        """Ground-truth labels for evaluation; does not touch the oracle meter."""
        return self._labels

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self._labels = np.asarray(self._labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise DataFormatError("features must be a non-empty 2-D matrix")
        if self._labels.shape != (self.features.shape[0],):
            raise DataFormatError("labels must align with feature rows")
        if not np.all(np.isfinite(self.features)):
            raise DataFormatError("features contain non-finite values")
        if self.num_classes < 1 or self._labels.min() < 0 or self._labels.max() >= self.num_classes:
            raise DataFormatError("labels must lie in [0, num_classes)")


@dataclass
class LabelState:
    """Ordered L/U partition of the pool plus the labels issued so far."""

    labeled: list[int]
    unlabeled: list[int]
    labels: dict[int, int]        # defined exactly on `labeled`
    cycle: int = 0

    def labeled_array(self) -> np.ndarray:
        return np.asarray(self.labeled, dtype=np.int64)

    def unlabeled_array(self) -> np.ndarray:
        return np.asarray(self.unlabeled, dtype=np.int64)

    def labels_array(self) -> np.ndarray:
        """Labels aligned with ``labeled`` order."""
        return np.asarray([self.labels[i] for i in self.labeled], dtype=np.int64)


def load_dataset(path: str, format: str = "auto") -> Dataset:
    """Read a dataset file in ``csv`` or ``raw-f32`` format.

    ``auto`` picks by extension: ``.csv`` is CSV, anything else raw-f32.
    """
    if format == "auto":
        format = "csv" if str(path).lower().endswith(".csv") else "raw-f32"
    if format == "csv":
        return _load_csv(path)
    if format == "raw-f32":
        return _load_raw(path)
    raise DataFormatError(f"unknown dataset format {format!r}")


def _load_csv(path: str) -> Dataset:
    """CSV layout: header row, feature columns, final `label` column.

    Class values (numeric or string) are re-indexed densely to 0..c-1 in
    order of first appearance.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if len(header) < 2 or header[-1].strip() != "label":
            raise DataFormatError(f"{path}: header must end with a 'label' column")
        d = len(header) - 1
        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise DataFormatError(f"{path}: line {lineno}: expected {d + 1} fields, got {len(row)}")
            try:
                feats = [float(v) for v in row[:d]]
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
            if not all(np.isfinite(feats)):
                raise DataFormatError(f"{path}: line {lineno}: non-finite feature value")
            rows.append(feats)
            raw_labels.append(row[d].strip())
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    class_ids: dict[str, int] = {}
    labels = np.empty(len(raw_labels), dtype=np.int64)
    for i, lab in enumerate(raw_labels):
        if lab not in class_ids:
            class_ids[lab] = len(class_ids)
        labels[i] = class_ids[lab]
    return Dataset(np.asarray(rows, dtype=np.float64), len(class_ids), labels)


def _load_raw(path: str) -> Dataset:
    """raw-f32 layout: u64 n, u64 d, u64 c (little-endian), then n*d f32
    features row-major, then n u32 labels."""
    with open(path, "rb") as fh:
        head = fh.read(RAW_MAGIC_LEN)
        if len(head) != RAW_MAGIC_LEN:
            raise DataFormatError(f"{path}: truncated header")
        n, d, c = struct.unpack("<QQQ", head)
        if n < 1 or d < 1 or c < 1:
            raise DataFormatError(f"{path}: degenerate header n={n} d={d} c={c}")
        feats = np.fromfile(fh, dtype="<f4", count=n * d)
        if feats.size != n * d:
            raise DataFormatError(f"{path}: truncated feature block")
        labels = np.fromfile(fh, dtype="<u4", count=n)
        if labels.size != n:
            raise DataFormatError(f"{path}: truncated label block")
        if fh.read(1):
            raise DataFormatError(f"{path}: trailing bytes after label block")
    if not np.all(np.isfinite(feats)):
        raise DataFormatError(f"{path}: non-finite feature value")
    labels = labels.astype(np.int64)
    if labels.max(initial=0) >= c:
        raise DataFormatError(f"{path}: label out of range for c={c}")
    return Dataset(feats.astype(np.float64).reshape(n, d), int(c), labels)


def save_dataset(ds: Dataset, path: str, format: str = "auto") -> None:
    """Write a dataset in the same formats :func:`load_dataset` reads."""
    if format == "auto":
        format = "csv" if str(path).lower().endswith(".csv") else "raw-f32"
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"f{j}" for j in range(ds.dim)] + ["label"])
            for row, lab in zip(ds.features, ds._labels):
                writer.writerow([repr(float(v)) for v in row] + [int(lab)])
    elif format == "raw-f32":
        with open(path, "wb") as fh:
            fh.write(struct.pack("<QQQ", ds.n, ds.dim, ds.num_classes))
            ds.features.astype("<f4").tofile(fh)
            ds._labels.astype("<u4").tofile(fh)
    else:
        raise DataFormatError(f"unknown dataset format {format!r}")


def split_holdout(ds: Dataset, frac: float, seed) -> tuple[Dataset, Dataset]:
    """Deterministic stratified split into (pool, heldout-test) datasets.

    Roughly ``frac`` of each class (at least one example, never the whole
    class) goes to the test side. Both halves get fresh oracle counters.
    """
    if not 0.0 < frac < 1.0:
        raise EngineError(f"holdout fraction must lie in (0, 1), got {frac}")
    rng = np.random.default_rng(seed)
    truth = ds.eval_labels
    test_mask = np.zeros(ds.n, dtype=bool)
    for k in range(ds.num_classes):
        members = np.flatnonzero(truth == k)
        if members.size < 2:
            raise EngineError(f"class {k} too small to split")
        take = min(members.size - 1, max(1, int(round(frac * members.size))))
        test_mask[rng.choice(members, size=take, replace=False)] = True
    pool = Dataset(ds.features[~test_mask].copy(), ds.num_classes, truth[~test_mask].copy())
    test = Dataset(ds.features[test_mask].copy(), ds.num_classes, truth[test_mask].copy())
    return pool, test


def init_labels(ds: Dataset, per_class: int, seed, unbalanced: bool = False) -> LabelState:
    """Draw the initial labeled set L0.

    Balanced by default: exactly ``per_class`` examples per class, uniformly
    at random under ``seed``. With ``unbalanced=True`` the same total
    (``per_class * c``) is drawn uniformly from the whole pool instead.
    """
    if per_class < 1:
        raise EngineError("per_class must be positive")
    rng = np.random.default_rng(seed)
    truth = ds.eval_labels
    if unbalanced:
        total = per_class * ds.num_classes
        if total > ds.n:
            raise EngineError(f"cannot draw {total} initial labels from {ds.n} examples")
        chosen = rng.choice(ds.n, size=total, replace=False)
    else:
        parts = []
        for k in range(ds.num_classes):
            members = np.flatnonzero(truth == k)
            if members.size < per_class:
                raise EngineError(
                    f"class {k} has only {members.size} examples, need {per_class}")
            parts.append(rng.choice(members, size=per_class, replace=False))
        chosen = np.concatenate(parts)
    labeled = sorted(int(i) for i in chosen)
    labeled_set = set(labeled)
    unlabeled = [i for i in range(ds.n) if i not in labeled_set]
    labels = {i: int(truth[i]) for i in labeled}
    return LabelState(labeled=labeled, unlabeled=unlabeled, labels=labels, cycle=0)


def oracle_label(ds: Dataset, idx: int) -> int:
    """Answer a label query; every call counts toward the acquisition budget."""
    if not 0 <= idx < ds.n:
        raise EngineError(f"oracle query {idx} out of range [0, {ds.n})")
    ds.oracle_calls += 1
    return int(ds.eval_labels[idx])


def commit_batch(state: LabelState, S: list[int], answers: list[int]) -> LabelState:
    """Move the acquired batch S from U to L and advance the cycle counter.

    S must be a subset of the current unlabeled set; re-acquiring a labeled
    index is a bug in the caller and raises.
    """
    if len(S) != len(answers):
        raise EngineError(f"|S|={len(S)} but {len(answers)} answers")
    unlabeled_set = set(state.unlabeled)
    dupes = [i for i in S if i not in unlabeled_set]
    if dupes:
        raise EngineError(f"double acquisition: indices {dupes} are not unlabeled")
    if len(set(S)) != len(S):
        raise EngineError("acquired batch contains repeated indices")
    s_set = set(S)
    labels = dict(state.labels)
    for i, y in zip(S, answers):
        labels[int(i)] = int(y)
    return LabelState(
        labeled=state.labeled + [int(i) for i in S],
        unlabeled=[i for i in state.unlabeled if i not in s_set],
        labels=labels,
        cycle=state.cycle + 1,
    )
