"""Changeset data model: CSV ingestion, transforms, partitioning.

A changeset row carries the classic commit-level size/diffusion/history
metrics plus a fix flag and a defect label. Datasets are immutable and
timestamp-ordered; transformations return new datasets.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, EmptyDatasetError, InsufficientDataError, SchemaError

# Metric names in table order; collinearity removal keeps the earlier name.
CANONICAL_METRIC_ORDER: tuple[str, ...] = (
    "ns", "nd", "nf", "entropy", "la", "ld", "lt", "churn", "fix",
    "ndev", "age", "nuc", "exp", "rexp", "sexp",
)

# Canonical CSV layout. churn is derived (la + ld) and normally not stored.
CSV_COLUMNS: tuple[str, ...] = (
    "commit_id", "timestamp", "ns", "nd", "nf", "entropy", "la", "ld", "lt",
    "ndev", "age", "nuc", "exp", "rexp", "sexp", "fix", "label",
)

DEFAULT_FEATURES: tuple[str, ...] = tuple(
    name for name in CANONICAL_METRIC_ORDER if name != "churn"
)

_REAL_FIELDS = tuple(n for n in CANONICAL_METRIC_ORDER if n != "fix")

# 90-day window in seconds, the workbench's month-quarter approximation.
WINDOW_90_DAYS = 90 * 24 * 3600


@dataclass(frozen=True)
class ChangeMetrics:
    """Per-changeset metric values. All real fields are finite and >= 0."""

    ns: float
    nd: float
    nf: float
    entropy: float
    la: float
    ld: float
    lt: float
    ndev: float
    age: float
    nuc: float
    exp: float
    rexp: float
    sexp: float
    fix: bool
    churn: float | None = None  # defaults to la + ld

    def __post_init__(self) -> None:
        if self.churn is None:
            object.__setattr__(self, "churn", self.la + self.ld)
        for name in _REAL_FIELDS:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DataError(f"metric {name} is not finite: {value!r}")
            if value < 0:
                raise DataError(f"metric {name} is negative: {value!r}")

    def value(self, name: str) -> float:
        if name == "fix":
            return 1.0 if self.fix else 0.0
        return float(getattr(self, name))


@dataclass(frozen=True)
class Changeset:
    id: str
    timestamp: int  # unix seconds
    metrics: ChangeMetrics
    label: int  # 1 = defect-inducing
    modified_files: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class Dataset:
    """Timestamp-ordered collection of changesets plus active feature names."""

    changesets: tuple[Changeset, ...]
    feature_names: tuple[str, ...] = DEFAULT_FEATURES
    project: str = ""

    def __len__(self) -> int:
        return len(self.changesets)

    def labels(self) -> np.ndarray:
        return np.array([c.label for c in self.changesets], dtype=np.int64)

    def timestamps(self) -> np.ndarray:
        return np.array([c.timestamp for c in self.changesets], dtype=np.int64)

    def features(self, names: tuple[str, ...] | None = None) -> np.ndarray:
        """Feature matrix (n, len(names)) in float64."""
        names = self.feature_names if names is None else names
        out = np.empty((len(self.changesets), len(names)), dtype=np.float64)
        for j, name in enumerate(names):
            out[:, j] = [c.metrics.value(name) for c in self.changesets]
        return out

    def subset(self, indices: "list[int] | np.ndarray") -> "Dataset":
        rows = tuple(self.changesets[int(i)] for i in indices)
        return replace(self, changesets=rows)


@dataclass(frozen=True)
class Segment:
    """Contiguous slice of a dataset, by equal count or by time window."""

    index: int
    changesets: tuple[Changeset, ...]
    kind: str  # "count-equal" | "time-window"
    window_start: int | None = None

    def __len__(self) -> int:
        return len(self.changesets)

    def to_dataset(self, template: Dataset) -> Dataset:
        return replace(template, changesets=self.changesets)


def _ordered(changesets: list[Changeset]) -> tuple[Changeset, ...]:
    # (timestamp, id) is a total order for distinct commits, so the loaded
    # dataset does not depend on input row order.
    return tuple(sorted(changesets, key=lambda c: (c.timestamp, c.id)))


def _parse_real(raw: str, row: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise DataError(f"row {row}: column {column!r} is not numeric: {raw!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}: column {column!r} is not finite: {raw!r}")
    if value < 0:
        raise DataError(f"row {row}: column {column!r} is negative: {raw!r}")
    return value


def _parse_flag(raw: str, row: int, column: str) -> int:
    text = raw.strip().lower()
    if text in ("0", "0.0", "false"):
        return 0
    if text in ("1", "1.0", "true"):
        return 1
    raise DataError(f"row {row}: column {column!r} must be 0/1, got {raw!r}")


def load_csv(
    path: str,
    schema_map: dict[str, str] | None = None,
    project: str = "",
) -> Dataset:
    """Load a changeset CSV into a Dataset.

    `schema_map` maps canonical column names to the file's actual headers.
    The churn and modified_files columns are optional; every other canonical
    column must be present. Rows failing to parse raise DataError with the
    1-based data row index.
    """
    schema_map = schema_map or {}

    def col(name: str) -> str:
        return schema_map.get(name, name)

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path}: file is empty") from None
        index = {name: i for i, name in enumerate(header)}

        required = ["commit_id", "timestamp", "label"] + [
            n for n in CANONICAL_METRIC_ORDER if n != "churn"
        ]
        missing = [n for n in required if col(n) not in index]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        has_churn = col("churn") in index
        has_files = col("modified_files") in index

        changesets: list[Changeset] = []
        for row_num, row in enumerate(reader, start=1):
            if not row:
                continue

            def cell(name: str) -> str:
                return row[index[col(name)]]

            try:
                timestamp = int(float(cell("timestamp")))
            except ValueError:
                raise DataError(
                    f"row {row_num}: column 'timestamp' is not numeric: {cell('timestamp')!r}"
                ) from None
            values = {
                name: _parse_real(cell(name), row_num, name)
                for name in _REAL_FIELDS
                if name != "churn"
            }
            fix = bool(_parse_flag(cell("fix"), row_num, "fix"))
            label = _parse_flag(cell("label"), row_num, "label")

            churn = None
            if has_churn:
                churn = _parse_real(cell("churn"), row_num, "churn")
                derived = values["la"] + values["ld"]
                if not math.isclose(churn, derived, rel_tol=1e-9, abs_tol=1e-9):
                    warnings.warn(
                        f"row {row_num}: churn {churn} != la+ld {derived}; keeping input value",
                        stacklevel=2,
                    )
            files = None
            if has_files:
                raw = cell("modified_files").strip()
                files = frozenset(p for p in raw.split(";") if p) if raw else frozenset()

            metrics = ChangeMetrics(fix=fix, churn=churn, **values)
            changesets.append(
                Changeset(
                    id=cell("commit_id"),
                    timestamp=timestamp,
                    metrics=metrics,
                    label=label,
                    modified_files=files,
                )
            )

    if not changesets:
        raise EmptyDatasetError(f"{path}: no data rows")

    features = tuple(
        n for n in CANONICAL_METRIC_ORDER if n != "churn" or has_churn
    )
    return Dataset(changesets=_ordered(changesets), feature_names=features, project=project)


def save_csv(dataset: Dataset, path: str) -> None:
    """Write a dataset using the canonical layout (plus churn when active)."""
    metric_cols = [n for n in CSV_COLUMNS if n not in ("commit_id", "timestamp", "label")]
    if "churn" in dataset.feature_names:
        metric_cols.insert(metric_cols.index("lt") + 1, "churn")
    has_files = any(c.modified_files is not None for c in dataset.changesets)
    header = ["commit_id", "timestamp", *metric_cols, "label"]
    if has_files:
        header.append("modified_files")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in dataset.changesets:
            row = [c.id, c.timestamp]
            for name in metric_cols:
                if name == "fix":
                    row.append(int(c.metrics.fix))
                else:
                    row.append(repr(c.metrics.value(name)))
            row.append(c.label)
            if has_files:
                row.append(";".join(sorted(c.modified_files or ())))
            writer.writerow(row)


def log_transform(dataset: Dataset) -> Dataset:
    """Apply ln(1 + x) to every real metric; fix and label are untouched."""
    if not dataset.changesets:
        raise EmptyDatasetError("log_transform: dataset is empty")
    transformed = []
    for row_num, c in enumerate(dataset.changesets, start=1):
        values = {}
        for name in _REAL_FIELDS:
            x = c.metrics.value(name)
            if x < 0:
                raise DataError(f"row {row_num}: column {name!r} is negative: {x!r}")
            values[name] = math.log1p(x)
        metrics = ChangeMetrics(fix=c.metrics.fix, **values)
        transformed.append(replace(c, metrics=metrics))
    return replace(dataset, changesets=tuple(transformed))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties averaged."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_matrix(matrix: np.ndarray) -> np.ndarray:
    """Pairwise Spearman rank correlation; constant columns correlate as 0."""
    n, m = matrix.shape
    ranks = np.column_stack([_average_ranks(matrix[:, j]) for j in range(m)])
    stds = ranks.std(axis=0)
    constant = stds == 0
    if constant.any():
        warnings.warn(
            "constant columns in correlation analysis treated as uncorrelated",
            stacklevel=2,
        )
    safe = ranks.copy()
    # give constant columns fake variance, then zero their correlations
    safe[0, constant] += 1.0
    corr = np.corrcoef(safe.T)
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr


def remove_collinear(
    dataset: Dataset, threshold: float = 0.9
) -> tuple[Dataset, list[str]]:
    """Drop metrics whose |Spearman rho| with an earlier kept metric exceeds
    the threshold. Earlier means table order, so the first of a correlated
    pair survives."""
    if len(dataset) < 2:
        raise InsufficientDataError("remove_collinear: need at least 2 rows")
    names = sorted(dataset.feature_names, key=CANONICAL_METRIC_ORDER.index)
    matrix = dataset.features(tuple(names))
    corr = spearman_matrix(matrix)

    kept: list[int] = []
    removed: list[str] = []
    for j in range(len(names)):
        if any(abs(corr[j, k]) > threshold for k in kept):
            removed.append(names[j])
        else:
            kept.append(j)
    retained = tuple(names[j] for j in kept)
    return replace(dataset, feature_names=retained), removed


def partition_equal(dataset: Dataset, n_segments: int) -> list[Segment]:
    """Contiguous segments with sizes differing by at most one; earlier
    segments take the extra rows."""
    n = len(dataset)
    if n_segments < 1:
        raise ValueError(f"n_segments must be >= 1, got {n_segments}")
    if n_segments > n:
        raise InsufficientDataError(
            f"cannot split {n} changesets into {n_segments} segments"
        )
    base, extra = divmod(n, n_segments)
    segments = []
    start = 0
    for i in range(n_segments):
        size = base + (1 if i < extra else 0)
        segments.append(
            Segment(index=i, changesets=dataset.changesets[start : start + size], kind="count-equal")
        )
        start += size
    return segments


def partition_window(dataset: Dataset, window_seconds: int = WINDOW_90_DAYS) -> list[Segment]:
    """Fixed-width time windows anchored at the first timestamp. Windows with
    no changesets are kept so the series stays contiguous in time."""
    if not dataset.changesets:
        raise EmptyDatasetError("partition_window: dataset is empty")
    if window_seconds <= 0:
        raise ValueError(f"window_seconds must be positive, got {window_seconds}")
    t0 = dataset.changesets[0].timestamp
    t_last = dataset.changesets[-1].timestamp
    n_windows = int((t_last - t0) // window_seconds) + 1
    buckets: list[list[Changeset]] = [[] for _ in range(n_windows)]
    for c in dataset.changesets:
        buckets[int((c.timestamp - t0) // window_seconds)].append(c)
    return [
        Segment(
            index=i,
            changesets=tuple(rows),
            kind="time-window",
            window_start=t0 + i * window_seconds,
        )
        for i, rows in enumerate(buckets)
    ]
