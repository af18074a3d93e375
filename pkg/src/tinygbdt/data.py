"""Dataset ingestion, train/test splitting, and split-candidate generation."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised when a dataset cannot be loaded or fails validation."""


@dataclass(frozen=True)
class TaskKind:
    """Learning task: regression, binary, or multiclass classification.

    ``classes`` is the number of label classes (0 for regression, 2 for
    binary, >= 3 for multiclass).
    """

    kind: str
    classes: int = 0

    def __post_init__(self):
        if self.kind not in ("regression", "binary", "multiclass"):
            raise ValueError(f"unknown task kind: {self.kind!r}")
        # classes == 0 on a multiclass task means "infer from the labels at
        # load time"; a resolved Dataset always carries classes >= 3.
        if self.kind == "multiclass" and self.classes != 0 and self.classes < 3:
            raise ValueError("multiclass requires at least 3 classes")
        if self.kind == "binary" and self.classes != 2:
            raise ValueError("binary task has exactly 2 classes")
        if self.kind == "regression" and self.classes != 0:
            raise ValueError("regression task has no classes")

    @property
    def is_classification(self) -> bool:
        return self.kind != "regression"

    @property
    def score_width(self) -> int:
        """Number of raw-score channels an ensemble carries for this task."""
        return self.classes if self.kind == "multiclass" else 1


REGRESSION = TaskKind("regression")
BINARY = TaskKind("binary", 2)


def multiclass(classes: int) -> TaskKind:
    return TaskKind("multiclass", classes)


@dataclass(frozen=True)
class Dataset:
    """Numeric feature matrix plus labels for one task.

    ``features`` is an (n, d) float64 matrix, ``labels`` a length-n vector
    (float64 for regression, int64 class indices otherwise). Missing values
    are rejected at load time, never imputed.
    """

    features: np.ndarray
    labels: np.ndarray
    task: TaskKind
    feature_names: tuple[str, ...] = ()
    label_name: str = "label"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", X)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DatasetError("features must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features contain non-finite values")
        if self.task.kind == "multiclass" and self.task.classes < 3:
            raise DatasetError("multiclass Dataset needs a resolved class count")
        if self.task.kind == "regression":
            y = np.asarray(self.labels, dtype=np.float64)
            if not np.all(np.isfinite(y)):
                raise DatasetError("regression labels contain non-finite values")
        else:
            y = np.asarray(self.labels)
            if y.dtype.kind == "f" and not np.all(y == np.floor(y)):
                raise DatasetError("classification labels must be integers")
            y = y.astype(np.int64)
            if y.size and (y.min() < 0 or y.max() >= self.task.classes):
                raise DatasetError(
                    f"labels must lie in [0, {self.task.classes}), "
                    f"found range [{y.min()}, {y.max()}]"
                )
        object.__setattr__(self, "labels", y)
        if len(y) != X.shape[0]:
            raise DatasetError("labels and features disagree on row count")
        if not self.feature_names:
            names = tuple(f"x{j}" for j in range(X.shape[1]))
            object.__setattr__(self, "feature_names", names)
        elif len(self.feature_names) != X.shape[1]:
            raise DatasetError("feature_names and features disagree on column count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Dataset restricted to the given row indices (order preserved)."""
        return Dataset(
            self.features[rows],
            self.labels[rows],
            self.task,
            self.feature_names,
            self.label_name,
        )


@dataclass(frozen=True)
class CandidateSet:
    """Per-feature sorted candidate split thresholds.

    ``thresholds[j]`` is a strictly increasing float64 array; every value
    strictly separates at least two distinct training values of feature j.
    Constant features get an empty array.
    """

    thresholds: tuple[np.ndarray, ...]
    is_integer_valued: tuple[bool, ...]

    @property
    def feature_count(self) -> int:
        return len(self.thresholds)


def _parse_cell(text: str, line: int, column: str) -> float:
    if text.strip() == "":
        raise DatasetError(f"missing value at line {line}, column {column!r}")
    try:
        return float(text)
    except ValueError:
        raise DatasetError(
            f"cannot parse {text!r} as a number at line {line}, column {column!r}"
        ) from None


def load_csv(path: str | Path, label_column: str | int, task: TaskKind) -> Dataset:
    """Load a comma-separated file into a Dataset.

    The first row may be a header; it is treated as one when any of its
    cells does not parse as a number. ``label_column`` selects the label by
    header name or zero-based column index.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise DatasetError(f"empty file: {path}")

    width = len(rows[0])
    if width < 2:
        raise DatasetError("need at least one feature column and one label column")
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DatasetError(f"line {i} has {len(row)} cells, expected {width}")

    def _is_number(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    has_header = not all(_is_number(c) for c in rows[0])
    header = [c.strip() for c in rows[0]] if has_header else [f"c{j}" for j in range(width)]
    data_rows = rows[1:] if has_header else rows
    first_line = 2 if has_header else 1
    if not data_rows:
        raise DatasetError(f"no data rows in {path}")

    if isinstance(label_column, int):
        label_idx = label_column
        if not 0 <= label_idx < width:
            raise DatasetError(f"label column index {label_idx} out of range [0, {width})")
    else:
        if not has_header:
            raise DatasetError(
                f"label column {label_column!r} given by name but the file has no header"
            )
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise DatasetError(
                f"label column {label_column!r} not found in header {header}"
            ) from None

    feature_cols = [j for j in range(width) if j != label_idx]
    X = np.empty((len(data_rows), len(feature_cols)), dtype=np.float64)
    raw_labels = np.empty(len(data_rows), dtype=np.float64)
    for i, row in enumerate(data_rows):
        line = first_line + i
        for k, j in enumerate(feature_cols):
            X[i, k] = _parse_cell(row[j], line, header[j])
        raw_labels[i] = _parse_cell(row[label_idx], line, header[label_idx])

    if task.kind != "regression":
        if not np.all(raw_labels == np.floor(raw_labels)):
            bad = int(np.argmax(raw_labels != np.floor(raw_labels)))
            raise DatasetError(
                f"label at line {first_line + bad} is not an integer class index"
            )
        if task.kind == "multiclass" and task.classes == 0:
            task = multiclass(int(raw_labels.max()) + 1)
        labels: np.ndarray = raw_labels.astype(np.int64)
    else:
        labels = raw_labels

    names = tuple(header[j] for j in feature_cols)
    return Dataset(X, labels, task, names, header[label_idx])


def load_matrix(path: str | Path, drop_column: str | int | None = None) -> np.ndarray:
    """Load every numeric column of a CSV as a float64 matrix.

    ``drop_column`` removes a label column (by header name or index) when the
    file carries one.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise DatasetError(f"empty file: {path}")
    width = len(rows[0])

    def _is_number(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    has_header = not all(_is_number(c) for c in rows[0])
    header = [c.strip() for c in rows[0]] if has_header else [f"c{j}" for j in range(width)]
    data_rows = rows[1:] if has_header else rows
    first_line = 2 if has_header else 1

    keep = list(range(width))
    if drop_column is not None:
        if isinstance(drop_column, int):
            drop_idx = drop_column
        else:
            if not has_header or drop_column not in header:
                raise DatasetError(f"column {drop_column!r} not found")
            drop_idx = header.index(drop_column)
        if not 0 <= drop_idx < width:
            raise DatasetError(f"column index {drop_idx} out of range [0, {width})")
        keep.remove(drop_idx)

    X = np.empty((len(data_rows), len(keep)), dtype=np.float64)
    for i, row in enumerate(data_rows):
        if len(row) != width:
            raise DatasetError(
                f"line {first_line + i} has {len(row)} cells, expected {width}"
            )
        for k, j in enumerate(keep):
            X[i, k] = _parse_cell(row[j], first_line + i, header[j])
    return X


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write a Dataset back to CSV with round-trip-exact float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [ds.label_name])
        is_reg = ds.task.kind == "regression"
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            row.append(repr(float(ds.labels[i])) if is_reg else str(int(ds.labels[i])))
            writer.writerow(row)


def split_train_test(
    ds: Dataset, test_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Split into (train, test) by a seeded pseudo-random permutation."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(np.floor(ds.n * test_fraction))
    n_train = ds.n - n_test
    if n_test < 1 or n_train < 1:
        raise ValueError(
            f"dataset of {ds.n} rows cannot be split at fraction {test_fraction}"
        )
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.subset(perm[n_test:]), ds.subset(perm[:n_test])


def candidate_thresholds(ds: Dataset, max_bins: int = 255) -> CandidateSet:
    """Generate per-feature candidate thresholds.

    Candidates are midpoints between adjacent distinct sorted values. When a
    feature has more than ``max_bins`` midpoints, the kept ones are the
    midpoints at evenly spaced quantile ranks of the observed rows, so dense
    regions of the distribution retain more candidates.
    """
    if max_bins < 1:
        raise ValueError("max_bins must be >= 1")
    per_feature: list[np.ndarray] = []
    integer_flags: list[bool] = []
    for j in range(ds.d):
        col = ds.features[:, j]
        integer_flags.append(bool(np.all(col == np.floor(col))))
        u = np.unique(col)
        if len(u) < 2:
            per_feature.append(np.empty(0, dtype=np.float64))
            continue
        mids = (u[:-1] + u[1:]) / 2.0
        # Guard against the midpoint rounding up onto the larger neighbor,
        # which would stop it from separating the pair.
        mids = np.where(mids < u[1:], mids, u[:-1])
        if len(mids) > max_bins:
            sorted_col = np.sort(col)
            ranks = np.arange(1, max_bins + 1) / (max_bins + 1)
            picks = sorted_col[np.round(ranks * (ds.n - 1)).astype(np.int64)]
            gap = np.searchsorted(u, picks)
            gap = np.minimum(gap, len(mids) - 1)
            mids = np.unique(mids[gap])
        per_feature.append(np.ascontiguousarray(mids, dtype=np.float64))
    return CandidateSet(tuple(per_feature), tuple(integer_flags))
