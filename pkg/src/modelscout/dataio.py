"""Datasets, CSV ingestion and histogram distributions over a shared binning."""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

DEGENERATE_EPS = 1e-6


class DataError(ValueError):
    """Raised for malformed input data."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    id: str
    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise DataError(f"dataset {self.id!r}: need a non-empty 2-d feature matrix, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise DataError(f"dataset {self.id!r}: features must be finite")
        object.__setattr__(self, "features", _frozen(feats))
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != feats.shape[0]:
                raise DataError(
                    f"dataset {self.id!r}: {labels.shape[0]} labels for {feats.shape[0]} rows"
                )
            object.__setattr__(self, "labels", _frozen(labels))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_dims(self) -> int:
        return self.features.shape[1]

    def subset(self, rows, id: Optional[str] = None) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        labels = None if self.labels is None else self.labels[rows]
        return Dataset(id or self.id, self.features[rows], labels)

    def unlabeled(self) -> "Dataset":
        return Dataset(self.id, self.features)


@dataclass(frozen=True)
class BinningScheme:
    bins_per_dim: int
    ranges: tuple

    def __post_init__(self):
        if self.bins_per_dim < 2:
            raise DataError("bins_per_dim must be at least 2")
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        if not ranges:
            raise DataError("binning needs at least one dimension")
        for d, (lo, hi) in enumerate(ranges):
            if not lo < hi:
                raise DataError(f"dimension {d}: empty range ({lo}, {hi})")
        object.__setattr__(self, "ranges", ranges)

    @property
    def n_dims(self) -> int:
        return len(self.ranges)

    @property
    def omega_size(self) -> int:
        return self.n_dims * self.bins_per_dim

    def to_json(self) -> dict:
        return {"bins_per_dim": self.bins_per_dim, "ranges": [list(r) for r in self.ranges]}

    @classmethod
    def from_json(cls, obj: dict) -> "BinningScheme":
        return cls(int(obj["bins_per_dim"]), tuple(tuple(r) for r in obj["ranges"]))


@dataclass(frozen=True, eq=False)
class ProbDistribution:
    weights: np.ndarray
    omega_size: int = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if w.size == 0:
            raise DataError("empty distribution")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DataError("distribution weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise DataError(f"distribution weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "omega_size", w.size)


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return value


def _parse_label(text: str, row: int, col: str) -> int:
    value = _parse_float(text, row, col)
    if value != int(value):
        raise DataError(f"row {row}, column {col!r}: label {text!r} is not an integer")
    return int(value)


def load_csv(path: Union[str, Path], label_column: Optional[str] = None, id: Optional[str] = None) -> Dataset:
    """Read a headed CSV of numeric features.

    Rows are numbered from 1, not counting the header. When ``label_column``
    is given that column becomes the integer labels and is dropped from the
    features.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if label_column is not None and label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column) if label_column is not None else None
        feat_idx = [i for i in range(len(header)) if i != label_idx]
        if not feat_idx:
            raise DataError(f"{path}: no feature columns")

        rows, labels = [], []
        for rownum, record in enumerate(reader, start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}: row {rownum} has {len(record)} cells, header has {len(header)}")
            rows.append([_parse_float(record[i].strip(), rownum, header[i]) for i in feat_idx])
            if label_idx is not None:
                labels.append(_parse_label(record[label_idx].strip(), rownum, header[label_idx]))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(id or path.stem, np.array(rows), labels if label_idx is not None else None)


def save_csv(data: Dataset, path: Union[str, Path], label_column: str = "label") -> None:
    path = Path(path)
    header = [f"f{i}" for i in range(data.n_dims)]
    if data.labels is not None:
        header.append(label_column)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n_rows):
            row = [repr(float(v)) for v in data.features[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            writer.writerow(row)


def fit_binning(datasets: Sequence[Dataset], bins_per_dim: int) -> BinningScheme:
    """Global per-dimension min/max over ``datasets``, split into equal-width bins."""
    if not datasets:
        raise DataError("fit_binning needs at least one dataset")
    dims = {d.n_dims for d in datasets}
    if len(dims) != 1:
        raise DataError(f"datasets disagree on dimensionality: {sorted(dims)}")
    lo = np.min([d.features.min(axis=0) for d in datasets], axis=0)
    hi = np.max([d.features.max(axis=0) for d in datasets], axis=0)
    ranges = []
    for a, b in zip(lo, hi):
        a, b = float(a), float(b)
        if a == b:
            eps = DEGENERATE_EPS * max(1.0, abs(a))
            a, b = a - eps, b + eps
        ranges.append((a, b))
    return BinningScheme(int(bins_per_dim), tuple(ranges))


def cell_indices(features: np.ndarray, scheme: BinningScheme) -> np.ndarray:
    """Map every value to its cell in the concatenated per-dimension histogram.

    Out-of-range values land in the nearest edge bin.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != scheme.n_dims:
        raise DataError(f"expected {scheme.n_dims} feature columns, got shape {features.shape}")
    lo = np.array([r[0] for r in scheme.ranges])
    hi = np.array([r[1] for r in scheme.ranges])
    B = scheme.bins_per_dim
    bins = np.floor((features - lo) / (hi - lo) * B)
    bins = np.clip(bins, 0, B - 1).astype(np.int64)
    return bins + np.arange(scheme.n_dims, dtype=np.int64) * B


def histogram_matrix(cells: np.ndarray, blocks: Sequence[np.ndarray], omega_size: int) -> np.ndarray:
    """One normalized histogram row per block of row indices into ``cells``."""
    out = np.zeros((len(blocks), omega_size))
    for i, rows in enumerate(blocks):
        if len(rows) == 0:
            raise DataError("cannot build a distribution from an empty row subset")
        c = cells[rows].ravel()
        out[i] = np.bincount(c, minlength=omega_size) / c.size
    return out


def to_distribution(data: Union[Dataset, np.ndarray], scheme: BinningScheme) -> ProbDistribution:
    features = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if features.ndim == 2 and features.shape[0] == 0:
        raise DataError("cannot build a distribution from an empty row subset")
    cells = cell_indices(features, scheme)
    return ProbDistribution(np.bincount(cells.ravel(), minlength=scheme.omega_size) / cells.size)
