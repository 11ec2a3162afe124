"""Dataset loading, normalisation, target encoding and percentage splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

STD_FLOOR = 1e-12
VOWELS = frozenset("AEIOU")


class DataError(ValueError):
    """Malformed dataset file or unusable dataset."""


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


@dataclass(frozen=True)
class LabelledDataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: Tuple[str, ...]
    feature_stats: Optional[FeatureStats] = None
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D array, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError("one label per row required")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain missing or non-finite values")
        if y.min() < 0 or y.max() >= len(self.class_names):
            raise DataError("label index outside the class list")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, indices) -> "LabelledDataset":
        indices = np.asarray(indices, dtype=int)
        return replace(self, features=self.features[indices], labels=self.labels[indices])

    def targets(self, class_count: Optional[int] = None) -> np.ndarray:
        return encode_targets(self.labels, class_count or self.n_classes)


def _parse_label_column(label_column: Union[str, int], width: int, lineno: int) -> int:
    if label_column == "last":
        return width - 1
    col = int(label_column)
    if col < 0:
        col += width
    if not 0 <= col < width:
        raise DataError(f"line {lineno}: label column {label_column} outside {width} columns")
    return col


def load_csv(path, has_header: bool = False, label_column: Union[str, int] = "last",
             name: Optional[str] = None) -> LabelledDataset:
    """Comma-separated numeric features plus one label column.

    Labels are arbitrary tokens, numbered in order of first appearance.
    """
    path = Path(path)
    rows: List[List[float]] = []
    tokens: List[str] = []
    width = None
    label_col = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise DataError(f"line {lineno}: need at least one feature and a label")
                label_col = _parse_label_column(label_column, width, lineno)
            elif len(row) != width:
                raise DataError(f"line {lineno}: expected {width} fields, got {len(row)}")
            values = []
            for col, cell in enumerate(row):
                if col == label_col:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"line {lineno}, column {col + 1}: non-numeric value {cell.strip()!r}") from None
                if not np.isfinite(v):
                    raise DataError(f"line {lineno}, column {col + 1}: non-finite value")
                values.append(v)
            rows.append(values)
            tokens.append(row[label_col].strip())
    if not rows:
        raise DataError(f"{path}: no data rows")
    classes: dict = {}
    labels = [classes.setdefault(tok, len(classes)) for tok in tokens]
    return LabelledDataset(np.array(rows), np.array(labels), tuple(classes),
                           name=name or path.stem)


def write_csv(data: LabelledDataset, path) -> None:
    """Features then the label token, no header; loads back with ``load_csv``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for x, y in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in x] + [data.class_names[y]])


def normalize(data: LabelledDataset, train_indices) -> LabelledDataset:
    """Z-score every row with statistics of the training rows only.

    Features that are constant on the training rows are left as they are.
    """
    train_indices = np.asarray(train_indices, dtype=int)
    if train_indices.size == 0:
        raise DataError("no training rows to normalise with")
    X = data.features[train_indices]
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    flat = std < STD_FLOOR
    mean = np.where(flat, 0.0, mean)
    std = np.where(flat, 1.0, std)
    stats = FeatureStats(mean, std)
    return replace(data, features=stats.apply(data.features), feature_stats=stats)


def target_vector(label: int, class_count: int) -> np.ndarray:
    return encode_targets([label], class_count)[0]


def encode_targets(labels, class_count: int) -> np.ndarray:
    """One-vs-rest rows: +0.5 at the class, -0.5 elsewhere."""
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise DataError(f"label outside 0..{class_count - 1}")
    T = np.full((labels.size, class_count), -0.5)
    T[np.arange(labels.size), labels] = 0.5
    return T


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0
    repeats: int = 5

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise DataError(f"train fraction must lie in (0, 1), got {self.train_fraction}")
        if self.repeats < 1:
            raise DataError("repeats must be positive")


def train_size(n_samples: int, fraction: float) -> int:
    return int(np.floor(fraction * n_samples))


def split_once(n_samples: int, fraction: float, seed: int, repeat: int):
    n_train = train_size(n_samples, fraction)
    if n_train < 1:
        raise DataError(f"fraction {fraction} of {n_samples} rows leaves no training rows")
    if n_train >= n_samples:
        raise DataError(f"fraction {fraction} of {n_samples} rows leaves no test rows")
    perm = np.random.default_rng([seed, repeat]).permutation(n_samples)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(data: Union[LabelledDataset, int], spec: SplitSpec):
    """``spec.repeats`` (train, test) index pairs; repeat ``r`` is shuffled by
    a generator seeded with ``(seed, r)``."""
    n = data if isinstance(data, (int, np.integer)) else data.n_samples
    return [split_once(n, spec.train_fraction, spec.seed, r) for r in range(spec.repeats)]


def isolet_binarize(labels_26: Sequence) -> np.ndarray:
    """Letter classes 1..26 (A..Z) to 1 for vowels, 0 for consonants."""
    out = []
    for value in labels_26:
        try:
            f = float(value)
        except (TypeError, ValueError):
            raise DataError(f"ISOLET label {value!r} is not a letter number") from None
        k = int(f)
        if k != f or not 1 <= k <= 26:
            raise DataError(f"ISOLET label {value!r} outside 1..26")
        out.append(1 if chr(ord("A") + k - 1) in VOWELS else 0)
    return np.array(out, dtype=int)


def binarize_isolet_dataset(data: LabelledDataset) -> LabelledDataset:
    letters = [data.class_names[y] for y in data.labels]
    return replace(data, labels=isolet_binarize(letters), class_names=("consonant", "vowel"))


def separable_synthetic(n: int = 40, seed: int = 0, margin: float = 1.0) -> LabelledDataset:
    """Two classes in the plane on either side of ``x0 + x1 = 0``, every point
    at least ``margin`` from the line; classes alternate so they are balanced."""
    rng = np.random.default_rng(seed)
    points, labels = [], []
    while len(points) < n:
        p = rng.uniform(-3.0, 3.0, size=2)
        distance = (p[0] + p[1]) / np.sqrt(2.0)
        want = len(points) % 2
        if abs(distance) < margin or (distance > 0) != bool(want):
            continue
        points.append(p)
        labels.append(want)
    return LabelledDataset(np.array(points), np.array(labels), ("neg", "pos"), name="separable")


def load_isolet(paths: Sequence, name: str = "isolet") -> LabelledDataset:
    """Load one or more ISOLET files (617 features, letter number last) as a
    single vowel/consonant dataset. The UCI release splits the corpus into
    ``isolet1+2+3+4.data`` and ``isolet5.data``."""
    parts = [binarize_isolet_dataset(load_csv(p)) for p in paths]
    widths = {p.n_features for p in parts}
    if len(widths) != 1:
        raise DataError(f"ISOLET files disagree on feature count: {sorted(widths)}")
    return LabelledDataset(np.vstack([p.features for p in parts]),
                           np.concatenate([p.labels for p in parts]),
                           ("consonant", "vowel"), name=name)
