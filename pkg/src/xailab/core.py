"""Tabular data model shared by every other module.

Rows are stored as a float matrix. Categorical features are integer-coded
following the category order declared in the schema, so every feature takes
exactly one column (and one attribution slot).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed schemas, CSV files or dataset contents."""


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str = "continuous"
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise DataError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
            if len(self.categories) < 2:
                raise DataError(f"feature {self.name!r}: categorical needs >= 2 categories")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"feature {self.name!r}: duplicate categories")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"

    @property
    def cardinality(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]
    sensitive_index: int
    uncorrelated_indices: tuple[int, ...] = ()
    label_name: str = "label"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "uncorrelated_indices", tuple(int(i) for i in self.uncorrelated_indices))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if self.label_name in names:
            raise DataError(f"label {self.label_name!r} collides with a feature name")
        m = len(self.features)
        if not 0 <= self.sensitive_index < m:
            raise DataError(f"sensitive index {self.sensitive_index} out of range")
        for i in self.uncorrelated_indices:
            if not 0 <= i < m:
                raise DataError(f"uncorrelated index {i} out of range")
            if i == self.sensitive_index:
                raise DataError("sensitive feature cannot also be uncorrelated")
        if len(set(self.uncorrelated_indices)) != len(self.uncorrelated_indices):
            raise DataError("duplicate uncorrelated indices")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([f.is_categorical for f in self.features], dtype=bool)

    @property
    def sensitive_name(self) -> str:
        return self.features[self.sensitive_index].name

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            entry = {"name": f.name, "kind": f.kind}
            if f.is_categorical:
                entry["categories"] = list(f.categories)
            feats.append(entry)
        return {
            "features": feats,
            "sensitive": self.sensitive_name,
            "uncorrelated": [self.features[i].name for i in self.uncorrelated_indices],
            "label": self.label_name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        for key in ("features", "sensitive", "label"):
            if key not in d:
                raise DataError(f"schema is missing key {key!r}")
        feats = []
        for pos, entry in enumerate(d["features"]):
            if "name" not in entry:
                raise DataError(f"schema feature #{pos} has no 'name'")
            feats.append(Feature(str(entry["name"]), entry.get("kind", "continuous"),
                                 tuple(entry.get("categories", ()))))
        names = [f.name for f in feats]

        def lookup(name):
            if name not in names:
                raise DataError(f"schema references unknown feature {name!r}")
            return names.index(name)

        return cls(tuple(feats), lookup(d["sensitive"]),
                   tuple(lookup(n) for n in d.get("uncorrelated", [])), str(d["label"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: schema does not parse: {exc}") from exc
        return cls.from_dict(d)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[1] != self.schema.n_features:
            raise DataError(f"rows have width {X.shape[-1] if X.ndim else 0}, "
                            f"schema declares {self.schema.n_features} features")
        if y.shape != (X.shape[0],):
            raise DataError("one label per row required")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        for j, f in enumerate(self.schema.features):
            if f.is_categorical and X.shape[0]:
                col = X[:, j]
                if not (np.all(col == np.round(col)) and col.min() >= 0 and col.max() < f.cardinality):
                    raise DataError(f"feature {f.name!r}: codes outside 0..{f.cardinality - 1}")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y.astype(np.int64)))

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.schema, self.X[idx], self.y[idx])


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def load_csv(path, schema_path) -> Dataset:
    """Read a headed CSV whose columns are the schema features plus the label.

    Categorical cells hold category labels and are integer-coded by their
    position in the schema's category list. Errors name the offending row
    (1-based, header excluded) and column.
    """
    schema = FeatureSchema.load(schema_path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for name in schema.names + [schema.label_name]:
            if name not in header:
                raise DataError(f"{path}: missing column {name!r}")
        cols = [header.index(n) for n in schema.names]
        label_col = header.index(schema.label_name)
        rows, labels = [], []
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(f"{path}: row {r} has {len(record)} cells, expected {len(header)}")
            row = []
            for f, c in zip(schema.features, cols):
                cell = record[c].strip()
                if f.is_categorical:
                    if cell not in f.categories:
                        raise DataError(f"{path}: row {r}, column {f.name!r}: unknown category {cell!r}")
                    row.append(float(f.categories.index(cell)))
                else:
                    try:
                        row.append(float(cell))
                    except ValueError:
                        raise DataError(f"{path}: row {r}, column {f.name!r}: "
                                        f"cannot parse {cell!r}") from None
            cell = record[label_col].strip()
            if cell not in ("0", "1"):
                raise DataError(f"{path}: row {r}, column {schema.label_name!r}: label must be 0 or 1")
            rows.append(row)
            labels.append(int(cell))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(schema, np.array(rows, dtype=float), np.array(labels))


def write_csv(dataset: Dataset, path, schema_path=None) -> None:
    """Inverse of :func:`load_csv`; floats are written with ``repr`` so they round-trip exactly."""
    schema = dataset.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.names + [schema.label_name])
        for row, label in zip(dataset.X, dataset.y):
            cells = [f.categories[int(v)] if f.is_categorical else repr(float(v))
                     for f, v in zip(schema.features, row)]
            w.writerow(cells + [int(label)])
    if schema_path is not None:
        schema.save(schema_path)


# --------------------------------------------------------------------------
# Synthetic COMPAS-like data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters for :func:`generate_synthetic`.

    ``noise_grid`` rounds the standard-normal noise features to multiples of
    the grid, mimicking integer-valued count features (age, prior counts).
    Set it to ``None`` for raw real-valued draws.
    """
    n_rows: int = 2000
    n_noise_features: int = 8
    bias_strength: float = 0.9
    n_uncorrelated: int = 2
    seed: int = 0
    noise_grid: float | None = 1.0

    def __post_init__(self):
        if self.n_rows < 10:
            raise DataError("n_rows must be >= 10")
        if self.n_noise_features < 0 or self.n_uncorrelated < 0:
            raise DataError("feature counts must be non-negative")
        if not 0.5 < self.bias_strength <= 1.0:
            raise DataError("bias_strength must lie in (0.5, 1]")
        if self.noise_grid is not None and self.noise_grid <= 0:
            raise DataError("noise_grid must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise DataError("seed must be a 64-bit unsigned value")


def synthetic_schema(n_noise_features: int, n_uncorrelated: int) -> FeatureSchema:
    feats = [Feature(f"noise_{k}") for k in range(n_noise_features)]
    feats.append(Feature("sensitive", "categorical", ("0", "1")))
    feats += [Feature(f"unrelated_{k}", "categorical", ("0", "1")) for k in range(n_uncorrelated)]
    s = n_noise_features
    return FeatureSchema(tuple(feats), s, tuple(range(s + 1, s + 1 + n_uncorrelated)), "label")


def generate_synthetic(config: SyntheticConfig | None = None, **kwargs) -> Dataset:
    """Draw a COMPAS-shaped dataset whose label leaks the sensitive feature.

    The label equals the sensitive bit with probability ``bias_strength``.
    Noise features are standard normal and unrelated features are fair
    coins; both are independent of the label and of each other.
    """
    cfg = config if config is not None else SyntheticConfig(**kwargs)
    rng = np.random.default_rng(int(cfg.seed))
    n = cfg.n_rows
    noise = rng.standard_normal((n, cfg.n_noise_features))
    if cfg.noise_grid is not None:
        noise = np.round(noise / cfg.noise_grid) * cfg.noise_grid
    sensitive = rng.integers(0, 2, size=n)
    keep = rng.random(n) < cfg.bias_strength
    labels = np.where(keep, sensitive, 1 - sensitive)
    unrelated = rng.integers(0, 2, size=(n, cfg.n_uncorrelated))
    X = np.column_stack([noise, sensitive[:, None], unrelated]).astype(float)
    return Dataset(synthetic_schema(cfg.n_noise_features, cfg.n_uncorrelated), X, labels)


def split(dataset: Dataset, test_fraction: float, seed) -> tuple[Dataset, Dataset]:
    if not 0 < test_fraction < 1:
        raise DataError("test_fraction must lie strictly between 0 and 1")
    n = len(dataset)
    if n < 2:
        raise DataError("need at least 2 rows to split")
    order = np.random.default_rng(seed).permutation(n)
    n_test = min(max(int(round(n * test_fraction)), 1), n - 1)
    return dataset.subset(order[n_test:]), dataset.subset(order[:n_test])


# --------------------------------------------------------------------------
# Standardization statistics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StandardizationStats:
    """Column statistics used for LIME sampling and kernel distances.

    ``mean`` and ``std`` span every column; categorical positions hold 0 and
    1 and are never used. ``frequencies`` maps each categorical column index
    to the empirical probability of each code.
    """
    mean: np.ndarray
    std: np.ndarray
    categorical: np.ndarray
    frequencies: dict = field(default_factory=dict)

    def __post_init__(self):
        cont = ~np.asarray(self.categorical, dtype=bool)
        if np.any(np.asarray(self.std)[cont] <= 0):
            raise DataError("standard deviations must be positive")
        for j, p in self.frequencies.items():
            if abs(float(np.sum(p)) - 1.0) > 1e-9:
                raise DataError(f"frequencies of column {j} do not sum to 1")
        object.__setattr__(self, "mean", _frozen(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "std", _frozen(np.asarray(self.std, dtype=float)))
        object.__setattr__(self, "categorical", _frozen(np.asarray(self.categorical, dtype=bool)))

    def standardize(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.std
        Z[..., self.categorical] = np.asarray(X, dtype=float)[..., self.categorical]
        return Z


def fit_standardization(dataset: Dataset) -> StandardizationStats:
    if len(dataset) < 2:
        raise DataError("need at least 2 rows to fit standardization")
    schema = dataset.schema
    m = schema.n_features
    mean, std = np.zeros(m), np.ones(m)
    freqs = {}
    for j, f in enumerate(schema.features):
        col = dataset.X[:, j]
        if f.is_categorical:
            counts = np.bincount(col.astype(int), minlength=f.cardinality)
            freqs[j] = counts / counts.sum()
        else:
            mean[j] = col.mean()
            std[j] = col.std()
            if std[j] == 0:
                raise DataError(f"feature {f.name!r} is constant (std = 0)")
    return StandardizationStats(mean, std, schema.categorical_mask, freqs)


# --------------------------------------------------------------------------
# Black-box prediction interface
# --------------------------------------------------------------------------

class BlackBoxModel:
    """Opaque binary classifier.

    Subclasses implement :meth:`_proba1`, the class-1 probability for a batch
    of rows. Everything downstream talks to models only through
    :meth:`predict_proba` and :meth:`predict`.
    """

    def _proba1(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, X: Sequence) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p1 = np.clip(self._proba1(X), 0.0, 1.0)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X: Sequence) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int64)


class FunctionModel(BlackBoxModel):
    """Wrap a vectorised ``X -> P(class 1)`` callable as a black box."""

    def __init__(self, fn, name: str = "function"):
        self.fn = fn
        self.name = name

    def _proba1(self, X):
        return np.broadcast_to(np.asarray(self.fn(X), dtype=float), (X.shape[0],)).copy()

    def __repr__(self):
        return f"FunctionModel({self.name!r})"
