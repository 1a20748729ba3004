"""Shared domain types, seeded RNG streams and dataset CSV I/O."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np


class BlameBenchError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BlameBenchError, ValueError):
    pass


class DataError(BlameBenchError, ValueError):
    pass


class ValidationError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NumericError(BlameBenchError, ArithmeticError):
    pass


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()
    ground_truth: np.ndarray | None = None
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {X.shape}")
        n, m = X.shape
        if n < 1 or m < 1:
            raise ValidationError(f"dataset needs N >= 1 and M >= 1, got {n}x{m}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("features contain NaN or Inf")
        y = np.asarray(self.labels)
        if y.shape != (n,):
            raise ValidationError(f"labels must have shape ({n},), got {y.shape}")
        if not np.all((y == 0) | (y == 1)):
            bad = np.flatnonzero((y != 0) & (y != 1))[0]
            raise ValidationError(f"label at row {bad} is {y[bad]!r}, expected 0 or 1")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(m))
        if len(names) != m:
            raise ValidationError(f"{len(names)} feature names for {m} features")
        gt = self.ground_truth
        if gt is not None:
            gt = np.asarray(gt, dtype=float)
            if gt.shape != (n, m):
                raise ValidationError(
                    f"ground_truth shape {gt.shape} does not match features {X.shape}")
            if not np.all(np.isfinite(gt)):
                raise ValidationError("ground_truth contains NaN or Inf")
            gt = _frozen(gt)
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y, dtype=np.int64))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "ground_truth", gt)
        object.__setattr__(self, "provenance", dict(self.provenance))

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def feature_means(self) -> np.ndarray:
        return self.features.mean(axis=0)

    def feature_stds(self) -> np.ndarray:
        return self.features.std(axis=0)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        gt = None if self.ground_truth is None else self.ground_truth[rows]
        return Dataset(self.features[rows], self.labels[rows], self.feature_names, gt,
                       self.provenance)


@dataclass(frozen=True, eq=False)
class Instance:
    values: np.ndarray
    index: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValidationError("instance values must be a finite 1-D vector")
        object.__setattr__(self, "values", _frozen(v))


@dataclass(frozen=True, eq=False)
class Attribution:
    """Per-feature contribution vector for one instance.

    Scores are in contribution form, so for explainers that satisfy
    completeness ``base_value + scores.sum()`` reproduces the explained output.
    """

    scores: np.ndarray
    explainer_id: str
    base_value: float | None = None
    target: int = 1
    coefficients: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise ValidationError(f"{self.explainer_id}: scores must be finite and 1-D")
        object.__setattr__(self, "scores", _frozen(s))
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", _frozen(self.coefficients))

    def completeness_residual(self, output: float) -> float:
        if self.base_value is None:
            raise ValueError(f"{self.explainer_id} has no base value")
        return abs(self.base_value + float(self.scores.sum()) - output)


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    model: str
    explainer: str
    instance: str
    measure: str
    value: float
    flags: str = ""


# ---------------------------------------------------------------- randomness

@dataclass(frozen=True)
class RunSeed:
    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")


def _tag_key(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "little")


def derive_stream(seed: RunSeed | int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator keyed by (master seed, module tag, instance index)."""
    master = seed.master_seed if isinstance(seed, RunSeed) else int(seed)
    ss = np.random.SeedSequence(entropy=master, spawn_key=(_tag_key(tag), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------- CSV I/O

GT_PREFIX = "gt_"


def load_dataset(path, schema: Mapping[str, str] | None = None) -> Dataset:
    """Read a dataset CSV.

    ``schema`` may rename the label column (``{"label": "y"}``) or restrict
    the feature columns (``{"features": "a,b"}``). Ground-truth columns are
    the ``gt_<feature>`` columns, one per feature.
    """
    schema = dict(schema or {})
    label_col = schema.get("label", "label")
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", row=1) from None
        rows = list(enumerate(reader, start=2))
    if label_col not in header:
        raise ValidationError(f"label column {label_col!r} missing from {path}")
    if "features" in schema:
        feat_cols = [c.strip() for c in schema["features"].split(",")]
    else:
        feat_cols = [c for c in header if c != label_col and not c.startswith(GT_PREFIX)]
    gt_cols = [c for c in header if c.startswith(GT_PREFIX)]
    for c in feat_cols:
        if c not in header:
            raise ValidationError(f"feature column {c!r} missing")
    if gt_cols and sorted(gt_cols) != sorted(GT_PREFIX + c for c in feat_cols):
        raise ValidationError(
            f"ground-truth columns {gt_cols} do not match features {feat_cols}")
    pos = {c: i for i, c in enumerate(header)}
    feats, gts, labels = [], [], []
    for lineno, raw in rows:
        if not raw or all(not cell.strip() for cell in raw):
            continue
        if len(raw) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(raw)}", row=lineno)
        try:
            vals = [float(cell) for cell in raw]
        except ValueError as exc:
            raise ParseError(str(exc), row=lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"row {lineno}: missing or non-finite value")
        lab = vals[pos[label_col]]
        if lab not in (0.0, 1.0):
            raise ValidationError(f"row {lineno}: label {lab:g} is not 0 or 1")
        labels.append(int(lab))
        feats.append([vals[pos[c]] for c in feat_cols])
        if gt_cols:
            gts.append([vals[pos[GT_PREFIX + c]] for c in feat_cols])
    if not feats:
        raise ValidationError(f"{path} contains no data rows")
    return Dataset(np.array(feats), np.array(labels), tuple(feat_cols),
                   np.array(gts) if gt_cols else None, {"source": str(path)})


def save_dataset(ds: Dataset, path) -> None:
    if not isinstance(ds, Dataset):
        raise ValidationError("save_dataset expects a Dataset")
    path = Path(path)
    header = list(ds.feature_names)
    if ds.ground_truth is not None:
        header += [GT_PREFIX + c for c in ds.feature_names]
    header.append("label")
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(ds.n_instances):
                row = [repr(float(v)) for v in ds.features[i]]
                if ds.ground_truth is not None:
                    row += [repr(float(v)) for v in ds.ground_truth[i]]
                row.append(str(int(ds.labels[i])))
                w.writerow(row)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def as_2d(X, m: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValidationError(f"expected a 1-D or 2-D array, got shape {X.shape}")
    if m is not None and X.shape[1] != m and X.shape[0] > 0:
        raise ValidationError(f"expected {m} features, got {X.shape[1]}")
    return X


def format_float(v: float) -> str:
    return repr(float(v))


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def stable_index_order(values: Sequence[float], descending: bool) -> np.ndarray:
    """Indices sorted by value; ties keep ascending index order."""
    v = np.asarray(values, dtype=float)
    keys = -v if descending else v
    return np.argsort(keys, kind="stable")
