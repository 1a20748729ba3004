"""Oracle-based robustness measures: deletion, preservation, continuity.

All measures query the explained model as an oracle. The probe helpers
report when that oracle itself looks unreliable instead of silently
charging the explanation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (Attribution, Dataset, NumericError, ValidationError, derive_stream,
                   stable_index_order)
from .models import Model

STRATEGIES = ("dataset_mean", "zero", "fixed_vector")


class DegenerateNullificationError(NumericError):
    """Nullified features already sit at the baseline, so x' == x."""


@dataclass(frozen=True, eq=False)
class NullificationStrategy:
    kind: str = "dataset_mean"
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValidationError(f"unknown nullification {self.kind!r}")
        if self.kind == "fixed_vector":
            if self.values is None:
                raise ValidationError("fixed_vector strategy needs values")
            object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def baseline(self, ds: Dataset | None, m: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(m)
        if self.kind == "fixed_vector":
            if self.values.shape != (m,):
                raise ValidationError(f"fixed vector has length {self.values.size}, need {m}")
            return self.values
        if ds is None:
            raise ValidationError("dataset_mean strategy needs a dataset")
        return ds.feature_means()


def nullify(x, indices: Sequence[int], strategy: NullificationStrategy,
            ds: Dataset | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    idx = np.asarray(list(indices), dtype=int)
    if idx.size == 0:
        raise ValidationError("nullification set E is empty")
    if np.any((idx < 0) | (idx >= x.size)):
        raise ValidationError(f"nullification indices {idx.tolist()} out of range")
    out = x.copy()
    out[idx] = strategy.baseline(ds, x.size)[idx]
    return out


def _scores(attribution) -> np.ndarray:
    return np.asarray(attribution.scores if isinstance(attribution, Attribution)
                      else attribution, dtype=float)


def top_k(attribution, k: int, descending: bool = True) -> np.ndarray:
    """Indices of the k largest (or smallest) attribution magnitudes."""
    s = np.abs(_scores(attribution))
    if not 1 <= k <= s.size:
        raise ValidationError(f"K must be in [1, {s.size}], got {k}")
    return stable_index_order(s, descending)[:k]


def _removal_score(model, x, E, strategy, ds, output):
    x = np.asarray(x, dtype=float)
    x_prime = nullify(x, E, strategy, ds)
    dist = float(np.linalg.norm(x - x_prime))
    if dist == 0.0:
        raise DegenerateNullificationError(
            f"features {E.tolist()} already equal the baseline; nullifying them cannot "
            "change the prediction")
    fx, fxp = model.predict(x, output), model.predict(x_prime, output)
    return abs(fxp - fx) / dist, fx, fxp, x_prime


def importance_by_deletion(model: Model, x, attribution, k: int,
                           strategy: NullificationStrategy = NullificationStrategy(),
                           ds: Dataset | None = None, output: str = "proba") -> float:
    """|f(x') - f(x)| / ||x - x'|| after nullifying the top-k features."""
    return _removal_score(model, x, top_k(attribution, k, True), strategy, ds, output)[0]


def importance_by_preservation(model: Model, x, attribution, k: int,
                               strategy: NullificationStrategy = NullificationStrategy(),
                               ds: Dataset | None = None, output: str = "proba") -> float:
    """Same quotient with the k least important features nullified."""
    return _removal_score(model, x, top_k(attribution, k, False), strategy, ds, output)[0]


@dataclass(frozen=True)
class DeletionProbe:
    deletion: float
    f_x: float
    f_x_prime: float
    class_changed: bool
    oracle_suspect: bool
    removed: tuple[int, ...]


def deletion_blame_probe(model: Model, x, attribution, k: int,
                         strategy: NullificationStrategy = NullificationStrategy(),
                         ds: Dataset | None = None,
                         confidence_margin: float = 0.3) -> DeletionProbe:
    """Deletion score plus a flag for a confidently unchanged prediction.

    ``oracle_suspect`` is set when removing the top-k features leaves the
    predicted class unchanged and ``|f(x') - 0.5| > confidence_margin``: a low
    deletion score could then just as well indict the model.
    """
    E = top_k(attribution, k, True)
    score, fx, fxp, _ = _removal_score(model, x, E, strategy, ds, "proba")
    changed = (fx > 0.5) != (fxp > 0.5)
    suspect = (not changed) and abs(fxp - 0.5) > confidence_margin
    return DeletionProbe(score, fx, fxp, bool(changed), bool(suspect),
                         tuple(int(i) for i in E))


def per_feature_robustness(model: Model, x, strategy: NullificationStrategy = NullificationStrategy(),
                           ds: Dataset | None = None, output: str = "proba") -> np.ndarray:
    """|f(x) - f(x with feature m nullified)| for each feature separately."""
    x = np.asarray(x, dtype=float)
    base = strategy.baseline(ds, x.size)
    X = np.tile(x, (x.size, 1))
    X[np.arange(x.size), np.arange(x.size)] = base
    return np.abs(np.asarray(model.predict(X, output)) - model.predict(x, output))


# ---------------------------------------------------------------- continuity

@dataclass(frozen=True)
class ContinuityConfig:
    epsilon: float
    n_samples: int = 50

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")

    @classmethod
    def default_for(cls, ds: Dataset) -> "ContinuityConfig":
        return cls(epsilon=0.1 * float(ds.feature_stds().mean()))


def default_k(m: int) -> int:
    return max(1, math.ceil(m / 4))


def sample_ball(x, epsilon: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniform in the Euclidean ball of radius epsilon around x."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n, x.size))
    i = 0
    while i < n:
        d = rng.standard_normal(x.size)
        norm = np.linalg.norm(d)
        r = epsilon * rng.uniform() ** (1.0 / x.size)
        if norm == 0.0 or r == 0.0:
            continue
        out[i] = x + r * d / norm
        if np.array_equal(out[i], x):
            continue
        i += 1
    return out


ExplainFn = Callable[[Model, np.ndarray, int], Attribution]


def continuity_quotients(model: Model, explainer: ExplainFn, x, cfg: ContinuityConfig,
                         seed: int = 0, index: int = 0) -> np.ndarray:
    """Per-draw ||g(x) - g(x_j)|| / ||x - x_j||, in draw order."""
    x = np.asarray(x, dtype=float)
    rng = derive_stream(seed, "continuity", index)
    pts = sample_ball(x, cfg.epsilon, cfg.n_samples, rng)
    gx = _scores(explainer(model, x, index))
    q = np.empty(cfg.n_samples)
    for j, xj in enumerate(pts):
        # same explainer index for every draw so sampling noise stays frozen
        gj = _scores(explainer(model, xj, index))
        q[j] = np.linalg.norm(gx - gj) / np.linalg.norm(x - xj)
    return q


def continuity(model: Model, explainer: ExplainFn, x, cfg: ContinuityConfig,
               seed: int = 0, index: int = 0) -> float:
    return float(continuity_quotients(model, explainer, x, cfg, seed, index).max())
