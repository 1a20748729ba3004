"""Synthetic generators that emit labels plus per-instance prior importance.

Feature columns are zero-based: column ``j`` holds the generator's
one-based feature ``X_{j+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import Dataset, NumericError, ValidationError, derive_stream

N_CHEN_FEATURES = 10

TRANSFORMS = ("identity", "sin", "cos", "abs", "square", "exp", "negexp")


def _apply(transform: str, u):
    if transform == "identity":
        return u
    if transform == "sin":
        return np.sin(u)
    if transform == "cos":
        return np.cos(u)
    if transform == "abs":
        return np.abs(u)
    if transform == "square":
        return u * u
    if transform == "exp":
        return np.exp(u)
    if transform == "negexp":
        return np.exp(-u)
    raise ValidationError(f"unknown transform {transform!r}")


def _derivative(transform: str, u):
    if transform == "identity":
        return np.ones_like(u)
    if transform == "sin":
        return np.cos(u)
    if transform == "cos":
        return -np.sin(u)
    if transform == "abs":
        return np.sign(u)
    if transform == "square":
        return 2.0 * u
    if transform == "exp":
        return np.exp(u)
    if transform == "negexp":
        return -np.exp(-u)
    raise ValidationError(f"unknown transform {transform!r}")


@dataclass(frozen=True)
class Term:
    coefficient: float
    feature_index: int
    transform: str = "identity"
    scale: float = 1.0  # inner argument multiplier: coefficient * T(scale * x)


@dataclass(frozen=True)
class PolynomialSpec:
    terms: tuple[Term, ...]
    intercept: float = 0.0

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        if not terms:
            raise ValidationError("polynomial spec needs at least one term")
        for t in terms:
            if t.transform not in TRANSFORMS:
                raise ValidationError(f"unknown transform {t.transform!r}")
            if t.feature_index < 0:
                raise ValidationError("feature indices must be non-negative")
        object.__setattr__(self, "terms", terms)

    @property
    def n_features(self) -> int:
        return max(t.feature_index for t in self.terms) + 1

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], float(self.intercept))
        for t in self.terms:
            out = out + t.coefficient * _apply(t.transform, t.scale * X[:, t.feature_index])
        return out

    def gradient(self, x, m: int | None = None) -> np.ndarray:
        """Analytic gradient at a single point, zero-padded to ``m`` features."""
        x = np.asarray(x, dtype=float)
        m = max(m or 0, self.n_features)
        g = np.zeros(m)
        for t in self.terms:
            u = t.scale * x[t.feature_index]
            g[t.feature_index] += t.coefficient * t.scale * _derivative(t.transform, u)
        return g

    def to_dict(self) -> dict:
        return {"intercept": self.intercept,
                "terms": [{"coefficient": t.coefficient, "feature_index": t.feature_index,
                           "transform": t.transform, "scale": t.scale} for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "PolynomialSpec":
        unknown = set(d) - {"intercept", "terms"}
        if unknown:
            raise ValidationError(f"unknown polynomial spec keys: {sorted(unknown)}")
        terms = []
        for t in d["terms"]:
            extra = set(t) - {"coefficient", "feature_index", "transform", "scale"}
            if extra:
                raise ValidationError(f"unknown term keys: {sorted(extra)}")
            terms.append(Term(float(t["coefficient"]), int(t["feature_index"]),
                              t.get("transform", "identity"), float(t.get("scale", 1.0))))
        return cls(tuple(terms), float(d.get("intercept", 0.0)))


LINEAR_2X0_MINUS_X1 = PolynomialSpec((Term(2.0, 0), Term(-1.0, 1)))


@dataclass(frozen=True, eq=False)
class ClusterSpec:
    centers: np.ndarray
    scales: np.ndarray
    masks: np.ndarray
    weights: np.ndarray
    cluster_labels: Sequence[int] | str = "from-score"

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        k, m = centers.shape
        if k < 2:
            raise ValidationError(f"need at least 2 clusters, got {k}")
        scales = np.broadcast_to(np.asarray(self.scales, dtype=float), (k, m)).copy()
        if not np.all(scales > 0) or not np.all(np.isfinite(scales)):
            raise ValidationError("cluster scales must be positive and finite")
        masks = np.broadcast_to(np.asarray(self.masks), (k, m)).copy()
        if not np.all((masks == 0) | (masks == 1)):
            raise ValidationError("cluster masks must be binary")
        weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (k, m)).copy()
        labels = self.cluster_labels
        if not isinstance(labels, str):
            labels = tuple(int(v) for v in labels)
            if len(labels) != k or any(v not in (0, 1) for v in labels):
                raise ValidationError("cluster_labels must give one 0/1 label per cluster")
        elif labels != "from-score":
            raise ValidationError("cluster_labels must be a list or 'from-score'")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "masks", masks.astype(float))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "cluster_labels", labels)

    @classmethod
    def random(cls, k: int, m: int, seed: int, spread: float = 3.0) -> "ClusterSpec":
        rng = derive_stream(seed, "cluster-spec")
        centers = rng.uniform(-spread, spread, size=(k, m))
        masks = rng.integers(0, 2, size=(k, m))
        masks[masks.sum(axis=1) == 0, 0] = 1
        weights = rng.normal(size=(k, m))
        return cls(centers, np.ones((k, m)), masks, weights)

    def to_dict(self) -> dict:
        labels = self.cluster_labels
        return {"centers": self.centers.tolist(), "scales": self.scales.tolist(),
                "masks": self.masks.astype(int).tolist(), "weights": self.weights.tolist(),
                "cluster_labels": labels if isinstance(labels, str) else list(labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterSpec":
        unknown = set(d) - {"centers", "scales", "masks", "weights", "cluster_labels"}
        if unknown:
            raise ValidationError(f"unknown cluster spec keys: {sorted(unknown)}")
        return cls(d["centers"], d.get("scales", 1.0), d["masks"], d.get("weights", 1.0),
                   d.get("cluster_labels", "from-score"))


def _check_n(n):
    if int(n) < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    return int(n)


def _mask(m: int, important) -> np.ndarray:
    v = np.zeros(m)
    v[list(important)] = 1.0
    return v


def _bernoulli_labels(score, rng) -> np.ndarray:
    return (rng.uniform(size=score.shape) < expit(score)).astype(int)


def xor_score(X):
    return X[:, 0] * X[:, 1]


def orange_skin_score(X, cols=(0, 1, 2, 3)):
    return np.sum(X[:, list(cols)] ** 2, axis=1) - 4.0


def nonlinear_additive_score(X, cols=(0, 1, 2, 3)):
    a, b, c, d = cols
    return -100.0 * np.sin(2.0 * X[:, a]) + 2.0 * np.abs(X[:, b]) + X[:, c] + np.exp(-X[:, d])


def _chen(name, n, seed, score_fn, important, **extra):
    n = _check_n(n)
    rng = derive_stream(seed, f"synth/{name}")
    X = rng.standard_normal((n, N_CHEN_FEATURES))
    y = _bernoulli_labels(score_fn(X), rng)
    gt = np.tile(_mask(N_CHEN_FEATURES, important), (n, 1))
    prov = {"generator": name, "n": n, "seed": int(seed), "label_law": "sigmoid", **extra}
    return Dataset(X, y, ground_truth=gt, provenance=prov)


def generate_xor(n, seed) -> Dataset:
    return _chen("xor", n, seed, xor_score, (0, 1))


def generate_orange_skin(n, seed) -> Dataset:
    return _chen("orange_skin", n, seed, orange_skin_score, (0, 1, 2, 3))


def generate_nonlinear_additive(n, seed) -> Dataset:
    return _chen("nonlinear_additive", n, seed, nonlinear_additive_score, (0, 1, 2, 3))


SWITCH_ON = (1, 2, 3, 4)
SWITCH_OFF = (5, 6, 7, 8)


def switch_score(X, component):
    return np.where(component == 1, orange_skin_score(X, SWITCH_ON),
                    nonlinear_additive_score(X, SWITCH_OFF))


def generate_switch(n, seed, mark_switch: bool = True) -> Dataset:
    """Switch-feature data; ``mark_switch=False`` gives the strict 2-5 / 6-9 masks."""
    n = _check_n(n)
    rng = derive_stream(seed, "synth/switch")
    X = rng.standard_normal((n, N_CHEN_FEATURES))
    component = rng.integers(0, 2, size=n)
    X[:, 0] += np.where(component == 1, 3.0, -3.0)
    y = _bernoulli_labels(switch_score(X, component), rng)
    lead = (0,) if mark_switch else ()
    on = _mask(N_CHEN_FEATURES, lead + SWITCH_ON)
    off = _mask(N_CHEN_FEATURES, lead + SWITCH_OFF)
    gt = np.where(component[:, None] == 1, on, off)
    prov = {"generator": "switch", "n": n, "seed": int(seed), "label_law": "sigmoid",
            "mark_switch": bool(mark_switch), "component": component.tolist()}
    return Dataset(X, y, ground_truth=gt, provenance=prov)


def generate_seneca_rc(spec: PolynomialSpec, n, noise: float = 0.0, n_redundant: int = 0,
                       seed=0) -> Dataset:
    """Polynomial-law data; provisional ground truth is the analytic gradient at x."""
    n = _check_n(n)
    if noise < 0:
        raise ValidationError("noise must be >= 0")
    if n_redundant < 0:
        raise ValidationError("n_redundant must be >= 0")
    rng = derive_stream(seed, "synth/seneca_rc")
    m_used = spec.n_features
    m = m_used + int(n_redundant)
    X = rng.standard_normal((n, m))
    value = spec.evaluate(X)
    eps = rng.standard_normal(n)
    if not np.all(np.isfinite(value)):
        raise NumericError("polynomial spec is not finite on the sample")
    y = (value + noise * eps > 0).astype(int)
    gt = np.array([spec.gradient(x, m) for x in X])
    if not np.all(np.isfinite(gt)):
        raise NumericError("polynomial gradient is not finite on the sample")
    prov = {"generator": "seneca_rc", "n": n, "seed": int(seed), "noise": float(noise),
            "n_redundant": int(n_redundant), "spec": spec.to_dict()}
    return Dataset(X, y, ground_truth=gt, provenance=prov)


def generate_gaussian_clusters(spec: ClusterSpec, n, seed) -> Dataset:
    """Diagonal Gaussian clusters; each member's ground truth is its cluster mask.

    Without fixed cluster labels the label is the sign of the masked linear
    score ``weights * mask * (x - center)``.
    """
    n = _check_n(n)
    rng = derive_stream(seed, "synth/gaussian_clusters")
    k, m = spec.centers.shape
    cluster = rng.integers(0, k, size=n)
    X = spec.centers[cluster] + spec.scales[cluster] * rng.standard_normal((n, m))
    if isinstance(spec.cluster_labels, str):
        score = np.sum(spec.weights[cluster] * spec.masks[cluster] * (X - spec.centers[cluster]),
                       axis=1)
        y = (score > 0).astype(int)
    else:
        y = np.asarray(spec.cluster_labels)[cluster]
    prov = {"generator": "gaussian_clusters", "n": n, "seed": int(seed),
            "label_rule": "masked-linear-score" if isinstance(spec.cluster_labels, str)
            else "fixed", "cluster": cluster.tolist()}
    return Dataset(X, y, ground_truth=spec.masks[cluster], provenance=prov)


GENERATORS = {
    "xor": generate_xor,
    "orange_skin": generate_orange_skin,
    "nonlinear_additive": generate_nonlinear_additive,
    "switch": generate_switch,
    "seneca_rc": generate_seneca_rc,
    "gaussian_clusters": generate_gaussian_clusters,
}


def generate(name: str, n: int, seed: int, noise: float = 0.0, spec: dict | None = None,
             n_redundant: int = 0) -> Dataset:
    """Dispatch by generator name; ``spec`` is the JSON form for seneca_rc/clusters."""
    if name not in GENERATORS:
        raise ValidationError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}")
    if name == "seneca_rc":
        poly = PolynomialSpec.from_dict(spec) if spec else LINEAR_2X0_MINUS_X1
        return generate_seneca_rc(poly, n, noise, n_redundant, seed)
    if name == "gaussian_clusters":
        cs = ClusterSpec.from_dict(spec) if spec else ClusterSpec.random(4, 2, seed)
        return generate_gaussian_clusters(cs, n, seed)
    return GENERATORS[name](n, seed)
