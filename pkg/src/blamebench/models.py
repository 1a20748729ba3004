"""Small trainable predictors used as explained models.

Every model exposes ``predict_proba`` (class-1 probability), ``predict_margin``
(log-odds for classifiers, raw output for regressors) and ``predict`` (the
default explained output: probability for classifiers, raw output for
regressors). Differentiable models also expose ``gradient``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit

from .core import Dataset, NumericError, ValidationError, as_2d, derive_stream

OUTPUTS = ("default", "proba", "margin")


class SingularSystemError(NumericError):
    pass


class TrainingDivergedError(NumericError):
    pass


def _squeeze(out, x):
    return float(out[0]) if np.ndim(x) == 1 else out


class Model:
    kind = "model"
    is_classifier = True
    n_features: int

    def _margin(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_margin(self, x):
        return _squeeze(self._margin(as_2d(x, self.n_features)), x)

    def predict_proba(self, x):
        return _squeeze(expit(self._margin(as_2d(x, self.n_features))), x)

    def predict(self, x, output: str = "default"):
        X = as_2d(x, self.n_features)
        if output == "margin" or (output == "default" and not self.is_classifier):
            return _squeeze(self._margin(X), x)
        if output in ("proba", "default"):
            return _squeeze(expit(self._margin(X)), x)
        raise ValidationError(f"unknown output {output!r}")

    def predict_label(self, X) -> np.ndarray:
        return (expit(self._margin(as_2d(X, self.n_features))) > 0.5).astype(int)

    @property
    def differentiable(self) -> bool:
        return True

    def margin_gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x, output: str = "proba") -> np.ndarray:
        """Input gradient of the chosen output at a single point."""
        x = np.asarray(x, dtype=float)
        g = self.margin_gradient(x)
        if output == "margin" or (output == "default" and not self.is_classifier):
            return g
        p = float(expit(self._margin(x[None, :]))[0])
        return p * (1.0 - p) * g

    def parameter_blocks(self) -> list[dict[str, np.ndarray]]:
        raise NotImplementedError

    def with_parameter_blocks(self, blocks) -> "Model":
        raise NotImplementedError

    def init_block(self, index: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _init_layer(rng, fan_in: int, fan_out: int):
    W = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
    return W, np.zeros(fan_out)


# ---------------------------------------------------------------- logistic

@dataclass(frozen=True, eq=False)
class LogisticModel(Model):
    weights: np.ndarray
    bias: float = 0.0
    meta: dict = field(default_factory=dict)
    kind = "logistic"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise NumericError("non-finite logistic parameters")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def n_features(self):
        return self.weights.shape[0]

    def log_odds(self, x):
        return self.predict_margin(x)

    def _margin(self, X):
        return X @ self.weights + self.bias

    def margin_gradient(self, x):
        return self.weights.copy()

    def parameter_blocks(self):
        return [{"weights": self.weights.copy(), "bias": np.array([self.bias])}]

    def with_parameter_blocks(self, blocks):
        (b,) = blocks
        return replace(self, weights=np.array(b["weights"]), bias=float(b["bias"][0]))

    def init_block(self, index, rng):
        W, b = _init_layer(rng, self.n_features, 1)
        return {"weights": W[:, 0], "bias": b}

    def to_dict(self):
        return {"kind": self.kind, "weights": self.weights.tolist(), "bias": self.bias,
                "meta": self.meta}


@dataclass(frozen=True, eq=False)
class LinearModel(Model):
    weights: np.ndarray
    bias: float = 0.0
    meta: dict = field(default_factory=dict)
    kind = "linear"
    is_classifier = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise NumericError("non-finite linear parameters")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def n_features(self):
        return self.weights.shape[0]

    def _margin(self, X):
        return X @ self.weights + self.bias

    def margin_gradient(self, x):
        return self.weights.copy()

    def parameter_blocks(self):
        return [{"weights": self.weights.copy(), "bias": np.array([self.bias])}]

    def with_parameter_blocks(self, blocks):
        (b,) = blocks
        return replace(self, weights=np.array(b["weights"]), bias=float(b["bias"][0]))

    def init_block(self, index, rng):
        W, b = _init_layer(rng, self.n_features, 1)
        return {"weights": W[:, 0], "bias": b}

    def to_dict(self):
        return {"kind": self.kind, "weights": self.weights.tolist(), "bias": self.bias,
                "meta": self.meta}


# ---------------------------------------------------------------- naive Bayes

_LOG_2PI = np.log(2.0 * np.pi)


def gaussian_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


@dataclass(frozen=True, eq=False)
class GaussianNBModel(Model):
    priors: np.ndarray  # [P(y=0), P(y=1)]
    means: np.ndarray  # (2, M)
    variances: np.ndarray  # (2, M)
    meta: dict = field(default_factory=dict)
    kind = "gaussian_nb"

    def __post_init__(self):
        priors = np.array(self.priors, dtype=float)
        means = np.array(self.means, dtype=float)
        var = np.array(self.variances, dtype=float)
        if priors.shape != (2,) or not np.all((priors > 0) & (priors < 1)):
            raise ValidationError("priors must be two values in (0, 1)")
        if means.shape != var.shape or means.ndim != 2 or means.shape[0] != 2:
            raise ValidationError("means and variances must both have shape (2, M)")
        if not np.all(var > 0):
            raise ValidationError("variances must be positive")
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", var)

    @property
    def n_features(self):
        return self.means.shape[1]

    def prior_log_ratio(self) -> float:
        return float(np.log(self.priors[1]) - np.log(self.priors[0]))

    def feature_log_ratios(self, X) -> np.ndarray:
        X = as_2d(X, self.n_features)
        return (gaussian_logpdf(X, self.means[1], self.variances[1])
                - gaussian_logpdf(X, self.means[0], self.variances[0]))

    def _margin(self, X):
        return self.prior_log_ratio() + self.feature_log_ratios(X).sum(axis=1)

    def margin_gradient(self, x):
        x = np.asarray(x, dtype=float)
        return (-(x - self.means[1]) / self.variances[1]
                + (x - self.means[0]) / self.variances[0])

    def parameter_blocks(self):
        return [{"means": self.means.copy(), "variances": self.variances.copy()}]

    def with_parameter_blocks(self, blocks):
        (b,) = blocks
        return replace(self, means=np.array(b["means"]), variances=np.array(b["variances"]))

    def init_block(self, index, rng):
        return {"means": rng.standard_normal(self.means.shape),
                "variances": np.ones_like(self.variances)}

    def to_dict(self):
        return {"kind": self.kind, "priors": self.priors.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist(), "meta": self.meta}


# ---------------------------------------------------------------- MLP

@dataclass(frozen=True, eq=False)
class MlpModel(Model):
    """tanh hidden layers, sigmoid output. ``layers`` is a list of (W, b)."""

    layers: tuple
    meta: dict = field(default_factory=dict)
    kind = "mlp"

    def __post_init__(self):
        layers = tuple((np.array(W, dtype=float), np.array(b, dtype=float).ravel())
                       for W, b in self.layers)
        if not layers:
            raise ValidationError("MLP needs at least the output layer")
        for i, (W, b) in enumerate(layers):
            if W.ndim != 2 or W.shape[1] != b.shape[0]:
                raise ValidationError(f"layer {i}: weight/bias shapes {W.shape}, {b.shape}")
            if i and layers[i - 1][0].shape[1] != W.shape[0]:
                raise ValidationError(f"layer {i} input width does not match layer {i - 1}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {i} has non-finite parameters")
        if layers[-1][0].shape[1] != 1:
            raise ValidationError("output layer must have one unit")
        object.__setattr__(self, "layers", layers)

    @property
    def n_features(self):
        return self.layers[0][0].shape[0]

    @property
    def n_layers(self):
        return len(self.layers)

    def _forward(self, X):
        acts = [X]
        h = X
        for W, b in self.layers[:-1]:
            h = np.tanh(h @ W + b)
            acts.append(h)
        W, b = self.layers[-1]
        return acts, (h @ W + b)[:, 0]

    def _margin(self, X):
        return self._forward(X)[1]

    def margin_gradient(self, x):
        acts, _ = self._forward(np.asarray(x, dtype=float)[None, :])
        delta = self.layers[-1][0][:, 0]
        for i in range(len(self.layers) - 2, -1, -1):
            delta = delta * (1.0 - acts[i + 1][0] ** 2)
            delta = self.layers[i][0] @ delta
        return delta

    def parameter_blocks(self):
        return [{"W": W.copy(), "b": b.copy()} for W, b in self.layers]

    def with_parameter_blocks(self, blocks):
        return replace(self, layers=tuple((np.array(b["W"]), np.array(b["b"])) for b in blocks))

    def init_block(self, index, rng):
        W, b = _init_layer(rng, *self.layers[index][0].shape)
        return {"W": W, "b": b}

    def to_dict(self):
        return {"kind": self.kind, "layers": [{"W": W.tolist(), "b": b.tolist()}
                                              for W, b in self.layers], "meta": self.meta}


# ---------------------------------------------------------------- black box

class FunctionModel(Model):
    """Wraps a vectorised callable ``X -> output``; no gradient, no parameters."""

    kind = "function"

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_features: int,
                 is_classifier: bool = False, name: str = "function"):
        self.fn = fn
        self.n_features = n_features
        self.is_classifier = is_classifier
        self.name = name

    def _raw(self, X):
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])

    def _margin(self, X):
        if self.is_classifier:
            p = np.clip(self._raw(X), 1e-15, 1 - 1e-15)
            return np.log(p) - np.log1p(-p)
        return self._raw(X)

    def predict(self, x, output="default"):
        X = as_2d(x, self.n_features)
        if output == "default":
            return _squeeze(self._raw(X), x)
        return super().predict(x, output)

    @property
    def differentiable(self):
        return False

    def gradient(self, x, output="proba"):
        raise ValidationError(f"{self.name} does not expose a gradient")

    def parameter_blocks(self):
        return []


# ---------------------------------------------------------------- fitting

def _check_binary(ds: Dataset):
    if ds.n_instances < 2:
        raise ValidationError("need at least two instances to fit")
    counts = np.bincount(ds.labels, minlength=2)
    if counts.min() == 0:
        raise ValidationError("both classes must be present to fit a classifier")


def _bce(margin, y, l2, params) -> float:
    # mean log(1 + exp(-s*z)), s = 2y-1
    s = 2.0 * y - 1.0
    loss = float(np.mean(np.logaddexp(0.0, -s * margin)))
    return loss + 0.5 * l2 * sum(float(np.sum(p * p)) for p in params)


def _gd(layers, X, y, lr, epochs, l2):
    """Full-batch gradient descent on mean cross-entropy + 0.5*l2*||W||^2."""
    n = X.shape[0]
    losses = []
    for epoch in range(epochs + 1):
        acts = [X]
        h = X
        for W, b in layers[:-1]:
            h = np.tanh(h @ W + b)
            acts.append(h)
        W, b = layers[-1]
        z = (h @ W + b)[:, 0]
        loss = _bce(z, y, l2, [L[0] for L in layers])
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")
        losses.append(loss)
        if epoch == epochs:
            break
        delta = ((expit(z) - y) / n)[:, None]
        grads = []
        for i in range(len(layers) - 1, -1, -1):
            Wi = layers[i][0]
            gW = acts[i].T @ delta + l2 * Wi
            gb = delta.sum(axis=0)
            grads.append((gW, gb))
            if i:
                delta = (delta @ Wi.T) * (1.0 - acts[i] ** 2)
        grads.reverse()
        layers = [(W - lr * gW, b - lr * gb) for (W, b), (gW, gb) in zip(layers, grads)]
    return layers, losses


def fit_logistic(ds: Dataset, lr: float = 0.5, epochs: int = 500, l2: float = 0.0,
                 seed: int = 0) -> LogisticModel:
    _check_binary(ds)
    rng = derive_stream(seed, "init", 0)
    layers, losses = _gd([_init_layer(rng, ds.n_features, 1)], ds.features,
                         ds.labels.astype(float), lr, epochs, l2)
    W, b = layers[0]
    meta = {"lr": lr, "epochs": epochs, "l2": l2, "seed": int(seed), "losses": losses}
    return LogisticModel(W[:, 0], float(b[0]), meta)


def fit_mlp(ds: Dataset, hidden_sizes=(8,), lr: float = 0.5, epochs: int = 2000,
            seed: int = 0, l2: float = 0.0) -> MlpModel:
    _check_binary(ds)
    sizes = [ds.n_features, *[int(h) for h in hidden_sizes], 1]
    layers = [_init_layer(derive_stream(seed, "init", i), sizes[i], sizes[i + 1])
              for i in range(len(sizes) - 1)]
    layers, losses = _gd(layers, ds.features, ds.labels.astype(float), lr, epochs, l2)
    meta = {"hidden_sizes": list(sizes[1:-1]), "lr": lr, "epochs": epochs, "l2": l2,
            "seed": int(seed), "losses": losses}
    return MlpModel(tuple(layers), meta)


def fit_linear(ds: Dataset, l2: float = 0.0, y=None) -> LinearModel:
    """Ridge regression with an unpenalised intercept; ``y`` overrides the labels."""
    X = ds.features
    y = ds.labels.astype(float) if y is None else np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise ValidationError("target length does not match the dataset")
    xm, ym = X.mean(axis=0), y.mean()
    Xc = X - xm
    A = Xc.T @ Xc + l2 * np.eye(X.shape[1])
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise SingularSystemError("normal equations are singular; add l2 > 0")
    w = np.linalg.solve(A, Xc.T @ (y - ym))
    return LinearModel(w, float(ym - xm @ w), {"l2": l2})


def fit_gaussian_nb(ds: Dataset, var_floor: float = 1e-9) -> GaussianNBModel:
    _check_binary(ds)
    X, y = ds.features, ds.labels
    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    means = np.array([X[y == c].mean(axis=0) for c in (0, 1)])
    var = np.array([X[y == c].var(axis=0) for c in (0, 1)])
    return GaussianNBModel(priors, means, np.maximum(var, var_floor), {"var_floor": var_floor})


def predict_batch(model: Model, X, output: str = "proba") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0 and X.ndim <= 2:
        return np.zeros(0)
    X = as_2d(X)
    if X.shape[1] != model.n_features:
        raise ValidationError(f"expected {model.n_features} features, got {X.shape[1]}")
    return np.asarray(model.predict(X, output), dtype=float)


def accuracy(model: Model, X, y) -> float:
    return float(np.mean(model.predict_label(X) == np.asarray(y)))


# ---------------------------------------------------------------- persistence

def model_from_dict(d: dict) -> Model:
    kind = d.get("kind")
    meta = d.get("meta", {})
    if kind == "logistic":
        return LogisticModel(d["weights"], d["bias"], meta)
    if kind == "linear":
        return LinearModel(d["weights"], d["bias"], meta)
    if kind == "gaussian_nb":
        return GaussianNBModel(d["priors"], d["means"], d["variances"], meta)
    if kind == "mlp":
        return MlpModel(tuple((L["W"], L["b"]) for L in d["layers"]), meta)
    raise ValidationError(f"unknown model kind {kind!r}")


def save_model(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1), encoding="utf-8")


def load_model(path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


FITTERS = ("logistic", "linear", "gaussian_nb", "mlp")


def fit_model(kind: str, ds: Dataset, seed: int = 0, **params) -> Model:
    if kind == "logistic":
        return fit_logistic(ds, seed=seed, **params)
    if kind == "linear":
        return fit_linear(ds, **params)
    if kind == "gaussian_nb":
        return fit_gaussian_nb(ds, **params)
    if kind == "mlp":
        return fit_mlp(ds, seed=seed, **params)
    raise ValidationError(f"unknown model kind {kind!r}; choose from {FITTERS}")
