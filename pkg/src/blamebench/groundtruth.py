"""Reference importance scores from interpretable models and from the
polynomial data law evaluated at the model's decision boundary."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, NumericError, ValidationError
from .models import GaussianNBModel, LinearModel, LogisticModel, Model
from .synthdata import PolynomialSpec

PROVENANCES = ("mias_logistic", "mias_linear", "mias_gnb", "model_weights", "generator",
               "seneca_rc")


class NoBoundaryError(NumericError):
    """No decision boundary could be bracketed near the instance."""


@dataclass(frozen=True, eq=False)
class GroundTruthScores:
    scores: np.ndarray
    provenance: str
    intercept: float | None = None
    target: int = 1
    boundary_point: np.ndarray | None = None

    def __post_init__(self):
        s = np.array(self.scores, dtype=float)
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise ValidationError("ground-truth scores must be finite and 1-D")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    def recovered_total(self) -> float:
        """intercept + sum of scores; the model output for additive provenances."""
        return (self.intercept or 0.0) + float(self.scores.sum())

    def normalized(self) -> "GroundTruthScores":
        """Divide by the largest magnitude (L-infinity normalisation)."""
        top = float(np.max(np.abs(self.scores)))
        s = self.scores / top if top > 0 else self.scores
        return GroundTruthScores(s, self.provenance, self.intercept, self.target,
                                 self.boundary_point)


def mias_logistic(model: LogisticModel, x) -> GroundTruthScores:
    """Additive log-odds terms w_m * x_m with the bias as intercept."""
    x = np.asarray(x, dtype=float)
    return GroundTruthScores(model.weights * x, "mias_logistic", model.bias)


def mias_linear(model: LinearModel, x) -> GroundTruthScores:
    x = np.asarray(x, dtype=float)
    return GroundTruthScores(model.weights * x, "mias_linear", model.bias)


def mias_gnb(model: GaussianNBModel, x) -> GroundTruthScores:
    """Per-feature class-conditional log density ratios, prior log-ratio as intercept."""
    return GroundTruthScores(model.feature_log_ratios(x)[0], "mias_gnb",
                             model.prior_log_ratio())


def mias(model: Model, x) -> GroundTruthScores:
    if isinstance(model, LogisticModel):
        return mias_logistic(model, x)
    if isinstance(model, LinearModel):
        return mias_linear(model, x)
    if isinstance(model, GaussianNBModel):
        return mias_gnb(model, x)
    raise ValidationError(f"no additive decomposition for {type(model).__name__}; "
                          "MIAS is defined only for logistic, linear and Gaussian NB models")


def weights_ground_truth(model: LogisticModel, x=None) -> GroundTruthScores:
    """The fitted weight vector, identical for every instance."""
    if not isinstance(model, (LogisticModel, LinearModel)):
        raise ValidationError("weight ground truth needs a logistic or linear model")
    return GroundTruthScores(model.weights.copy(), "model_weights", model.bias)


def generator_ground_truth(ds: Dataset, i: int) -> GroundTruthScores:
    if ds.ground_truth is None:
        raise ValidationError("dataset carries no generator ground truth")
    return GroundTruthScores(ds.ground_truth[i], "generator")


# ---------------------------------------------------------------- Seneca-RC

@dataclass(frozen=True)
class BoundarySearchConfig:
    bisection_steps: int = 60
    tolerance: float = 1e-6  # on |p - 0.5|
    refine_iterations: int = 50
    newton_steps: int = 50


def _bisect(model, a, b, side_a, steps):
    """Bisection on the segment [a, b]; ``side_a`` is the class predicted at a."""
    for _ in range(steps):
        mid = 0.5 * (a + b)
        if (model.predict_proba(mid) > 0.5) == side_a:
            a = mid
        else:
            b = mid
    return a, b


def _newton_to_boundary(model, p, normal, steps, tol):
    """Move p along ``normal`` until the margin vanishes."""
    t = 0.0
    for _ in range(steps):
        q = p + t * normal
        z = model.predict_margin(q)
        if abs(model.predict_proba(q) - 0.5) <= tol and abs(z) < 1e-12:
            break
        slope = float(model.margin_gradient(q) @ normal)
        if slope == 0.0:
            break
        t -= z / slope
    return p + t * normal


def find_boundary_point(model: Model, x, ds: Dataset,
                        cfg: BoundarySearchConfig = BoundarySearchConfig()) -> np.ndarray:
    """Closest point to x with predicted probability 0.5.

    A boundary point is first bracketed by bisection on the segment to the
    nearest training instance of the opposite predicted class. For
    differentiable models it is then refined by alternating a projection of
    x onto the boundary's tangent plane with a Newton return to the boundary,
    which is exact in one step for a linear boundary. Refinement steps that
    move away from x are rejected.
    """
    x = np.asarray(x, dtype=float)
    side = model.predict_proba(x) > 0.5
    pred = model.predict_label(ds.features).astype(bool)
    others = ds.features[pred != side]
    if others.shape[0] == 0:
        raise NoBoundaryError("no training instance of the opposite predicted class")
    target = others[np.argmin(np.sum((others - x) ** 2, axis=1))]
    a, b = _bisect(model, x, target, side, cfg.bisection_steps)
    point = a if abs(model.predict_proba(a) - 0.5) <= abs(model.predict_proba(b) - 0.5) else b
    if getattr(model, "differentiable", False):
        for _ in range(cfg.refine_iterations):
            g = model.margin_gradient(point)
            gn = float(np.linalg.norm(g))
            if gn == 0.0:
                break
            n = g / gn
            tangent = x - float((x - point) @ n) * n
            new = _newton_to_boundary(model, tangent, n, cfg.newton_steps, cfg.tolerance)
            if abs(model.predict_proba(new) - 0.5) > cfg.tolerance:
                break
            # never trade a nearer boundary point for a farther one
            if np.linalg.norm(new - x) > np.linalg.norm(point - x):
                break
            moved = float(np.linalg.norm(new - point))
            point = new
            if moved < 1e-13:
                break
    if abs(model.predict_proba(point) - 0.5) > cfg.tolerance:
        raise NoBoundaryError(
            f"boundary search ended at |p - 0.5| = {abs(model.predict_proba(point) - 0.5):.3g}")
    return point


def seneca_ground_truth(model: Model, spec: PolynomialSpec, x, ds: Dataset,
                        cfg: BoundarySearchConfig = BoundarySearchConfig(),
                        normalize: bool = False) -> GroundTruthScores:
    """Gradient of the generating polynomial at the nearest boundary point."""
    x = np.asarray(x, dtype=float)
    star = find_boundary_point(model, x, ds, cfg)
    gt = GroundTruthScores(spec.gradient(star, x.size)[: x.size], "seneca_rc",
                           boundary_point=star)
    return gt.normalized() if normalize else gt
