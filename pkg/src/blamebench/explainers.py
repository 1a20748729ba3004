"""Local attribution techniques: LIME, Kernel SHAP, exact Shapley, occlusion,
gradient x input and a random control.

Every explainer returns an :class:`~blamebench.core.Attribution` in
contribution form. ``base_value + sum(scores)`` equals the explained output
exactly for the Shapley family and approximately for LIME.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Attribution, Dataset, NumericError, RunSeed, ValidationError, derive_stream
from .models import Model
from .robustness import NullificationStrategy

KINDS = ("lime", "kernel_shap", "exact_shapley", "occlusion", "gradient_input", "random")

MAX_EXACT_FEATURES = 15
MAX_UNBUDGETED_FEATURES = 30


class DegenerateSystemError(NumericError):
    pass


@dataclass(frozen=True)
class ExplainerConfig:
    kind: str
    n_samples: int | None = None
    kernel_width: float | None = None  # LIME; default 0.75 * sqrt(M)
    ridge_l2: float = 0.0
    background: Sequence[float] | str = "dataset-mean"
    seed: int = 0
    output: str = "default"
    enumerate: str = "auto"  # kernel_shap: auto | always | never
    strategy: str = "dataset_mean"  # occlusion
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown explainer {self.kind!r}; choose from {KINDS}")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ValidationError("kernel_width must be > 0")
        if self.enumerate not in ("auto", "always", "never"):
            raise ValidationError("enumerate must be auto, always or never")
        if self.ridge_l2 < 0:
            raise ValidationError("ridge_l2 must be >= 0")

    @property
    def explainer_id(self) -> str:
        return self.name or self.kind

    @classmethod
    def from_dict(cls, d: dict) -> "ExplainerConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ValidationError(f"unknown explainer config keys: {sorted(unknown)}")
        d = dict(d)
        if isinstance(d.get("background"), list):
            d["background"] = tuple(d["background"])
        return cls(**d)


def resolve_background(background, ds: Dataset | None, m: int) -> np.ndarray:
    if isinstance(background, str):
        if background != "dataset-mean":
            raise ValidationError(f"unknown background {background!r}")
        if ds is None:
            raise ValidationError("dataset-mean background needs a dataset")
        return ds.feature_means()
    bg = np.asarray(background, dtype=float)
    if bg.shape != (m,):
        raise ValidationError(f"background has shape {bg.shape}, need ({m},)")
    return bg


def _weighted_ridge(Z, y, w, l2):
    """Weighted ridge with unpenalised intercept; returns (coef, intercept)."""
    sw = w / w.sum()
    zm = sw @ Z
    ym = sw @ y
    Zc = Z - zm
    A = (Zc * sw[:, None]).T @ Zc + l2 * np.eye(Z.shape[1])
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise DegenerateSystemError("weighted surrogate system is rank deficient")
    coef = np.linalg.solve(A, (Zc * sw[:, None]).T @ (y - ym))
    return coef, float(ym - zm @ coef)


def lime_explain(model: Model, x, ds: Dataset, cfg: ExplainerConfig,
                 rng: np.random.Generator | None = None, index: int = 0) -> Attribution:
    """Weighted linear surrogate fitted on Gaussian perturbations around x.

    Perturbations are scaled per feature by the dataset std and weighted by
    ``exp(-d^2 / width^2)`` with d the distance in std units. Scores are
    ``coef * (x - background)``; base value is the surrogate at the background.
    """
    x = np.asarray(x, dtype=float)
    m = x.size
    n = cfg.n_samples or 2000
    if n < m + 2:
        raise ValidationError(f"LIME needs n_samples >= M + 2 = {m + 2}, got {n}")
    if rng is None:
        rng = derive_stream(RunSeed(cfg.seed), "lime", index)
    width = cfg.kernel_width or 0.75 * math.sqrt(m)
    std = ds.feature_stds()
    unit = np.where(std > 0, std, 1.0)
    noise = rng.standard_normal((n, m))
    Z = x + noise * std
    d2 = np.sum(((Z - x) / unit) ** 2, axis=1)
    w = np.exp(-d2 / width**2)
    if not w.sum() > 0:
        raise DegenerateSystemError("all perturbation weights underflowed; widen the kernel")
    y = np.asarray(model.predict(Z, cfg.output), dtype=float)
    coef, intercept = _weighted_ridge(Z, y, w, cfg.ridge_l2)
    bg = resolve_background(cfg.background, ds, m)
    return Attribution(coef * (x - bg), cfg.explainer_id, intercept + float(coef @ bg),
                       coefficients=coef)


# ---------------------------------------------------------------- Shapley

def _coalition_values(model, x, background, masks, output):
    X = np.where(masks.astype(bool), x, background)
    return np.asarray(model.predict(X, output), dtype=float).reshape(-1)


def _all_masks(m: int) -> np.ndarray:
    idx = np.arange(2**m)
    return ((idx[:, None] >> np.arange(m)) & 1).astype(np.int8)


def exact_shapley(model: Model, x, background, output: str = "default",
                  explainer_id: str = "exact_shapley") -> Attribution:
    """Shapley values by enumerating all 2^M coalitions (M <= 15).

    v(S) is the model output with features outside S set to the background.
    """
    x = np.asarray(x, dtype=float)
    background = np.asarray(background, dtype=float)
    m = x.size
    if m > MAX_EXACT_FEATURES:
        raise ValidationError(f"exact Shapley supports M <= {MAX_EXACT_FEATURES}, got {m}")
    masks = _all_masks(m)
    v = _coalition_values(model, x, background, masks, output)
    sizes = masks.sum(axis=1)
    fact = [math.factorial(k) for k in range(m + 1)]
    weight = np.array([fact[s] * fact[m - s - 1] / fact[m] if s < m else 0.0
                       for s in range(m + 1)])
    idx = np.arange(2**m)
    phi = np.empty(m)
    for j in range(m):
        without = idx[masks[:, j] == 0]
        phi[j] = np.sum(weight[sizes[without]] * (v[without | (1 << j)] - v[without]))
    return Attribution(phi, explainer_id, float(v[0]))


def shapley_kernel_weight(m: int, s: int) -> float:
    return (m - 1) / (math.comb(m, s) * s * (m - s))


def _sample_coalitions(m: int, n: int, rng) -> np.ndarray:
    sizes = np.arange(1, m)
    p = (m - 1) / (sizes * (m - sizes))
    p = p / p.sum()
    half = (n + 1) // 2
    masks = np.zeros((2 * half, m), dtype=np.int8)
    for i in range(half):
        s = rng.choice(sizes, p=p)
        on = rng.choice(m, size=s, replace=False)
        masks[2 * i, on] = 1
        masks[2 * i + 1] = 1 - masks[2 * i]
    return masks[:n]


def kernel_shap(model: Model, x, background, cfg: ExplainerConfig | None = None,
                rng: np.random.Generator | None = None, index: int = 0) -> Attribution:
    """Shapley-kernel weighted least squares with the efficiency constraint.

    Features off in a coalition take the background value. With all
    coalitions enumerated the solution equals the exact Shapley values.
    """
    cfg = cfg or ExplainerConfig("kernel_shap")
    x = np.asarray(x, dtype=float)
    background = np.asarray(background, dtype=float)
    m = x.size
    if background.shape != (m,):
        raise ValidationError(f"background has shape {background.shape}, need ({m},)")
    v0, v1 = _coalition_values(model, x, background, np.array([np.zeros(m), np.ones(m)]),
                               cfg.output)
    delta = v1 - v0
    if m == 1:
        return Attribution(np.array([delta]), cfg.explainer_id, float(v0))
    n_full = 2**m - 2
    if cfg.enumerate == "always" or (cfg.enumerate == "auto" and (
            m <= 10 or (m <= MAX_EXACT_FEATURES and (cfg.n_samples or 0) >= n_full))):
        if m > MAX_EXACT_FEATURES:
            raise ValidationError(f"full enumeration supports M <= {MAX_EXACT_FEATURES}")
        masks = _all_masks(m)[1:-1]
        s = masks.sum(axis=1)
        w = np.array([shapley_kernel_weight(m, k) for k in range(1, m)])[s - 1]
    else:
        n = cfg.n_samples
        if n is None:
            if m > MAX_UNBUDGETED_FEATURES:
                raise ValidationError(
                    f"M = {m} > {MAX_UNBUDGETED_FEATURES} needs an explicit n_samples budget")
            n = 2 * m + 2048
        if n < m + 2:
            raise ValidationError(f"kernel SHAP needs n_samples >= M + 2 = {m + 2}")
        if rng is None:
            rng = derive_stream(RunSeed(cfg.seed), "kernel_shap", index)
        masks = _sample_coalitions(m, n, rng)
        w = np.ones(len(masks))
    y = _coalition_values(model, x, background, masks, cfg.output) - v0
    # eliminate the last feature: phi_last = delta - sum(phi_rest)
    A = masks[:, :-1] - masks[:, -1:]
    b = y - masks[:, -1] * delta
    sw = np.sqrt(w)
    sol, _, rank, _ = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)
    if rank < m - 1:
        raise DegenerateSystemError("sampled coalitions do not identify all features")
    phi = np.append(sol, delta - sol.sum())
    return Attribution(phi, cfg.explainer_id, float(v0))


# ---------------------------------------------------------------- others

def occlusion_importance(model: Model, x, nullifier: NullificationStrategy | None = None,
                         ds: Dataset | None = None, output: str = "default",
                         explainer_id: str = "occlusion") -> Attribution:
    """score_m = f(x) - f(x with feature m nullified)."""
    nullifier = nullifier or NullificationStrategy()
    x = np.asarray(x, dtype=float)
    base = nullifier.baseline(ds, x.size)
    X = np.tile(x, (x.size, 1))
    X[np.arange(x.size), np.arange(x.size)] = base
    fx = float(model.predict(x, output))
    return Attribution(fx - np.asarray(model.predict(X, output)), explainer_id)


def gradient_input(model: Model, x, output: str = "default",
                   explainer_id: str = "gradient_input") -> Attribution:
    if not getattr(model, "differentiable", False):
        raise ValidationError(f"{type(model).__name__} has no gradient; "
                              "gradient_input needs a differentiable model")
    x = np.asarray(x, dtype=float)
    return Attribution(model.gradient(x, output) * x, explainer_id)


def random_attribution(x, seed: int = 0, index: int = 0,
                       explainer_id: str = "random") -> Attribution:
    x = np.asarray(x, dtype=float)
    rng = derive_stream(seed, "random", index)
    return Attribution(rng.standard_normal(x.size), explainer_id)


def explain(model: Model, x, ds: Dataset | None, cfg: ExplainerConfig,
            index: int = 0) -> Attribution:
    """Dispatch on ``cfg.kind``; randomness derives from (cfg.seed, kind, index)."""
    x = np.asarray(x, dtype=float)
    eid = cfg.explainer_id
    if cfg.kind == "lime":
        if ds is None:
            raise ValidationError("LIME needs the dataset for perturbation scales")
        return lime_explain(model, x, ds, cfg, index=index)
    if cfg.kind == "kernel_shap":
        return kernel_shap(model, x, resolve_background(cfg.background, ds, x.size), cfg,
                           index=index)
    if cfg.kind == "exact_shapley":
        return exact_shapley(model, x, resolve_background(cfg.background, ds, x.size),
                             cfg.output, eid)
    if cfg.kind == "occlusion":
        strategy = NullificationStrategy(cfg.strategy) if cfg.strategy != "fixed_vector" else \
            NullificationStrategy("fixed_vector", resolve_background(cfg.background, ds, x.size))
        return occlusion_importance(model, x, strategy, ds, cfg.output, eid)
    if cfg.kind == "gradient_input":
        return gradient_input(model, x, cfg.output, eid)
    return random_attribution(x, cfg.seed, index, eid)


def make_explainer(cfg: ExplainerConfig, ds: Dataset | None):
    """Bind config and dataset; returns ``fn(model, x, index) -> Attribution``."""

    def fn(model, x, index=0):
        return explain(model, x, ds, cfg, index)

    fn.explainer_id = cfg.explainer_id
    fn.config = cfg
    return fn
