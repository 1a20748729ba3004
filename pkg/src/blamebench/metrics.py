"""Agreement metrics between an attribution and a reference vector."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import ReportRow, ValidationError, stable_index_order

EPS = float(np.finfo(float).eps)

METRICS = ("euclidean_similarity", "cosine", "spearman", "topk_f1", "topk_signed")


class UndefinedMetricError(ValidationError):
    pass


@dataclass(frozen=True)
class SimilarityResult:
    metric: str
    value: float
    k: int | None = None


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"vectors must be 1-D of equal length, got {a.shape} and {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("vectors must be finite")
    return a, b


def euclidean_distance(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.linalg.norm(a - b))


def euclidean_similarity(a, b) -> float:
    """1 / (machine epsilon + Euclidean distance)."""
    return 1.0 / (EPS + euclidean_distance(a, b))


def cosine_similarity(a, b) -> float:
    a, b = _pair(a, b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedMetricError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def spearman_correlation(a, b) -> float:
    a, b = _pair(a, b)
    if a.size < 2:
        raise ValidationError("Spearman correlation needs at least two entries")
    ra, rb = rankdata(a) - (a.size + 1) / 2, rankdata(b) - (a.size + 1) / 2
    den = np.sqrt((ra @ ra) * (rb @ rb))
    if den == 0:
        raise UndefinedMetricError("Spearman correlation is undefined for constant ranks")
    return float(np.clip(ra @ rb / den, -1.0, 1.0))


def topk_agreement(a, b, k: int, mode: str = "f1") -> float:
    """F1 between the top-k |a| and top-k |b| index sets.

    ``signed`` mode only counts shared features whose signs also agree.
    """
    a, b = _pair(a, b)
    if not 1 <= k <= a.size:
        raise ValidationError(f"k must be in [1, {a.size}], got {k}")
    ta = stable_index_order(np.abs(a), True)[:k]
    tb = stable_index_order(np.abs(b), True)[:k]
    shared = np.intersect1d(ta, tb)
    if mode == "signed":
        shared = shared[np.sign(a[shared]) == np.sign(b[shared])]
    elif mode != "f1":
        raise ValidationError(f"unknown top-k mode {mode!r}")
    # both sets have size k, so F1 reduces to |shared| / k
    return shared.size / k


def compute(metric: str, a, b, k: int | None = None) -> float:
    if metric == "euclidean_similarity":
        return euclidean_similarity(a, b)
    if metric == "cosine":
        return cosine_similarity(a, b)
    if metric == "spearman":
        return spearman_correlation(a, b)
    if metric in ("topk_f1", "topk_signed"):
        kk = k if k is not None else max(1, int(np.ceil(len(a) / 4)))
        return topk_agreement(a, b, kk, "signed" if metric == "topk_signed" else "f1")
    raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")


def evaluate_against_gt(attributions: Mapping[int, object], gts: Mapping[int, object],
                        metrics: Sequence[str], k: int | None = None, dataset: str = "",
                        model: str = "", explainer: str = "",
                        gt_name: str | None = None) -> list[ReportRow]:
    """One row per (instance, metric) followed by mean and median rows per metric.

    Attributions and ground truths are keyed by instance index; values may be
    Attribution/GroundTruthScores objects or plain vectors.
    """
    if not metrics:
        raise ValidationError("metric list is empty")
    if not attributions:
        raise ValidationError("no attributions to evaluate")
    if set(attributions) != set(gts):
        missing = sorted(set(attributions) ^ set(gts))
        raise ValidationError(f"attributions and ground truths are misaligned at {missing[:5]}")
    rows = []
    for metric in metrics:
        vals = []
        for i in sorted(attributions):
            att, gt = attributions[i], gts[i]
            prov = gt_name or getattr(gt, "provenance", "gt")
            measure = f"{prov}/{metric}"
            a = getattr(att, "scores", att)
            g = getattr(gt, "scores", gt)
            try:
                v = compute(metric, a, g, k)
                flag = ""
            except UndefinedMetricError:
                v, flag = float("nan"), "undefined"
            vals.append(v)
            rows.append(ReportRow(dataset, model, explainer or getattr(att, "explainer_id", ""),
                                  str(i), measure, v, flag))
        arr = np.array(vals)
        for name, fn in (("mean", np.nanmean), ("median", np.nanmedian)):
            value = float(fn(arr)) if np.any(np.isfinite(arr)) else float("nan")
            rows.append(ReportRow(dataset, model, rows[-1].explainer, name, measure, value,
                                  "aggregate"))
    return rows
