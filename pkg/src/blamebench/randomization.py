"""Model-randomization sanity checks.

A verdict is never reported without the randomized model's retained
accuracy: a randomized model that still predicts well makes an unchanged
explanation inconclusive rather than wrong.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import metrics as _metrics
from .core import Attribution, ValidationError, derive_stream
from .models import Model, accuracy

MODES = ("cascading", "independent", "full_reinit")


@dataclass(frozen=True)
class RandomizationPlan:
    """``block`` is the reinitialized block (independent) or the lowest block
    reached so far from the output side (cascading)."""

    mode: str
    block: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown randomization mode {self.mode!r}")
        if self.mode != "full_reinit" and self.block is None:
            raise ValidationError(f"{self.mode} randomization needs a block index")

    @property
    def label(self) -> str:
        return self.mode if self.block is None else f"{self.mode}:{self.block}"


def _blocks_to_reset(plan: RandomizationPlan, n_blocks: int) -> list[int]:
    if n_blocks == 0:
        raise ValidationError("model exposes no parameter blocks to randomize")
    if plan.mode == "full_reinit":
        return list(range(n_blocks))
    if not 0 <= plan.block < n_blocks:
        raise ValidationError(f"block {plan.block} out of range for {n_blocks} blocks")
    if plan.mode == "independent":
        return [plan.block]
    return list(range(plan.block, n_blocks))


def randomize_model(model: Model, plan: RandomizationPlan) -> Model:
    """Copy of ``model`` with the planned blocks redrawn from the init law."""
    blocks = model.parameter_blocks()
    for j in _blocks_to_reset(plan, len(blocks)):
        blocks[j] = model.init_block(j, derive_stream(plan.seed, "randomize", j))
    return model.with_parameter_blocks(blocks)


def cascading_plans(model: Model, seed: int = 0) -> list[RandomizationPlan]:
    """One stage per block, top (output) block first."""
    n = len(model.parameter_blocks())
    return [RandomizationPlan("cascading", b, seed) for b in range(n - 1, -1, -1)]


def independent_plans(model: Model, seed: int = 0) -> list[RandomizationPlan]:
    n = len(model.parameter_blocks())
    return [RandomizationPlan("independent", b, seed) for b in range(n)]


def make_plans(model: Model, mode: str, seeds: Sequence[int] = (0,),
               stages: int | None = None) -> list[RandomizationPlan]:
    plans = []
    for s in seeds:
        if mode == "full_reinit":
            plans.append(RandomizationPlan("full_reinit", None, s))
        elif mode == "cascading":
            plans.extend(cascading_plans(model, s)[:stages])
        elif mode == "independent":
            plans.extend(independent_plans(model, s)[:stages])
        else:
            raise ValidationError(f"unknown randomization mode {mode!r}")
    return plans


@dataclass(frozen=True)
class SanityThresholds:
    similarity: float = 0.8
    # retained accuracy within this much of the original counts as "still accurate"
    accuracy_margin: float = 0.1


@dataclass
class StageResult:
    stage: int
    plan: RandomizationPlan
    similarities: np.ndarray
    retained_accuracy: float
    verdict: str

    @property
    def mean_similarity(self) -> float:
        s = self.similarities[np.isfinite(self.similarities)]
        return float(s.mean()) if s.size else float("nan")


@dataclass
class SanityReport:
    explainer: str
    metric: str
    original_accuracy: float
    stages: list[StageResult] = field(default_factory=list)

    @property
    def verdict(self) -> str:
        verdicts = {s.verdict for s in self.stages}
        for v in ("fail", "inconclusive"):
            if v in verdicts:
                return v
        return "pass"

    def rows(self) -> list[dict]:
        out = []
        for st in self.stages:
            for i, sim in enumerate(st.similarities):
                out.append({"stage": st.stage, "plan": st.plan.label, "seed": st.plan.seed,
                            "instance": i, "similarity": float(sim),
                            "retained_accuracy": st.retained_accuracy, "verdict": st.verdict})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["stage", "plan", "seed", "instance", "similarity", "retained_accuracy",
                "verdict"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            r = dict(r)
            r["similarity"] = repr(r["similarity"])
            r["retained_accuracy"] = repr(r["retained_accuracy"])
            w.writerow(r)
        return buf.getvalue()


def stage_verdict(mean_similarity: float, retained: float, original: float,
                  thresholds: SanityThresholds) -> str:
    if not np.isfinite(mean_similarity) or abs(mean_similarity) <= thresholds.similarity:
        return "pass"
    if retained >= original - thresholds.accuracy_margin:
        return "inconclusive"
    return "fail"


def sanity_check(model: Model, explainer: Callable[[Model, np.ndarray, int], Attribution], X,
                 y, plans: Sequence[RandomizationPlan], metric: str,
                 thresholds: SanityThresholds = SanityThresholds()) -> SanityReport:
    """Compare explanations of ``model`` with those of each randomized variant.

    For every plan (stage) and instance, ``metric(original, randomized)`` is
    recorded together with the randomized model's accuracy on (X, y).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("sanity check needs a nonempty 2-D sample")
    if not plans:
        raise ValidationError("randomization plan sequence is empty")
    if metric not in _metrics.METRICS:
        raise ValidationError(f"unknown metric {metric!r}")
    original = [explainer(model, x, i).scores for i, x in enumerate(X)]
    base_acc = accuracy(model, X, y)
    report = SanityReport(getattr(explainer, "explainer_id", "explainer"), metric, base_acc)
    for s, plan in enumerate(plans):
        randomized = randomize_model(model, plan)
        sims = np.empty(X.shape[0])
        for i, x in enumerate(X):
            try:
                sims[i] = _metrics.compute(metric, original[i], explainer(randomized, x, i).scores)
            except _metrics.UndefinedMetricError:
                sims[i] = np.nan
        acc = accuracy(randomized, X, y)
        st = StageResult(s, plan, sims, acc, "")
        st.verdict = stage_verdict(st.mean_similarity, acc, base_acc, thresholds)
        report.stages.append(st)
    return report
