"""Config-driven benchmark runner, report writer and the canned two-feature
comparison experiment."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from . import explainers as ex
from . import groundtruth as gtm
from . import metrics as mt
from . import models as md
from . import randomization as rz
from . import robustness as rb
from .core import (BlameBenchError, ConfigError, Dataset, ReportRow, RunSeed, format_float,
                   load_dataset, write_text_atomic)
from .synthdata import GENERATORS, LINEAR_2X0_MINUS_X1, PolynomialSpec, generate

SCHEMA_VERSION = 1
GT_METHODS = ("mias", "weights", "seneca", "generator")
MEASURES = ("deletion", "preservation", "continuity")
REPORT_COLUMNS = ("dataset", "model", "explainer", "instance", "measure", "value", "flags")


class StageError(BlameBenchError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode("utf-8")).hexdigest()


def _check_keys(d: dict, allowed: Iterable[str], where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class BenchmarkConfig:
    raw: dict
    seed: int
    dataset: dict
    model: dict
    explainers: list[ex.ExplainerConfig]
    ground_truth: list[str] = field(default_factory=list)
    metrics: list[str] = field(default_factory=list)
    k: int | None = None
    robustness: list[dict] = field(default_factory=list)
    randomization: list[dict] = field(default_factory=list)
    n_explain: int | None = None
    workers: int = 1
    output_dir: str = "blamebench-out"
    name: str = "benchmark"

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchmarkConfig":
        """Validate a config document; every problem surfaces before any compute."""
        _check_keys(raw, {"version", "name", "seed", "dataset", "model", "explainers",
                          "evaluation", "n_explain", "workers", "output_dir"}, "config")
        if raw.get("version") != SCHEMA_VERSION:
            raise ConfigError(f"config version must be {SCHEMA_VERSION}")
        if not isinstance(raw.get("seed"), int) or raw["seed"] < 0:
            raise ConfigError("config needs a non-negative integer seed")
        seed = raw["seed"]
        RunSeed(seed)

        dsc = raw.get("dataset")
        _check_keys(dsc, {"generator", "n", "noise", "n_redundant", "spec", "path", "schema"},
                    "dataset")
        if ("generator" in dsc) == ("path" in dsc):
            raise ConfigError("dataset needs exactly one of 'generator' or 'path'")
        if "generator" in dsc:
            if dsc["generator"] not in GENERATORS:
                raise ConfigError(f"unknown generator {dsc['generator']!r}")
            if int(dsc.get("n", 0)) < 1:
                raise ConfigError("dataset.n must be >= 1")

        mc = raw.get("model")
        _check_keys(mc, {"kind", "params"}, "model")
        if mc.get("kind") not in md.FITTERS:
            raise ConfigError(f"unknown model kind {mc.get('kind')!r}")

        exs = raw.get("explainers")
        if not isinstance(exs, list) or not exs:
            raise ConfigError("explainers must be a nonempty list")
        explainers = []
        for e in exs:
            if not isinstance(e, dict):
                raise ConfigError("each explainer entry must be an object")
            e = dict(e)
            e.setdefault("seed", seed)
            try:
                explainers.append(ex.ExplainerConfig.from_dict(e))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        ids = [e.explainer_id for e in explainers]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"explainer ids must be unique, got {ids}")

        ev = raw.get("evaluation", {})
        _check_keys(ev, {"ground_truth", "metrics", "k", "robustness", "randomization"},
                    "evaluation")
        gts = list(ev.get("ground_truth", []))
        for g in gts:
            if g not in GT_METHODS:
                raise ConfigError(f"unknown ground-truth method {g!r}")
        mets = list(ev.get("metrics", []))
        for m_ in mets:
            if m_ not in mt.METRICS:
                raise ConfigError(f"unknown metric {m_!r}")
        if gts and not mets:
            raise ConfigError("ground-truth evaluation needs at least one metric")
        rob = list(ev.get("robustness", []))
        for r in rob:
            _check_keys(r, {"measure", "k", "strategy", "epsilon", "n_samples"}, "robustness")
            if r.get("measure") not in MEASURES:
                raise ConfigError(f"unknown robustness measure {r.get('measure')!r}")
            if r.get("strategy", "dataset_mean") not in ("dataset_mean", "zero"):
                raise ConfigError(f"unsupported strategy {r.get('strategy')!r}")
        rnd = list(ev.get("randomization", []))
        for r in rnd:
            _check_keys(r, {"mode", "metric", "seeds", "stages", "similarity_threshold",
                            "accuracy_margin"}, "randomization")
            if r.get("mode") not in rz.MODES:
                raise ConfigError(f"unknown randomization mode {r.get('mode')!r}")
            if r.get("metric") not in mt.METRICS:
                raise ConfigError("randomization needs a metric")
        return cls(raw, seed, dsc, mc, explainers, gts, mets, ev.get("k"), rob, rnd,
                   raw.get("n_explain"), int(raw.get("workers", 1)),
                   raw.get("output_dir", "blamebench-out"), raw.get("name", "benchmark"))

    @classmethod
    def load(cls, path) -> "BenchmarkConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


@dataclass
class EvaluationReport:
    rows: list[ReportRow]
    metadata: dict

    def validate(self):
        prefixes = set(gtm.PROVENANCES) | set(MEASURES) | {"sanity"}
        for r in self.rows:
            if r.measure.split("/")[0] not in prefixes:
                raise ValueError(f"row measure {r.measure!r} is not a registered evaluator")

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def write(self, out_dir, wall_time: float | None = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_text_atomic(out / "report.csv", self.to_csv())
        write_text_atomic(out / "report.meta.json",
                          json.dumps(self.metadata, indent=1, sort_keys=True) + "\n")
        if wall_time is not None:
            write_text_atomic(out / "timing.json",
                              json.dumps({"wall_time_s": wall_time}) + "\n")
        return out / "report.csv"


def rows_to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([r.dataset, r.model, r.explainer, r.instance, r.measure,
                    format_float(r.value), r.flags])
    return buf.getvalue()


def read_report(path) -> list[ReportRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rdr = csv.DictReader(fh)
        return [ReportRow(r["dataset"], r["model"], r["explainer"], r["instance"], r["measure"],
                          float(r["value"]), r.get("flags", "")) for r in rdr]


# ---------------------------------------------------------------- pipeline

def _stage(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except StageError:
                raise
            except (BlameBenchError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                raise StageError(name, exc) from exc
        return inner
    return wrap


@_stage("generate")
def _build_dataset(cfg: BenchmarkConfig) -> tuple[Dataset, PolynomialSpec | None]:
    d = cfg.dataset
    if "path" in d:
        return load_dataset(d["path"], d.get("schema")), None
    ds = generate(d["generator"], int(d["n"]), cfg.seed, float(d.get("noise", 0.0)),
                  d.get("spec"), int(d.get("n_redundant", 0)))
    spec = None
    if d["generator"] == "seneca_rc":
        spec = PolynomialSpec.from_dict(d["spec"]) if d.get("spec") else LINEAR_2X0_MINUS_X1
    return ds, spec


@_stage("train")
def _train(cfg: BenchmarkConfig, ds: Dataset) -> md.Model:
    return md.fit_model(cfg.model["kind"], ds, seed=cfg.seed, **cfg.model.get("params", {}))


def _pmap(fn, items, workers):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@_stage("explain")
def _explain_all(cfg, ds, model, idx):
    out = {}
    for ecfg in cfg.explainers:
        fn = ex.make_explainer(ecfg, ds)
        atts = _pmap(lambda i: fn(model, ds.features[i], i), idx, cfg.workers)
        out[ecfg.explainer_id] = dict(zip(idx, atts))
    return out


def _ground_truth(method, model, ds, spec, i):
    x = ds.features[i]
    if method == "mias":
        return gtm.mias(model, x)
    if method == "weights":
        return gtm.weights_ground_truth(model)
    if method == "generator":
        return gtm.generator_ground_truth(ds, i)
    if spec is None:
        raise ConfigError("seneca ground truth needs a seneca_rc dataset")
    return gtm.seneca_ground_truth(model, spec, x, ds)


@_stage("evaluate")
def _evaluate(cfg, ds, spec, model, idx, atts, tags) -> list[ReportRow]:
    dname, mname = tags
    rows: list[ReportRow] = []
    for method in cfg.ground_truth:
        gts = dict(zip(idx, _pmap(lambda i: _ground_truth(method, model, ds, spec, i), idx,
                                  cfg.workers)))
        for eid, a in atts.items():
            rows += mt.evaluate_against_gt(a, gts, cfg.metrics, cfg.k, dname, mname, eid)
    for r in cfg.robustness:
        rows += _robustness_rows(cfg, r, ds, model, idx, atts, tags)
    for r in cfg.randomization:
        rows += _sanity_rows(cfg, r, ds, model, idx, tags)
    return rows


def _robustness_rows(cfg, r, ds, model, idx, atts, tags):
    dname, mname = tags
    measure = r["measure"]
    strategy = rb.NullificationStrategy(r.get("strategy", "dataset_mean"))
    k = int(r.get("k") or rb.default_k(ds.n_features))
    rows = []
    for ecfg in cfg.explainers:
        eid = ecfg.explainer_id
        if measure == "continuity":
            ccfg = rb.ContinuityConfig(float(r.get("epsilon") or
                                             rb.ContinuityConfig.default_for(ds).epsilon),
                                       int(r.get("n_samples", 50)))
            fn = ex.make_explainer(ecfg, ds)
            label = f"continuity/eps={ccfg.epsilon:g}"

            def one(i):
                return rb.continuity(model, fn, ds.features[i], ccfg, cfg.seed, i), ""
        else:
            fn_measure = (rb.importance_by_deletion if measure == "deletion"
                          else rb.importance_by_preservation)
            label = f"{measure}/k={k}/{strategy.kind}"

            def one(i):
                try:
                    return fn_measure(model, ds.features[i], atts[eid][i], k, strategy, ds), ""
                except rb.DegenerateNullificationError:
                    return float("nan"), "degenerate-nullification"
        for i, (v, flag) in zip(idx, _pmap(one, idx, cfg.workers)):
            rows.append(ReportRow(dname, mname, eid, str(i), label, v, flag))
    return rows


def _sanity_rows(cfg, r, ds, model, idx, tags):
    dname, mname = tags
    plans = rz.make_plans(model, r["mode"], r.get("seeds", [cfg.seed]), r.get("stages"))
    th = rz.SanityThresholds(float(r.get("similarity_threshold", 0.8)),
                             float(r.get("accuracy_margin", 0.1)))
    X, y = ds.features[idx], ds.labels[idx]
    rows = []
    for ecfg in cfg.explainers:
        base = ex.make_explainer(ecfg, ds)
        # sanity_check enumerates the sample from 0; keep the dataset row index
        fn = lambda m_, x, j, base=base: base(m_, x, idx[j])  # noqa: E731
        fn.explainer_id = ecfg.explainer_id
        rep = rz.sanity_check(model, fn, X, y, plans, r["metric"], th)
        for st in rep.stages:
            flags = (f"retained_accuracy={format_float(st.retained_accuracy)};"
                     f"verdict={st.verdict}")
            for j, sim in enumerate(st.similarities):
                rows.append(ReportRow(dname, mname, ecfg.explainer_id, str(idx[j]),
                                      f"sanity/{st.plan.label}/seed={st.plan.seed}/{r['metric']}",
                                      float(sim), flags))
    return rows


def run_benchmark(cfg: BenchmarkConfig | dict, out_dir=None, write: bool = True
                  ) -> EvaluationReport:
    """generate -> train -> explain -> evaluate, then write the report atomically."""
    if isinstance(cfg, dict):
        cfg = BenchmarkConfig.from_dict(cfg)
    t0 = time.perf_counter()
    ds, spec = _build_dataset(cfg)
    model = _train(cfg, ds)
    n = ds.n_instances if cfg.n_explain is None else min(int(cfg.n_explain), ds.n_instances)
    idx = list(range(n))
    atts = _explain_all(cfg, ds, model, idx)
    dname = cfg.dataset.get("generator") or Path(cfg.dataset["path"]).stem
    rows = _evaluate(cfg, ds, spec, model, idx, atts, (dname, cfg.model["kind"]))
    meta = {"config_hash": cfg.hash, "seed": cfg.seed, "tool_version": __version__,
            "schema_version": SCHEMA_VERSION, "name": cfg.name, "n_rows": len(rows),
            "config": cfg.raw}
    report = EvaluationReport(rows, meta)
    report.validate()
    if write:
        report.write(out_dir or cfg.output_dir, time.perf_counter() - t0)
    return report


# ---------------------------------------------------------------- aggregation

def _instance_rows(rows):
    return [r for r in rows if r.flags != "aggregate" and np.isfinite(r.value)]


def summarize(rows: Sequence[ReportRow], group_by: Sequence[str] = ("explainer", "measure")
              ) -> list[dict]:
    """mean / median / std of instance rows per group, sorted by group key."""
    if not rows:
        raise ValueError("cannot summarize an empty report")
    for key in group_by:
        if key not in REPORT_COLUMNS:
            raise ValueError(f"unknown group-by key {key!r}")
    groups: dict[tuple, list[float]] = {}
    for r in _instance_rows(rows):
        groups.setdefault(tuple(getattr(r, k) for k in group_by), []).append(r.value)
    out = []
    for key in sorted(groups):
        v = np.array(groups[key])
        out.append({**dict(zip(group_by, key)), "n": int(v.size), "mean": float(v.mean()),
                    "median": float(np.median(v)), "std": float(v.std())})
    return out


def compare_explainers(rows: Sequence[ReportRow], metric: str, provenance: str) -> list[dict]:
    """Rank explainers by mean metric vs one ground truth; ties by median, then name."""
    measure = f"{provenance}/{metric}"
    sel = [r for r in _instance_rows(rows) if r.measure == measure]
    if not sel:
        raise ValueError(f"report has no rows for ground truth {provenance!r} / {metric!r}")
    table = summarize(sel, ("explainer",))
    if len(table) < 2:
        raise ValueError("need at least two explainers to compare")
    table.sort(key=lambda t: (-t["mean"], -t["median"], t["explainer"]))
    for rank, t in enumerate(table, start=1):
        t["rank"] = rank
    return table


def table_to_csv(table: Sequence[dict]) -> str:
    if not table:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(table[0]), lineterminator="\n")
    w.writeheader()
    for t in table:
        w.writerow({k: format_float(v) if isinstance(v, float) else v for k, v in t.items()})
    return buf.getvalue()


# ---------------------------------------------------------------- figure 4

FIGURE4_METHODS = ("seneca_rc", "openxai", "robustness", "mias")


@dataclass
class Figure4Result:
    dataset: Dataset
    model: md.LogisticModel
    vectors: dict[str, np.ndarray]  # method -> (N, 2)

    def rows(self) -> list[dict]:
        X, y = self.dataset.features, self.dataset.labels
        out = []
        for method in FIGURE4_METHODS:
            V = self.vectors[method]
            for i in range(X.shape[0]):
                out.append({"instance": i, "x0": X[i, 0], "x1": X[i, 1], "label": int(y[i]),
                            "method": method, "v0": V[i, 0], "v1": V[i, 1]})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["instance", "x0", "x1", "label", "method", "v0", "v1"])
        for r in self.rows():
            w.writerow([r["instance"], format_float(r["x0"]), format_float(r["x1"]), r["label"],
                        r["method"], format_float(r["v0"]), format_float(r["v1"])])
        return buf.getvalue()


def run_figure4_experiment(seed: int = 0, n: int = 1000, noise: float = 0.3,
                           normalize_seneca: bool = False, lr: float = 0.5,
                           epochs: int = 500) -> Figure4Result:
    """Y = 2*x0 - x1 data, a logistic fit, and per-instance reference vectors
    from four evaluation families (quiver-ready)."""
    from .synthdata import generate_seneca_rc

    ds = generate_seneca_rc(LINEAR_2X0_MINUS_X1, n, noise, 0, seed)
    model = md.fit_logistic(ds, lr=lr, epochs=epochs, seed=seed)
    strategy = rb.NullificationStrategy("dataset_mean")
    X = ds.features
    vec = {
        "seneca_rc": np.array([gtm.seneca_ground_truth(model, LINEAR_2X0_MINUS_X1, x, ds,
                                                       normalize=normalize_seneca).scores
                               for x in X]),
        "openxai": np.tile(gtm.weights_ground_truth(model).scores, (X.shape[0], 1)),
        "robustness": np.array([rb.per_feature_robustness(model, x, strategy, ds) for x in X]),
        "mias": np.array([gtm.mias_logistic(model, x).scores for x in X]),
    }
    return Figure4Result(ds, model, vec)
