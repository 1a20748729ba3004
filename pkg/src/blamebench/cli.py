"""Command line entry point: ``blamebench <subcommand> ...``.

Exit codes: 0 success, 2 config validation, 3 data error, 4 numeric
failure, 5 sanity-check "fail" verdict under ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import explainers as ex
from . import groundtruth as gtm
from . import harness as hs
from . import metrics as mt
from . import models as md
from . import randomization as rz
from . import robustness as rb
from .core import (ConfigError, DataError, NumericError, ReportRow, format_float, load_dataset,
                   save_dataset, write_text_atomic)
from .synthdata import GENERATORS, LINEAR_2X0_MINUS_X1, PolynomialSpec, generate

log = logging.getLogger("blamebench")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_SANITY = 0, 2, 3, 4, 5


def _read_json(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read JSON {path}: {exc}") from None


def _explainer_config(args) -> ex.ExplainerConfig:
    d = _read_json(getattr(args, "config", None))
    d.setdefault("kind", args.explainer)
    d.setdefault("seed", args.seed)
    try:
        return ex.ExplainerConfig.from_dict(d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _instances(ds, n):
    return list(range(ds.n_instances if n is None else min(n, ds.n_instances)))


def _emit(text: str, out):
    if out:
        write_text_atomic(out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- attribution / gt CSV

def attributions_to_csv(atts: dict, names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "explainer", "base_value", *[f"phi_{n}" for n in names]])
    for i, a in atts.items():
        base = "" if a.base_value is None else format_float(a.base_value)
        w.writerow([i, a.explainer_id, base, *[format_float(v) for v in a.scores]])
    return buf.getvalue()


def read_attributions(path) -> dict:
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rdr = csv.reader(fh)
        header = next(rdr)
        if header[:3] != ["instance", "explainer", "base_value"]:
            raise DataError(f"{path} is not an attribution CSV")
        for row in rdr:
            base = float(row[2]) if row[2] else None
            out[int(row[0])] = ex.Attribution(np.array([float(v) for v in row[3:]]), row[1],
                                              base)
    return out


def ground_truth_to_csv(gts: dict, names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "lambda0", *[f"lambda_{n}" for n in names], "provenance"])
    for i, g in gts.items():
        lam0 = "" if g.intercept is None else format_float(g.intercept)
        w.writerow([i, lam0, *[format_float(v) for v in g.scores], g.provenance])
    return buf.getvalue()


def read_ground_truth(path) -> dict:
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rdr = csv.reader(fh)
        header = next(rdr)
        if header[:2] != ["instance", "lambda0"]:
            raise DataError(f"{path} is not a ground-truth CSV")
        for row in rdr:
            out[int(row[0])] = gtm.GroundTruthScores(
                np.array([float(v) for v in row[2:-1]]), row[-1],
                float(row[1]) if row[1] else None)
    return out


# ---------------------------------------------------------------- subcommands

def cmd_generate(args):
    spec = _read_json(args.spec) if args.spec else None
    ds = generate(args.generator, args.n, args.seed, args.noise, spec, args.n_redundant)
    save_dataset(ds, args.out)
    log.info("wrote %d x %d dataset to %s", ds.n_instances, ds.n_features, args.out)


def cmd_train(args):
    ds = load_dataset(args.data)
    params = _read_json(args.params)
    model = md.fit_model(args.model, ds, seed=args.seed, **params)
    md.save_model(model, args.out)
    log.info("trained %s, accuracy %.4f", args.model, md.accuracy(model, ds.features, ds.labels))


def cmd_explain(args):
    ds = load_dataset(args.data)
    model = md.load_model(args.model)
    cfg = _explainer_config(args)
    atts = {i: ex.explain(model, ds.features[i], ds, cfg, i)
            for i in _instances(ds, args.instances)}
    _emit(attributions_to_csv(atts, ds.feature_names), args.out)


def cmd_groundtruth(args):
    ds = load_dataset(args.data)
    model = md.load_model(args.model) if args.model else None
    spec = PolynomialSpec.from_dict(_read_json(args.spec)) if args.spec else LINEAR_2X0_MINUS_X1
    gts = {}
    for i in _instances(ds, args.instances):
        x = ds.features[i]
        if args.method == "generator":
            g = gtm.generator_ground_truth(ds, i)
        elif model is None:
            raise ConfigError(f"--method {args.method} needs --model")
        elif args.method == "mias":
            g = gtm.mias(model, x)
        elif args.method == "weights":
            g = gtm.weights_ground_truth(model)
        else:
            g = gtm.seneca_ground_truth(model, spec, x, ds)
        gts[i] = g.normalized() if args.normalize else g
    _emit(ground_truth_to_csv(gts, ds.feature_names), args.out)


def cmd_score(args):
    atts = read_attributions(args.attributions)
    gts = read_ground_truth(args.gt)
    rows = mt.evaluate_against_gt(atts, gts, args.metrics.split(","), args.k)
    if args.json:
        _emit(json.dumps([r.__dict__ for r in rows], indent=1) + "\n", args.out)
    else:
        _emit(hs.rows_to_csv(rows), args.out)


def cmd_robustness(args):
    ds = load_dataset(args.data)
    model = md.load_model(args.model)
    cfg = _explainer_config(args)
    fn = ex.make_explainer(cfg, ds)
    strategy = rb.NullificationStrategy(args.strategy)
    k = args.k or rb.default_k(ds.n_features)
    rows = []
    for i in _instances(ds, args.instances):
        x = ds.features[i]
        flag = ""
        if args.measure == "continuity":
            ccfg = rb.ContinuityConfig(args.epsilon or rb.ContinuityConfig.default_for(ds).epsilon,
                                       args.n_samples)
            v = rb.continuity(model, fn, x, ccfg, args.seed, i)
            label = f"continuity/eps={ccfg.epsilon:g}"
        else:
            measure = (rb.importance_by_deletion if args.measure == "deletion"
                       else rb.importance_by_preservation)
            label = f"{args.measure}/k={k}/{strategy.kind}"
            try:
                v = measure(model, x, fn(model, x, i), k, strategy, ds)
            except rb.DegenerateNullificationError:
                v, flag = float("nan"), "degenerate-nullification"
        rows.append(ReportRow(Path(args.data).stem, model.kind, cfg.explainer_id, str(i), label,
                              v, flag))
    _emit(hs.rows_to_csv(rows), args.out)


def cmd_sanity(args):
    ds = load_dataset(args.data)
    model = md.load_model(args.model)
    cfg = _explainer_config(args)
    fn = ex.make_explainer(cfg, ds)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    plans = rz.make_plans(model, args.mode, seeds, args.stages)
    idx = _instances(ds, args.instances)
    rep = rz.sanity_check(model, fn, ds.features[idx], ds.labels[idx], plans, args.metric)
    _emit(rep.to_csv(), args.out)
    log.info("sanity verdict for %s: %s", cfg.explainer_id, rep.verdict)
    if args.strict and rep.verdict == "fail":
        return EXIT_SANITY
    return EXIT_OK


def cmd_run(args):
    cfg = hs.BenchmarkConfig.load(args.config)
    if args.seed is not None:
        raw = dict(cfg.raw, seed=args.seed)
        cfg = hs.BenchmarkConfig.from_dict(raw)
    report = hs.run_benchmark(cfg, args.out_dir)
    log.info("wrote %d rows to %s", len(report.rows), args.out_dir or cfg.output_dir)


def cmd_figure4(args):
    res = hs.run_figure4_experiment(args.seed, normalize_seneca=args.normalize_seneca)
    _emit(res.to_csv(), args.out)


def cmd_summarize(args):
    rows = hs.read_report(args.report)
    table = hs.summarize(rows, args.group_by.split(","))
    _emit(hs.table_to_csv(table), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blamebench", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset CSV")
    g.add_argument("--generator", required=True, choices=sorted(GENERATORS))
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--n-redundant", type=int, default=0)
    g.add_argument("--spec", help="polynomial or cluster spec JSON")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit a model and save it as JSON")
    t.add_argument("--model", required=True, choices=md.FITTERS)
    t.add_argument("--data", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--params", help="JSON file with fitter keyword arguments")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    def model_data(sp, model_required=True):
        sp.add_argument("--model", required=model_required)
        sp.add_argument("--data", required=True)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--instances", type=int, help="explain only the first N rows")
        sp.add_argument("--out")

    e = sub.add_parser("explain", help="compute attributions")
    model_data(e)
    e.add_argument("--explainer", required=True, choices=ex.KINDS)
    e.add_argument("--config", help="explainer config JSON")
    e.set_defaults(func=cmd_explain)

    gt = sub.add_parser("groundtruth", help="compute reference importance scores")
    model_data(gt, model_required=False)
    gt.add_argument("--method", required=True, choices=hs.GT_METHODS)
    gt.add_argument("--spec", help="polynomial spec JSON for --method seneca")
    gt.add_argument("--normalize", action="store_true", help="L-infinity normalise")
    gt.set_defaults(func=cmd_groundtruth)

    s = sub.add_parser("score", help="compare attributions with ground truth")
    s.add_argument("--attributions", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--metrics", default="spearman")
    s.add_argument("--k", type=int)
    s.add_argument("--json", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    r = sub.add_parser("robustness", help="deletion / preservation / continuity")
    model_data(r)
    r.add_argument("--explainer", required=True, choices=ex.KINDS)
    r.add_argument("--config")
    r.add_argument("--measure", required=True, choices=hs.MEASURES)
    r.add_argument("--k", type=int)
    r.add_argument("--strategy", default="dataset_mean", choices=("dataset_mean", "zero"))
    r.add_argument("--epsilon", type=float)
    r.add_argument("--n-samples", type=int, default=50)
    r.set_defaults(func=cmd_robustness)

    sa = sub.add_parser("sanity", help="model-randomization sanity check")
    model_data(sa)
    sa.add_argument("--explainer", required=True, choices=ex.KINDS)
    sa.add_argument("--config")
    sa.add_argument("--mode", required=True, choices=rz.MODES)
    sa.add_argument("--stages", type=int)
    sa.add_argument("--metric", required=True, choices=mt.METRICS)
    sa.add_argument("--seeds", help="comma-separated randomization seeds")
    sa.add_argument("--strict", action="store_true")
    sa.set_defaults(func=cmd_sanity)

    ru = sub.add_parser("run", help="run a benchmark config")
    ru.add_argument("--config", required=True)
    ru.add_argument("--seed", type=int)
    ru.add_argument("--out-dir")
    ru.set_defaults(func=cmd_run)

    f = sub.add_parser("figure4", help="two-feature comparison of reference vectors")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--normalize-seneca", action="store_true")
    f.add_argument("--out")
    f.set_defaults(func=cmd_figure4)

    su = sub.add_parser("summarize", help="aggregate a report CSV")
    su.add_argument("--report", required=True)
    su.add_argument("--group-by", default="explainer,measure")
    su.add_argument("--out")
    su.set_defaults(func=cmd_summarize)
    return p


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, hs.StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericError) or isinstance(exc, np.linalg.LinAlgError):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args) or EXIT_OK
    except (hs.StageError, ConfigError, DataError, NumericError, ValueError, OSError,
            ArithmeticError) as exc:
        log.error("%s", exc)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
