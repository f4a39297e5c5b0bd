"""Command-line entry point: ``eraim {simulate,detect,evaluate,roc,theory}``.

Exit codes are 0 on success, 2 on usage errors (bad flags, missing files,
invalid configs) and 1 on data errors (malformed logs, empty inputs).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics, theory
from .errors import EraimError, InvalidArgumentError
from .experiments import solver_config
from .geodesy import LocalFrame
from .pipeline import Detector, DetectorConfig
from .simulate import ScenarioConfig, build_scenario, load_dataset, write_dataset

log = logging.getLogger("eraim")

REPORT_HEADER = ["time_ms", "score", "alarm", "recovered_e", "recovered_n", "recovered_u", "n_excluded"]
ROC_HEADER = ["lambda_f", "p_fp", "p_tp"]
THEORY_HEADER = ["Nmin", "Nanc", "Nadv", "lemma1", "detectable", "lemma2", "benign_count", "adv_count"]


class UsageError(Exception):
    """Bad invocation; maps to exit code 2."""


# -- helpers ----------------------------------------------------------------------------

def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _detector_config(args, dataset) -> DetectorConfig:
    cfg = DetectorConfig(sampling_rate=args.sampling_rate, seed=args.seed, window=args.window,
                         kernel_decay=args.kernel_decay, poly_order=args.poly_order,
                         n_lambda=args.n_lambda, lambda_f=args.lambda_f)
    if dataset.config is not None:
        cfg = replace(cfg, solver=solver_config(dataset.config))
    return cfg


def _run_detection(args):
    dataset = load_dataset(_need(Path(args.dataset), "dataset directory"))
    if not dataset.epochs:
        raise EraimError("dataset contains no epochs")
    cfg = _detector_config(args, dataset)
    reports = Detector(dataset.origin, dataset.registry, cfg).run(dataset.epochs)
    return dataset, reports


def _report_row(r) -> list:
    rec = ["", "", ""] if r.recovered is None else [f"{x:.6f}" for x in r.recovered]
    return [r.time, f"{r.score:.12g}", int(r.alarm), *rec, len(r.excluded)]


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _emit_json(obj, out: Path | None):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_jsonable) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def _clean(d):
    """Replace NaN floats by ``None`` so the summary stays valid JSON."""
    if isinstance(d, dict):
        return {k: _clean(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_clean(v) for v in d]
    if isinstance(d, float) and np.isnan(d):
        return None
    return d


def _truth_enu(dataset, times):
    if not dataset.truth:
        return None
    o = dataset.origin
    frame = LocalFrame(o.latitude, o.longitude, o.altitude)
    by_t = {t: frame.geodetic_to_enu(p.latitude, p.longitude, p.altitude) for t, p in dataset.truth}
    return np.array([by_t.get(t, np.full(3, np.nan)) for t in times], dtype=float)


def _summary(times, scores, recovered, labels, truth, lambda_f) -> dict:
    alarms = scores > lambda_f
    out = {"n_epochs": len(times), "n_alarms": int(alarms.sum()), "lambda_f": lambda_f}
    if labels is None:
        out["score_quantiles"] = {q: float(np.quantile(scores, q / 100)) for q in (5, 50, 95)} if len(scores) else {}
        return out
    attacked = metrics.attacked_by_time(labels, times)
    summary = metrics.evaluate(times, alarms, attacked, recovered, truth)
    out.update(summary.to_dict())
    return _clean(out)


# -- subcommands ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.config:
        cfg = ScenarioConfig.from_json(_need(Path(args.config), "config"))
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    else:
        cfg = ScenarioConfig(seed=args.seed or 0)
    paths = write_dataset(build_scenario(cfg), Path(args.out))
    for p in paths:
        print(p)
    return 0


def cmd_detect(args) -> int:
    dataset, reports = _run_detection(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "reports.jsonl").open("w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
    _write_csv(out / "reports.csv", REPORT_HEADER, [_report_row(r) for r in reports])
    times = np.array([r.time for r in reports], dtype=np.int64)
    scores = np.array([r.score for r in reports])
    recovered = np.array([np.full(3, np.nan) if r.recovered is None else r.recovered for r in reports])
    summary = _summary(times, scores, recovered, dataset.labels, _truth_enu(dataset, times), args.lambda_f)
    _emit_json(summary, out / "summary.json")
    print(json.dumps({"n_epochs": summary["n_epochs"], "n_alarms": summary["n_alarms"]}))
    return 0


def _read_reports(path: Path):
    times, scores, rec = [], [], []
    with path.open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                times.append(int(d["time_ms"]))
                scores.append(float(d["score"]))
                rec.append(np.full(3, np.nan) if d.get("recovered") is None else np.asarray(d["recovered"], float))
            except (ValueError, KeyError, TypeError) as exc:
                raise EraimError(f"{path}:{n}: bad report line ({exc})") from exc
    if not times:
        raise EraimError(f"{path}: no reports")
    return np.array(times, dtype=np.int64), np.array(scores), np.array(rec)


def cmd_evaluate(args) -> int:
    from .logs import parse_labels

    times, scores, recovered = _read_reports(_need(Path(args.reports), "reports"))
    labels = parse_labels(_need(Path(args.labels), "labels")) if args.labels else None
    truth = None
    if args.dataset:
        truth = _truth_enu(load_dataset(_need(Path(args.dataset), "dataset directory")), times)
    summary = _summary(times, scores, recovered, labels, truth, args.lambda_f)
    _emit_json(summary, Path(args.out) if args.out else None)
    return 0


def cmd_roc(args) -> int:
    dataset, reports = _run_detection(args)
    if dataset.labels is None:
        raise EraimError("ROC needs a labels.csv in the dataset")
    times = np.array([r.time for r in reports], dtype=np.int64)
    attacked = metrics.attacked_by_time(dataset.labels, times)
    grid = None if args.grid is None else [float(x) for x in args.grid.split(",")]
    curve = metrics.roc([r.score for r in reports], attacked, grid)
    rows = [[f"{lam:.6g}", _fmt_rate(fp), _fmt_rate(tp)] for lam, fp, tp in curve]
    if args.out:
        _write_csv(Path(args.out), ROC_HEADER, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(ROC_HEADER)
        w.writerows(rows)
    return 0


def _fmt_rate(x) -> str:
    return "" if np.isnan(x) else f"{x:.6f}"


def _range(text: str) -> range:
    try:
        lo, _, hi = text.partition("-")
        return range(int(lo), int(hi or lo) + 1)
    except ValueError as exc:
        raise UsageError(f"bad range {text!r}; use N or LO-HI") from exc


def cmd_theory(args) -> int:
    rows = []
    for n_min in _range(args.n_min):
        for n_anc in _range(args.n_anc):
            for n_adv in range(0, n_anc + 1):
                c = theory.InfraCounts(n_min, n_anc, n_adv)
                rows.append([n_min, n_anc, n_adv, int(theory.check_lemma1(c)), int(theory.check_detectable(c)),
                             int(theory.check_lemma2(c)), theory.benign_subset_count(c),
                             theory.adversarial_subset_count(c)])
    if args.out:
        _write_csv(Path(args.out), THEORY_HEADER, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(THEORY_HEADER)
        w.writerows(rows)
    return 0


# -- parser -----------------------------------------------------------------------------

def _detector_flags(p):
    p.add_argument("dataset", help="dataset directory written by 'simulate'")
    p.add_argument("--seed", type=int, default=0, help="subset sampling seed")
    p.add_argument("--sampling-rate", type=float, default=1.0)
    p.add_argument("--window", type=int, default=15)
    p.add_argument("--kernel-decay", type=float, default=0.3)
    p.add_argument("--poly-order", type=int, default=2)
    p.add_argument("--n-lambda", type=float, default=3.0)
    p.add_argument("--lambda-f", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eraim", description="Multi-infrastructure spoofing detection and recovery")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("config", nargs="?", help="scenario JSON (defaults to a benign walk)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run detection on a dataset")
    _detector_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="metrics from a reports.jsonl and labels")
    p.add_argument("reports")
    p.add_argument("--labels", help="labels CSV")
    p.add_argument("--dataset", help="dataset directory supplying truth for recovery error")
    p.add_argument("--lambda-f", type=float, default=0.5)
    p.add_argument("--out", help="summary JSON (stdout when omitted)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("roc", help="sweep the alarm threshold on a dataset")
    _detector_flags(p)
    p.add_argument("--grid", help="comma-separated thresholds (default 101 points in [0, 1])")
    p.add_argument("--out", help="ROC CSV (stdout when omitted)")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("theory", help="tabulate the counting conditions")
    p.add_argument("--n-min", default="4", help="N or LO-HI")
    p.add_argument("--n-anc", default="4-12", help="N or LO-HI")
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    p.set_defaults(func=cmd_theory)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"eraim: error: {exc}", file=sys.stderr)
        return 2
    except EraimError as exc:
        print(f"eraim: data error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
