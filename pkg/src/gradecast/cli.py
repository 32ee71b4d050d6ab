"""Command-line entry point.

Subcommands: synth, train, evaluate, predict, explain, calibrate, serve.
Every output file carries a provenance block (seed + config); timestamps
live only in the `created_at` metadata field so repeated runs with the same
seed are byte-identical everywhere else.

Exit codes: 0 ok, 2 usage, 3 data error, 4 training error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

from . import data, explain, metrics, models, pipeline, synthgen, uncertainty
from .errors import (GradecastError, InsufficientHistory, MissingFeatures,
                     NonFiniteGradient)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_TRAINING = 4

_DATA_ERRORS = (InsufficientHistory, MissingFeatures)


def _meta(args, **extra):
    cfg = {k: v for k, v in sorted(vars(args).items())
           if k not in ("func",) and v is not None}
    meta = {"seed": getattr(args, "seed", None), "config": cfg,
            "created_at": datetime.now(timezone.utc).isoformat()}
    meta.update(extra)
    return meta


def _write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows, meta_line):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(meta_line + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _provenance_comment(args):
    cfg = {k: v for k, v in sorted(vars(args).items())
           if k not in ("func",) and v is not None}
    return f"# seed={getattr(args, 'seed', None)} config={json.dumps(cfg, sort_keys=True)}"


def _report_dict(report):
    return report.as_dict()


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    spec = synthgen.named_spec(args.spec, seed=args.seed)
    synthgen.emit(spec, args.out)
    _write_json(os.path.join(args.out, "run_meta.json"), _meta(args))
    print(f"wrote synthetic data to {args.out}")
    return EXIT_OK


def cmd_train(args):
    loaded = pipeline.load_data_dir(args.data)
    grid = models.HyperGrid.preset(args.grid)
    families = tuple(args.families.split(",")) if args.families else models.FAMILIES
    unknown = [f for f in families if f not in models.FAMILIES]
    if unknown:
        raise GradecastError(f"unknown families: {unknown}")
    if loaded.features is None:
        skipped = [f for f in families if f in ("CSR_CF", "CSR_HY")]
        if skipped:
            print(f"content features not provided; skipping {','.join(skipped)}")
    summary = pipeline.train_registry(
        loaded, args.registry, grid, seed=args.seed, families=families,
        test_term_spec=args.term, min_train=args.min_train, jobs=args.jobs)
    _write_json(os.path.join(args.registry, "run_meta.json"), _meta(args))
    n_course = len(summary["courses"])
    print(f"trained {n_course} course model sets into {args.registry}")
    return EXIT_OK


def cmd_evaluate(args):
    loaded = pipeline.load_data_dir(args.data)
    per_course, pooled = pipeline.evaluate_registry(
        loaded, args.registry, test_term_spec=args.term,
        inclusive=args.at_risk_inclusive)
    os.makedirs(args.out, exist_ok=True)
    payload = {
        "meta": _meta(args),
        "pooled": {fam: _report_dict(rep) for fam, rep in sorted(pooled.items())},
        "per_course": {course: {fam: _report_dict(rep)
                                for fam, rep in sorted(fams.items())}
                       for course, fams in sorted(per_course.items())},
    }
    _write_json(os.path.join(args.out, "evaluation.json"), payload)
    lines = [_provenance_comment(args), "", "== pooled =="]
    lines.append(metrics.report_table(pooled))
    for course in sorted(per_course):
        lines.append("")
        lines.append(f"== {course} ==")
        lines.append(metrics.report_table(per_course[course]))
    table = "\n".join(lines) + "\n"
    with open(os.path.join(args.out, "evaluation.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table)
    return EXIT_OK


def _load_transcript(path):
    records = data.ingest_records(path)
    return [(r.course_id, r.term, r.grade) for r in records]


def cmd_predict(args):
    registry = models.load_registry(args.registry)
    arts = registry.get(args.course, {})
    art = arts.get(args.family)
    if art is None:
        raise GradecastError(
            f"no {args.family} artifact for {args.course} in {args.registry}")
    transcript = _load_transcript(args.transcript)
    example = models.make_example(transcript, list(art.prior_courses),
                                  args.course)
    dist = uncertainty.predict_mc(art, example, n_samples=args.mc_samples,
                                  tau_inv=args.tau_inv, seed=args.seed)
    iv = uncertainty.interval(dist, args.alpha)
    from .grades import clip_grade, numeric_to_nearest_letter
    mean_clipped = clip_grade(dist.mean)
    payload = {
        "meta": _meta(args),
        "course": args.course,
        "family": args.family,
        "mean": dist.mean,
        "variance": dist.variance,
        "interval": {"level": args.alpha, "lower": iv.lower, "upper": iv.upper},
        "letter": numeric_to_nearest_letter(mean_clipped),
        "at_risk": bool(mean_clipped < metrics.AT_RISK_THRESHOLD),
    }
    out = json.dumps(payload, indent=1, sort_keys=True)
    if args.out:
        _write_json(args.out, payload)
    print(out)
    return EXIT_OK


def cmd_explain(args):
    loaded = pipeline.load_data_dir(args.data)
    report, collective = pipeline.explain_course(
        loaded, args.registry, args.course, family=args.family,
        student=args.student, top_k=args.top, test_term_spec=args.term)
    os.makedirs(args.out, exist_ok=True)
    top = explain.top_influential(collective, k=args.top)
    if len(collective) < args.top:
        print(f"note: only {len(collective)} priors have takers "
              f"(requested top {args.top})")
    _write_csv(os.path.join(args.out, "collective_influence.csv"),
               ["prior", "influence", "n_students"],
               [(e.prior, repr(e.influence), e.n_students) for e in collective],
               _provenance_comment(args))
    payload = {"meta": _meta(args),
               "collective_top": [{"prior": e.prior, "influence": e.influence,
                                   "n_students": e.n_students} for e in top]}
    if report is not None:
        payload["student_report"] = report.as_dict()
    _write_json(os.path.join(args.out, "influence.json"), payload)
    print(json.dumps({k: v for k, v in payload.items() if k != "meta"},
                     indent=1, sort_keys=True))
    return EXIT_OK


def cmd_calibrate(args):
    loaded = pipeline.load_data_dir(args.data)
    result, _, _ = pipeline.calibrate_registry(
        loaded, args.registry, family=args.family, n_samples=args.mc_samples,
        seed=args.seed, test_term_spec=args.term)
    os.makedirs(args.out, exist_ok=True)
    prov = _provenance_comment(args)
    _write_csv(os.path.join(args.out, "calibration.csv"),
               ["level", "empirical"],
               [(lvl, repr(cov)) for lvl, cov in result["calibration"]], prov)
    _write_csv(os.path.join(args.out, "error_at_k.csv"),
               ["k", "error"],
               [(k, repr(e)) for k, e in result["error_at_k"]], prov)
    _write_csv(os.path.join(args.out, "risk_confidence.csv"),
               ["cut", "fnr", "fpr", "coverage"],
               [(r["cut"], repr(r["fnr"]), repr(r["fpr"]), repr(r["coverage"]))
                for r in result["risk_confidence"]], prov)
    _write_json(os.path.join(args.out, "tau.json"),
                {"meta": _meta(args), "family": result["family"],
                 "tau_inv": result["tau_inv"],
                 "n_validation": result["n_validation"],
                 "n_test": result["n_test"]})
    print(f"tau_inv={result['tau_inv']} curves written to {args.out}")
    return EXIT_OK


def cmd_serve(args):
    import uvicorn

    from .service import create_app
    app = create_app(args.registry, default_samples=args.mc_samples,
                     tau_inv=args.tau_inv, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gradecast",
        description="Course-specific grade prediction with uncertainty and "
                    "counterfactual influence")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    p.add_argument("--spec", default="bench-small")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train all model families per catalog course")
    p.add_argument("--data", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--grid", default="desk", choices=("desk", "paper", "smoke"))
    p.add_argument("--families", default=None,
                   help="comma-separated subset of " + ",".join(models.FAMILIES))
    p.add_argument("--term", default="last")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--min-train", type=int, default=models.DEFAULT_MIN_TRAIN)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="MAE/PTA/at-risk tables on the test term")
    p.add_argument("--data", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--term", default="last")
    p.add_argument("--out", required=True)
    p.add_argument("--at-risk-inclusive", action="store_true")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="MC-dropout prediction for a transcript")
    p.add_argument("--registry", required=True)
    p.add_argument("--course", required=True)
    p.add_argument("--transcript", required=True,
                   help="grades CSV holding the student's prior courses")
    p.add_argument("--family", default="MLP", choices=("MLP", "LSTM"))
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--mc-samples", type=int, default=uncertainty.DEFAULT_SAMPLES)
    p.add_argument("--tau-inv", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="counterfactual influence of prior courses")
    p.add_argument("--data", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--course", required=True)
    p.add_argument("--student", default=None)
    p.add_argument("--family", default="MLP")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--term", default="last")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("calibrate", help="tune tau and emit curve CSVs")
    p.add_argument("--data", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--family", default="MLP", choices=("MLP", "LSTM"))
    p.add_argument("--mc-samples", type=int, default=uncertainty.DEFAULT_SAMPLES)
    p.add_argument("--term", default="last")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("serve", help="start the HTTP JSON inference service")
    p.add_argument("--registry", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--mc-samples", type=int, default=uncertainty.DEFAULT_SAMPLES)
    p.add_argument("--tau-inv", type=float, default=None,
                   help="model-uncertainty floor; defaults to tau.json if present")
    p.add_argument("--ui", default=None,
                   help="directory of static UI assets to serve at /")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteGradient as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except GradecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
