"""Command-line entry point: ``knn-loocv {select,fit,predict,verify,spectral}``.

Exit codes: 0 success, 2 usage, 3 parse, 4 validation, 5 resource cap,
6 non-convergence. Every command is deterministic given its seed flags;
the default seed is 0. ``KNN_LOOCV_THREADS`` sets the default worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset import load_csv, load_points_csv, write_csv
from .errors import ConvergenceError, ParseError, ResourceError, ValidationError
from .neighbors import TieRule, build_table, default_threads
from .regress import fit, load_model, loocv_curve_streaming, predict, save_model, save_predictions
from .spectral import diagnostic_report, report_json
from .verify import ExperimentSpec, gap_experiment

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_VALIDATION, EXIT_RESOURCE, EXIT_CONVERGENCE = 0, 2, 3, 4, 5, 6
OUTPUT_FORMAT_VERSION = 1


def _response_col(value):
    if value in (None, "last"):
        return "last"
    try:
        return int(value)
    except ValueError:
        return value


def _add_data_flags(p):
    p.add_argument("--input", required=True, help="training CSV")
    p.add_argument("--response-col", default="last",
                   help="response column: 'last', 0-based index, or header name")
    p.add_argument("--header", action="store_true", help="CSV has a header row")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="tie-breaking seed (default 0)")
    p.add_argument("--tie-mode", choices=["seeded-uniform", "index-order"], default="seeded-uniform")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default $KNN_LOOCV_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="knn-loocv",
                                     description="k-NN regression with leave-one-out choice of k")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="compute the LOOCV curve and the selected k")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--out", help="write the curve here (CSV or JSON per --format)")
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("fit", help="fit a model and write its JSON manifest")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--k", type=int, default=None, help="override the selected k")
    p.add_argument("--out", required=True, help="model manifest path")

    p = sub.add_parser("predict", help="predict at query points with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="query CSV, coordinates only")
    p.add_argument("--header", action="store_true", help="query CSV has a header row")
    p.add_argument("--train", default=None, help="training CSV (default: path in the manifest)")
    p.add_argument("--train-header", action="store_true")
    p.add_argument("--response-col", default="last")
    p.add_argument("--out", default=None, help="predictions CSV (default stdout)")

    p = sub.add_parser("verify", help="run an optimality-gap experiment")
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.add_argument("--out", required=True, help="output prefix; writes <out>.json and <out>.csv")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--max-seconds", type=float, default=None)
    p.add_argument("--format", choices=["json", "csv"], default=None,
                   help="write only one format (default both)")

    p = sub.add_parser("spectral", help="norm diagnostics of the LOOCV Gram matrix")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", default=None, help="report JSON (default stdout)")
    return parser


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_select(args):
    data = load_csv(args.input, args.header, _response_col(args.response_col))
    curve = loocv_curve_streaming(data, args.k_max, TieRule(args.seed, args.tie_mode),
                                  threads=args.threads)
    summary = {
        "format_version": OUTPUT_FORMAT_VERSION,
        "n": data.n,
        "k_max": curve.k_max,
        "k_tilde": curve.k_tilde,
        "tie_seed": args.seed,
        "f": [float(v) for v in curve.f],
    }
    if args.out and args.format == "csv":
        write_csv(args.out, [curve.ks, curve.f], ["k", "f"])
        summary.pop("f")
    elif args.out:
        _emit(json.dumps(summary, indent=2) + "\n", args.out)
    print(json.dumps(summary))


def cmd_fit(args):
    data = load_csv(args.input, args.header, _response_col(args.response_col))
    model = fit(data, args.k_max, TieRule(args.seed, args.tie_mode), args.k, threads=args.threads)
    save_model(model, args.out, Path(args.input).resolve())
    print(json.dumps({"format_version": OUTPUT_FORMAT_VERSION, "k": model.k,
                      "k_tilde": model.k_tilde, "k_max": model.k_max}))


def cmd_predict(args):
    data = None
    if args.train:
        data = load_csv(args.train, args.train_header, _response_col(args.response_col))
    model = load_model(args.model, data)
    queries = load_points_csv(args.input, args.header, d=model.data.d)
    preds = predict(model, queries)
    if args.out:
        save_predictions(args.out, preds)
    else:
        sys.stdout.write("prediction\n" + "".join(f"{float(v)!r}\n" for v in preds))


def cmd_verify(args):
    spec = ExperimentSpec.from_json(args.spec)
    report = gap_experiment(spec, args.threads, args.max_seconds)
    if args.format in (None, "json"):
        Path(f"{args.out}.json").write_text(report.to_json(), encoding="utf-8")
    if args.format in (None, "csv"):
        Path(f"{args.out}.csv").write_text(report.to_csv(), encoding="utf-8")
    for s in report.summaries:
        print(json.dumps(s))
    if report.partial:
        print("time cap reached: report is partial", file=sys.stderr)
        return EXIT_RESOURCE
    return EXIT_OK


def cmd_spectral(args):
    data = load_csv(args.input, args.header, _response_col(args.response_col))
    table = build_table(data, args.k, TieRule(args.seed, args.tie_mode), threads=args.threads)
    _emit(report_json(diagnostic_report(data, table, args.k, args.tol)), args.out)


COMMANDS = {
    "select": cmd_select,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "verify": cmd_verify,
    "spectral": cmd_spectral,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_threads()
    try:
        return COMMANDS[args.command](args) or EXIT_OK
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
