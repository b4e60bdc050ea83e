"""Command line front end: analyze, simulate, and moments subcommands.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numeric failure (failed stages are listed on stderr; partial results are
still written).
"""

import argparse
import json
import os
import sys

import numpy as np

from .data import LandmarkSample, load_dataset, save_dataset
from .models import (MatrixEllipticalSpec, moment_constants, parse_model_spec,
                     sample_matrix_elliptical)
from .moments import ModelMoments, moments_B_dependent
from .pipeline import AnalysisConfig, emit_report, json_sanitize, run_analysis


class _UsageError(Exception):
    pass


class _DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits on its own; surface a catchable error instead
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="ellipform",
                     description="Mean form and form difference analysis "
                                 "under matrix elliptical models.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    a = sub.add_parser("analyze", help="run the full pipeline on a dataset")
    a.add_argument("--data", required=True, help="dataset file (.json/.csv)")
    a.add_argument("--config", required=True, help="JSON analysis config")
    a.add_argument("--out", help="output directory (overrides config)")
    a.add_argument("--seed", type=int, help="master seed (overrides config)")
    a.add_argument("--verbose", action="store_true",
                   help="include intermediates in report.json")

    s = sub.add_parser("simulate", help="draw one synthetic landmark group")
    s.add_argument("--model", required=True, help="model spec, e.g. "
                   "gaussian or kotz:N=2,s=1,r=0.5")
    s.add_argument("--mu", required=True, help="mean form file (K x D)")
    s.add_argument("--sigmaK", required=True, help="row scale file (K x K)")
    s.add_argument("--n", type=int, required=True, help="specimen count")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="dataset file to write")

    m = sub.add_parser("moments", help="print exact Gram-matrix moments")
    m.add_argument("--model", required=True)
    m.add_argument("--mu", required=True, help="mean form file (K x D)")
    m.add_argument("--sigmaK", required=True, help="row scale file (K x K)")
    m.add_argument("--sigmaD", required=True, help="column scale file (D x D)")

    return parser


def _load_matrix(path, what):
    try:
        return np.loadtxt(path, ndmin=2)
    except OSError:
        raise _DataError(f"cannot read the {what} file {path!r}")
    except ValueError as exc:
        raise _DataError(f"{what} file {path!r} is not a numeric matrix "
                         f"({exc})")


def _cmd_analyze(args):
    try:
        with open(args.config) as fh:
            blob = json.load(fh)
        if not isinstance(blob, dict):
            raise _UsageError(f"config {args.config!r} must hold a JSON "
                              "object")
    except OSError:
        raise _UsageError(f"cannot read the config file {args.config!r}")
    except json.JSONDecodeError as exc:
        raise _UsageError(f"config {args.config!r} is not valid JSON ({exc})")

    out_dir = args.out or os.environ.get("ELLIPFORM_OUT")
    if out_dir:
        blob.setdefault("output", {})["dir"] = out_dir
    if args.seed is not None:
        blob.setdefault("bootstrap", {})["seed"] = args.seed
    if args.verbose:
        blob["verbose"] = True
    try:
        cfg = AnalysisConfig.from_dict(blob)
    except (ValueError, TypeError, OSError) as exc:
        raise _UsageError(f"bad config: {exc}")

    try:
        data = load_dataset(args.data)
    except ValueError as exc:
        raise _DataError(str(exc))

    report = run_analysis(data, cfg)
    emit_report(report, cfg)
    if report.errors:
        print("failed stages:", file=sys.stderr)
        for err in report.errors:
            print(f"  {err['stage']}: {err['message']}", file=sys.stderr)
        return 3
    print(f"report written to {cfg.output.dir}")
    return 0


def _cmd_simulate(args):
    try:
        model = parse_model_spec(args.model)
    except ValueError as exc:
        raise _UsageError(f"bad model spec: {exc}")
    if args.n < 2:
        raise _UsageError("--n must be at least 2")
    mu = _load_matrix(args.mu, "mean form")
    sigma_k = _load_matrix(args.sigmaK, "row scale")
    try:
        spec = MatrixEllipticalSpec(mu, sigma_k, np.eye(mu.shape[1]), model)
    except ValueError as exc:
        raise _DataError(str(exc))
    xs = sample_matrix_elliptical(spec, args.n, args.seed)
    group = LandmarkSample.from_specimens("simulated", list(xs))
    save_dataset([group], args.out)
    print(f"wrote {args.n} specimens to {args.out}")
    return 0


def _cmd_moments(args):
    try:
        model = parse_model_spec(args.model)
    except ValueError as exc:
        raise _UsageError(f"bad model spec: {exc}")
    mu = _load_matrix(args.mu, "mean form")
    sigma_k = _load_matrix(args.sigmaK, "row scale")
    sigma_d = _load_matrix(args.sigmaD, "column scale")
    try:
        c0, kappa0 = moment_constants(model, dim=mu.size)
        mm = ModelMoments(mu=mu, sigma=sigma_k, theta=sigma_d,
                          c0=c0, kappa0=kappa0)
        pair = moments_B_dependent(mm)
    except ValueError as exc:
        raise _DataError(str(exc))
    blob = json_sanitize({"model": model.label(), "c0": c0, "kappa0": kappa0,
                          "expected_B": pair.expected_B,
                          "cov_vecB": pair.cov_vecB})
    print(json.dumps(blob, sort_keys=True))
    return 0


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("pick a subcommand: analyze, simulate, moments")
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_moments(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except _DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
