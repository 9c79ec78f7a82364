"""Command-line interface: ``sparse-pspline {fit,tune,path,simulate}``.

Exit codes: 0 success, 2 input error, 3 numerical error, 4 internal invariant
breach. Every output file is written to a temporary file and renamed into place.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from .estimator import PartialSplineRegressor
from .exceptions import InputError, InvariantError, NumericalError
from .psa import adaptive_weights, lasso_path_for
from .simulation import F_GRID, METHODS, draw_raw, model1, model2, model3, run_study
from .tuning import TuningConfig, bic_lambda2

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 2, 3, 4

TABLE_COLUMNS = ("method", "mse_mean", "mse_se", "mise_mean", "mise_se", "size_mean", "size_se",
                 "correct0_mean", "correct0_se", "incorrect0_mean", "incorrect0_se", "p_correct")


class CsvError(InputError):
    pass


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(path, payload):
    write_atomic(path, json.dumps(_jsonable(payload), indent=2) + "\n")


def _fmt(v):
    return repr(float(v))


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def read_csv(path):
    """Read a numeric CSV with a header row; returns ``(names, data)``."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise CsvError(f"{path}: cannot read ({exc})") from exc
    if not rows:
        raise CsvError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise CsvError(f"{path}:1: header must have unique nonempty names")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise CsvError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values = [float(v) for v in row]
        except ValueError as exc:
            raise CsvError(f"{path}:{lineno}: non-numeric field ({exc})") from exc
        if not all(math.isfinite(v) for v in values):
            raise CsvError(f"{path}:{lineno}: non-finite value")
        data.append(values)
    if not data:
        raise CsvError(f"{path}: no data rows")
    return header, np.array(data)


def load_design(args):
    """``(x_names, X_with_t_last, y)`` from the CSV named in ``args``."""
    names, data = read_csv(args.input)
    for col in (args.t_column, args.y_column):
        if col not in names:
            raise CsvError(f"{args.input}: column {col!r} not found in header {names}")
    if args.t_column == args.y_column:
        raise InputError("t and y columns must differ")
    if args.x_columns:
        x_names = [c.strip() for c in args.x_columns.split(",") if c.strip()]
        missing = [c for c in x_names if c not in names]
        if missing:
            raise CsvError(f"{args.input}: columns {missing} not found")
    else:
        x_names = [c for c in names if c not in (args.t_column, args.y_column)]
    idx = [names.index(c) for c in x_names]
    X = np.column_stack([data[:, idx], data[:, names.index(args.t_column)]])
    return x_names, X, data[:, names.index(args.y_column)]


def _grid(text):
    if text is None:
        return None
    try:
        if text.startswith("log:"):
            lo, hi, k = text[4:].split(":")
            return np.logspace(float(lo), float(hi), int(k))
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise InputError(f"bad grid {text!r}; use 'a,b,c' or 'log:lo:hi:count'") from exc


def build_estimator(args, **overrides):
    kw = dict(penalty=args.penalty, lambda1=args.lambda1, lambda2=args.lambda2, gamma=args.gamma,
              m=args.m, tuning=args.tuning, lambda1_grid=_grid(args.lambda1_grid),
              lambda2_grid=_grid(args.lambda2_grid), t_column=-1, rescale_t=args.rescale_t)
    kw.update(overrides)
    return PartialSplineRegressor(**kw)


def fit_summary(est, x_names, original_scale):
    coef = est.coef_ if original_scale else est.coef_standardized_
    return {
        "schema_version": SCHEMA_VERSION,
        "penalty": est.penalty,
        "coefficient_scale": "original" if original_scale else "standardized",
        "coefficients": dict(zip(x_names, coef.tolist())),
        "active_set": [x_names[j] for j in est.active_set_],
        "active_indices": [int(j) + 1 for j in est.active_set_],
        "lambda1": est.lambda1_,
        "lambda2": est.lambda2_,
        "gamma": float(est.gamma),
        "m": int(est.m),
        "sigma2_hat": est.sigma2_,
        "trace_A": float(est.system_.n - np.sum(est.system_.complement_weights(est.lambda1_))),
        "n": int(est.dataset_.n),
        "col_means": dict(zip(x_names, est.dataset_.col_means.tolist())),
        "col_scales": dict(zip(x_names, est.dataset_.col_scales.tolist())),
    }


def _fhat_rows(est):
    if est.rescale_t:
        lo, hi = est.t_range_
        t_in = lo + F_GRID * (hi - lo)
    else:
        t_in = F_GRID
    return zip(t_in, est.spline(t_in))


def cmd_fit(args):
    x_names, X, y = load_design(args)
    est = build_estimator(args).fit(X, y)
    out = args.output_dir
    dump_json(os.path.join(out, "fit.json"), fit_summary(est, x_names, args.original_scale))
    write_atomic(os.path.join(out, "fhat.csv"), csv_text(("t", "fhat"), _fhat_rows(est)))
    return EXIT_OK


def cmd_tune(args):
    x_names, X, y = load_design(args)
    est = build_estimator(args, lambda1=None, lambda2=None).fit(X, y)
    tuned = est.tuning_
    out = args.output_dir
    write_atomic(os.path.join(out, "gcv.csv"), csv_text(("lambda1", "gcv"), tuned.gcv_curve))
    write_atomic(os.path.join(out, "bic.csv"), csv_text(("lambda2", "bic"), tuned.bic_curve))
    summary = fit_summary(est, x_names, args.original_scale)
    summary["lambda1_star"], summary["lambda2_star"] = tuned.lambda1_star, tuned.lambda2_star
    dump_json(os.path.join(out, "fit.json"), summary)
    write_atomic(os.path.join(out, "fhat.csv"), csv_text(("t", "fhat"), _fhat_rows(est)))
    return EXIT_OK


def cmd_path(args):
    x_names, X, y = load_design(args)
    if args.penalty == "none":
        raise InputError("the path command needs a penalized method")
    est = build_estimator(args, lambda2=0.0).fit(X, y)
    ds, sys = est.dataset_, est.system_
    if args.penalty == "adaptive":
        _, scale = adaptive_weights(est.fit_.beta_tilde, est.gamma)
    else:
        scale = np.ones(ds.d)
    path = lasso_path_for(ds, sys, est.lambda1_, scale)
    rows = []
    for lam, coef in zip(path.breakpoints, path.coefs):
        beta = path.problem.to_original(coef)
        if args.original_scale:
            beta = ds.to_original_scale(beta)
        rows.append([float(lam), *(float(b) for b in beta)])
    write_atomic(os.path.join(args.output_dir, "path.csv"), csv_text(["lambda2", *x_names], rows))
    if args.bic:
        s2 = est.sigma2_
        _, curve = bic_lambda2(ds, est.lambda1_, path, s2, sys)
        write_atomic(os.path.join(args.output_dir, "bic.csv"), csv_text(("lambda2", "bic"), curve))
    return EXIT_OK


def model_spec(args):
    if args.model == "model1":
        return model1(args.n, args.sigma, args.seed)
    if args.model == "model2":
        return model2(args.n, args.rho, args.beta_scale, args.seed)
    return model3(args.n, args.sigma, args.beta_scale, args.f_scale, args.seed)


def report_payload(report):
    spec = report.spec
    return {
        "schema_version": SCHEMA_VERSION,
        "model": spec.to_dict(),
        "replicates": report.replicates,
        "methods": list(report.methods),
        "table": report.table,
        "selection_frequency": report.selection,
        "failures": report.failures,
        "failure_count": len(report.failures),
    }


def cmd_simulate(args):
    spec = model_spec(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    config = TuningConfig(**({"lambda1_grid": _grid(args.lambda1_grid)} if args.lambda1_grid else {}))
    report = run_study(spec, methods, args.replicates, config, threads=args.threads,
                       dump_grid=args.dump_fhat)
    out = args.output_dir
    dump_json(os.path.join(out, "report.json"), report_payload(report))
    rows = [[m] + [report.table[m][c] for c in TABLE_COLUMNS[1:]] for m in methods]
    write_atomic(os.path.join(out, "table.csv"), csv_text(TABLE_COLUMNS, rows))
    names = [f"x{j + 1}" for j in range(spec.d)]
    write_atomic(os.path.join(out, "selection.csv"),
                 csv_text(["method", *names], [[m, *report.selection[m]] for m in methods]))
    if args.dump_fhat:
        rows = []
        for m in methods:
            for r, curve in report.fhat_grid[m]:
                rows.extend([m, r, float(g), float(v)] for g, v in zip(F_GRID, curve))
        write_atomic(os.path.join(out, "fhat_grid.csv"),
                     csv_text(("method", "replicate", "t", "fhat"), rows))
    if args.dump_csv:
        for r in range(args.replicates):
            X, t, y = draw_raw(spec, r)
            rows = [[*map(float, xr), float(tr), float(yr)] for xr, tr, yr in zip(X, t, y)]
            write_atomic(os.path.join(out, "data", f"replicate_{r:04d}.csv"),
                         csv_text([*names, "t", "y"], rows))
    return EXIT_OK


def _add_data_args(p):
    p.add_argument("input", help="CSV file with a header row")
    p.add_argument("--t-column", default="t", help="spline covariate column (default: t)")
    p.add_argument("--y-column", default="y", help="response column (default: y)")
    p.add_argument("--x-columns", help="comma-separated linear covariates (default: all others)")
    p.add_argument("--rescale-t", action="store_true", help="min-max rescale t to [0, 1]")
    p.add_argument("--penalty", choices=("adaptive", "lasso", "none"), default="adaptive")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("-m", "--m", type=int, default=2, help="spline order")
    p.add_argument("--tuning", choices=("two-stage", "joint-gcv"), default="two-stage")
    p.add_argument("--lambda1-grid", help="'a,b,c' or 'log:lo:hi:count'")
    p.add_argument("--lambda2-grid", help="'a,b,c' or 'log:lo:hi:count'")
    p.add_argument("--original-scale", action="store_true",
                   help="report coefficients for unstandardized covariates")
    p.add_argument("-o", "--output-dir", default=".")


def build_parser():
    parser = argparse.ArgumentParser(prog="sparse-pspline",
                                     description="Partial spline regression with adaptive LASSO selection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit at given or tuned penalties")
    _add_data_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", help="tune penalties and export GCV/BIC curves")
    _add_data_args(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("path", help="export the LASSO solution path")
    _add_data_args(p)
    p.add_argument("--bic", action="store_true", help="also export the BIC curve")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("simulate", help="run a Monte Carlo study")
    p.add_argument("model", choices=("model1", "model2", "model3"))
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--beta-scale", type=float, default=1.0)
    p.add_argument("--f-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--threads", type=int, help="worker threads (capped by $SPARSE_PSPLINE_THREADS)")
    p.add_argument("--lambda1-grid", help="'a,b,c' or 'log:lo:hi:count'")
    p.add_argument("--dump-fhat", action="store_true", help="write f_hat on a 201-point grid")
    p.add_argument("--dump-csv", action="store_true", help="write each replicate's data")
    p.add_argument("-o", "--output-dir", default=".")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError) as exc:
        # sklearn's validators raise plain ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
