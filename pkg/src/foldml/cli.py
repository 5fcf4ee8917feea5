"""CSV-in / JSON-out command line front door for every algorithm, plus the
scaling benchmark harness.

Exit codes: 0 success, 1 data/argument errors, 2 non-convergence (the
result is still emitted with "converged": false) or divergence. Errors are
whole JSON objects on stderr; timing fields (elapsed_ms, *_seconds) are the
only payload parts allowed to differ between identically seeded runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np
import psutil
from threadpoolctl import threadpool_limits

from .errors import (
    DataError,
    DimensionError,
    DivergenceError,
    NumericError,
    PerfectSeparationError,
    SizingError,
)
from .foldcore import Dataset, fold_source, run_parallel
from .kmeans import kmeans_fit
from .regress import linregr_spec, logregr_fit
from .sgd import Objective, sgd_fit
from .sketch import CountMinSketch, FMSketch, cm_fold_spec, fm_fold_spec, cm_merge, fm_merge

# every field whose value depends on wall-clock measurement, including the
# quantities derived from timings; excluded from determinism comparisons
TIMING_FIELDS = (
    "elapsed_ms",
    "fold_seconds",
    "final_seconds",
    "seconds_median",
    "seconds_all",
    "per_row_exponent",
    "speedups",
)

_SGD_OBJECTIVES = ("least_squares", "lasso", "logistic", "hinge", "recommendation")


@dataclass(frozen=True)
class DatasetSpec:
    """How to turn a CSV file into a Dataset."""

    path: str
    has_header: bool = True
    label_column: Optional[str] = None
    feature_columns: Optional[tuple[str, ...]] = None  # None: all except label
    add_intercept: bool = False


def _open_rows(spec):
    fh = open(spec.path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        first = next(reader)
    except StopIteration:
        fh.close()
        raise DataError(f"{spec.path}: empty file")
    if spec.has_header:
        names = [c.strip() for c in first]
        pending = None
    else:
        names = [str(i) for i in range(len(first))]
        pending = first
    return fh, reader, names, pending


def ingest_csv(spec):
    """Columnar Dataset from CSV; row order preserved; parse failures name
    the offending data row (1-based) and column."""
    fh, reader, names, pending = _open_rows(spec)
    try:
        positions = {name: i for i, name in enumerate(names)}
        label_pos = None
        if spec.label_column is not None:
            if spec.label_column not in positions:
                raise DataError(f"missing column {spec.label_column!r}")
            label_pos = positions[spec.label_column]
        if spec.feature_columns is not None:
            for name in spec.feature_columns:
                if name not in positions:
                    raise DataError(f"missing column {name!r}")
            feat_pos = [positions[name] for name in spec.feature_columns]
        else:
            feat_pos = [i for i, name in enumerate(names) if i != label_pos]
        if not feat_pos:
            raise DataError("no feature columns selected")
        feat_names = [names[i] for i in feat_pos]

        rows = []
        labels = [] if label_pos is not None else None

        def parse(row, rownum):
            if len(row) != len(names):
                raise DataError(
                    f"row {rownum}: expected {len(names)} fields, got {len(row)}"
                )
            try:
                vals = [float(row[i]) for i in feat_pos]
            except ValueError:
                for i in feat_pos:
                    try:
                        float(row[i])
                    except ValueError:
                        raise DataError(
                            f"row {rownum}, column {names[i]!r}: cannot parse {row[i]!r} as a number"
                        ) from None
                raise
            rows.append(vals)
            if labels is not None:
                try:
                    labels.append(float(row[label_pos]))
                except ValueError:
                    raise DataError(
                        f"row {rownum}, column {names[label_pos]!r}: "
                        f"cannot parse {row[label_pos]!r} as a number"
                    ) from None

        rownum = 0
        if pending is not None:
            rownum += 1
            parse(pending, rownum)
        for row in reader:
            rownum += 1
            parse(row, rownum)
    finally:
        fh.close()

    feats = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(feat_pos))
    labs = np.asarray(labels, dtype=np.float64) if labels is not None else None
    for arr, kind, colnames in ((feats, "feature", feat_names),):
        bad = ~np.isfinite(arr)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DataError(
                f"row {int(i) + 1}, column {colnames[int(j)]!r}: non-finite value"
            )
    if labs is not None and not np.all(np.isfinite(labs)):
        i = int(np.argwhere(~np.isfinite(labs))[0][0])
        raise DataError(f"row {i + 1}, column {spec.label_column!r}: non-finite value")
    if spec.add_intercept:
        feats = np.hstack([np.ones((feats.shape[0], 1)), feats])
    return Dataset(feats, labs)


def ingest_items(path, column=None, has_header=True):
    """One CSV column as raw string items (for the sketches)."""
    spec = DatasetSpec(path, has_header=has_header)
    fh, reader, names, pending = _open_rows(spec)
    try:
        if column is None:
            pos = 0
        elif column in names:
            pos = names.index(column)
        else:
            raise DataError(f"missing column {column!r}")
        items = []
        rownum = 0
        if pending is not None:
            rownum += 1
            items.append(pending[pos])
        for row in reader:
            rownum += 1
            if pos >= len(row):
                raise DataError(f"row {rownum}: missing field {column or names[pos]!r}")
            items.append(row[pos])
    finally:
        fh.close()
    return items


def _jsonify(value):
    """Make a payload JSON-clean: numpy scalars/arrays to python, non-finite
    floats to null (strict JSON has no Infinity/NaN)."""
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def _emit_error(kind, message):
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message}}) + "\n")
    sys.stderr.flush()


class _Parser(argparse.ArgumentParser):
    """argparse, but argument problems exit 1 with a JSON error object."""

    def error(self, message):
        _emit_error("argument_error", message)
        raise SystemExit(1)


def build_parser():
    parser = _Parser(prog="foldml", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", help="input CSV path")
    common.add_argument("--label", help="label column name")
    common.add_argument("--features", help="comma-separated feature column names")
    common.add_argument("--intercept", action="store_true", help="prepend a constant-1 feature")
    common.add_argument("--partitions", type=int, default=1, help="worker count p")
    common.add_argument("--seed", type=int, default=0, help="seed for every stochastic choice")
    common.add_argument("--json", action="store_true", help="emit the full-precision JSON report")

    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("linregr", parents=[common], help="ordinary least squares with inference statistics")

    p_log = sub.add_parser("logregr", parents=[common], help="logistic regression (IRLS)")
    p_log.add_argument("--tol", type=float, default=1e-8)
    p_log.add_argument("--max-iter", type=int, default=100)

    p_km = sub.add_parser("kmeans", parents=[common], help="Lloyd's k-means")
    p_km.add_argument("--k", type=int, required=True)
    p_km.add_argument("--seeding", choices=["kmeanspp", "random"], default="kmeanspp")
    p_km.add_argument("--max-iter", type=int, default=100)
    p_km.add_argument("--reassign-tol", type=float, default=0.0)

    p_sgd = sub.add_parser("sgd", parents=[common], help="stochastic gradient descent")
    p_sgd.add_argument("--objective", choices=_SGD_OBJECTIVES, required=True)
    p_sgd.add_argument("--alpha0", type=float, default=0.001)
    p_sgd.add_argument("--epochs", type=int, default=10)
    p_sgd.add_argument("--mu", type=float, default=0.0)
    p_sgd.add_argument("--rank", type=int, default=2)

    p_sk = sub.add_parser("sketch", parents=[common], help="mergeable stream summaries")
    p_sk.add_argument("kind", choices=["cm", "fm"])
    p_sk.add_argument("--eps", type=float, default=0.01)
    p_sk.add_argument("--delta", type=float, default=0.01)
    p_sk.add_argument("--bitmaps", type=int, default=64)
    p_sk.add_argument("--query", help="item to point-query (cm)")
    p_sk.add_argument("--save", help="write the sketch state to this file")
    p_sk.add_argument("--load", help="start from a saved sketch state")

    p_bench = sub.add_parser("bench", parents=[common], help="seeded synthetic scaling benchmark")
    p_bench.add_argument("--algo", choices=["linregr"], default="linregr")
    p_bench.add_argument("--vars", default="10,20,40,80", help="comma list of variable counts")
    p_bench.add_argument("--rows", type=int, default=1_000_000)
    p_bench.add_argument("--threads", default="1,4", help="comma list of worker counts")
    p_bench.add_argument("--repeats", type=int, default=3)
    return parser


def _dataset_from_args(args, need_label=True):
    if not args.data:
        raise DataError("--data is required for this command")
    features = tuple(args.features.split(",")) if args.features else None
    spec = DatasetSpec(
        path=args.data,
        label_column=args.label if need_label else args.label,
        feature_columns=features,
        add_intercept=args.intercept,
    )
    return ingest_csv(spec)


def _require_partitions(args):
    if args.partitions < 1:
        raise DataError(f"--partitions must be >= 1, got {args.partitions}")
    return args.partitions


def cmd_linregr(args):
    p = _require_partitions(args)
    if not args.label:
        raise DataError("linregr requires --label")
    data = _dataset_from_args(args)
    result = run_parallel(linregr_spec(), data, p)
    payload = {
        "coef": result.coef,
        "r2": result.r2,
        "std_err": result.std_err,
        "t_stats": result.t_stats,
        "p_values": result.p_values,
        "condition_no": result.condition_no,
    }
    return payload, None, (data.n_rows, data.n_features), 0


def cmd_logregr(args):
    p = _require_partitions(args)
    if not args.label:
        raise DataError("logregr requires --label")
    data = _dataset_from_args(args)
    result = logregr_fit(data, tol=args.tol, max_iter=args.max_iter, p=p)
    payload = {
        "coef": result.coef,
        "log_likelihood": result.log_likelihood,
        "num_iterations": result.num_iterations,
        "converged": result.converged,
    }
    ledger = {
        "iterations": result.num_iterations,
        "diagnostics": result.ledger.diagnostics(),
    }
    return payload, ledger, (data.n_rows, data.n_features), 0 if result.converged else 2


def cmd_kmeans(args):
    p = _require_partitions(args)
    data = _dataset_from_args(args, need_label=False)
    result = kmeans_fit(
        data,
        args.k,
        seeding=args.seeding,
        rng_seed=args.seed,
        max_iter=args.max_iter,
        reassign_tol=args.reassign_tol,
        p=p,
    )
    sizes = np.bincount(result.assignments, minlength=args.k)
    payload = {
        "centroids": result.centroids.T,  # one row per centroid
        "objective": result.objective,
        "iterations": result.iterations,
        "frac_reassigned": result.frac_reassigned_final,
        "cluster_sizes": sizes,
        "converged": result.converged,
    }
    ledger = {
        "iterations": result.iterations,
        "diagnostics": result.ledger.diagnostics(),
    }
    return payload, ledger, (data.n_rows, data.n_features), 0 if result.converged else 2


def cmd_sgd(args):
    p = _require_partitions(args)
    if not args.label:
        raise DataError("sgd requires --label")
    data = _dataset_from_args(args)
    kind = "svm_hinge" if args.objective == "hinge" else args.objective
    if kind in ("logistic", "svm_hinge"):
        # CSV labels follow the 0/1 convention; these losses want -1/+1
        y = data.labels
        bad = (y != 0.0) & (y != 1.0)
        if bad.any():
            raise DataError(f"labels must be 0 or 1, got {y[bad][0]}")
        data = Dataset(data.features, 2.0 * y - 1.0)
    obj = Objective(kind, mu=args.mu, rank=args.rank if kind == "recommendation" else None)
    model, trace = sgd_fit(data, obj, alpha0=args.alpha0, epochs=args.epochs,
                           rng_seed=args.seed, p=p)
    payload = {
        "objective_kind": args.objective,
        "final_objective": trace[-1].objective,
        "epochs": len(trace),
        "trace": [{"epoch": t.epoch, "objective": t.objective, "alpha": t.alpha} for t in trace],
    }
    if model.x is not None:
        payload["coef"] = model.x
    else:
        payload["l_factor"] = model.L
        payload["r_factor"] = model.R
    ledger = {"iterations": len(trace), "diagnostics": [t.objective for t in trace]}
    return payload, ledger, (data.n_rows, data.n_features), 0


def cmd_sketch(args):
    p = _require_partitions(args)
    if args.kind == "cm":
        sketch = CountMinSketch.load(args.load) if args.load else None
        if args.data:
            items = ingest_items(args.data, column=args.features)
            spec = cm_fold_spec(args.eps, args.delta, args.seed)
            streamed = fold_source(spec, items, p)
            sketch = streamed if sketch is None else cm_merge(sketch, streamed)
        if sketch is None:
            sketch = CountMinSketch(args.eps, args.delta, args.seed)
        payload = {
            "kind": "cm",
            "depth": sketch.depth,
            "width": sketch.width,
            "total": sketch.total,
        }
        if args.query is not None:
            payload["query"] = args.query
            payload["estimate"] = sketch.estimate(args.query)
        n = sketch.total
    else:
        sketch = FMSketch.load(args.load) if args.load else None
        if args.data:
            items = ingest_items(args.data, column=args.features)
            spec = fm_fold_spec(args.bitmaps, args.seed)
            streamed = fold_source(spec, items, p)
            sketch = streamed if sketch is None else fm_merge(sketch, streamed)
        if sketch is None:
            sketch = FMSketch(args.bitmaps, args.seed)
        payload = {
            "kind": "fm",
            "bitmaps": sketch.num_bitmaps,
            "distinct_estimate": sketch.estimate(),
        }
        n = 0
    if args.save:
        sketch.save(args.save)
        payload["saved_to"] = args.save
    return payload, None, (n, 1), 0


def _synthetic_regression(rng, rows, k):
    X = rng.uniform(-1.0, 1.0, size=(rows, k))
    b_true = rng.uniform(-1.0, 1.0, size=k)
    y = X @ b_true + rng.normal(0.0, 0.1, size=rows)
    return Dataset(X, y)


def cmd_bench(args):
    vars_list = [int(v) for v in args.vars.split(",")]
    threads_list = [int(t) for t in args.threads.split(",")]
    if args.repeats < 1 or not vars_list or not threads_list:
        raise DataError("bench needs repeats >= 1 and non-empty vars/threads lists")
    if min(vars_list) < 1 or min(threads_list) < 1 or args.rows < 1:
        raise DataError("bench sizes must be positive")
    needed = args.rows * (max(vars_list) + 2) * 8 * 2.5
    available = psutil.virtual_memory().available
    if needed > available:
        raise SizingError(
            f"benchmark needs about {needed / 1e9:.1f} GB but only "
            f"{available / 1e9:.1f} GB is available"
        )

    spec = linregr_spec()
    runs = []
    fold_medians = {}
    # pin BLAS to one thread so measured scaling is the fold executor's own
    with threadpool_limits(limits=1):
        for k in vars_list:
            rng = np.random.default_rng(args.seed + k)
            data = _synthetic_regression(rng, args.rows, k)
            for p in threads_list:
                fold_times, final_times, payloads = [], [], []
                for _ in range(args.repeats):
                    t0 = time.perf_counter()
                    state = fold_source(spec, data, p)
                    t1 = time.perf_counter()
                    result = spec.final(state)
                    t2 = time.perf_counter()
                    fold_times.append(t1 - t0)
                    final_times.append(t2 - t1)
                    payloads.append(_jsonify({"coef": result.coef, "r2": result.r2}))
                fold_med = float(np.median(fold_times))
                fold_medians[(k, p)] = fold_med
                runs.append({
                    "vars": k,
                    "threads": p,
                    "rows": args.rows,
                    "result": payloads[0],
                    "results_identical": all(pl == payloads[0] for pl in payloads),
                    "fold_seconds": fold_med,
                    "final_seconds": float(np.median(final_times)),
                    "seconds_median": float(np.median(np.add(fold_times, final_times))),
                    "seconds_all": [a + b for a, b in zip(fold_times, final_times)],
                })
            del data

    base_p = min(threads_list)
    if len(vars_list) >= 2:
        xs = np.log([float(k) for k in vars_list])
        ys = np.log([fold_medians[(k, base_p)] for k in vars_list])
        exponent = float(np.polyfit(xs, ys, 1)[0])
    else:
        exponent = None
    speedups = [
        {
            "vars": k,
            "threads": p,
            "speedup": fold_medians[(k, base_p)] / fold_medians[(k, p)],
        }
        for k in vars_list
        for p in threads_list
    ]
    payload = {
        "algo": args.algo,
        "rows": args.rows,
        "repeats": args.repeats,
        "vars": vars_list,
        "threads": threads_list,
        "runs": runs,
        "per_row_exponent": exponent,
        "baseline_threads": base_p,
        "speedups": speedups,
    }
    return payload, None, (args.rows, None), 0


_COMMANDS = {
    "linregr": cmd_linregr,
    "logregr": cmd_logregr,
    "kmeans": cmd_kmeans,
    "sgd": cmd_sgd,
    "sketch": cmd_sketch,
    "bench": cmd_bench,
}


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _render_text(report):
    lines = []
    ds = report["dataset"]
    lines.append(f"command: {' '.join(report['command'])}")
    lines.append(f"dataset: n={ds['n']} d={ds['d']}")
    lines.append(f"partitions: {report['partitions']}")
    lines.append(f"elapsed_ms: {_fmt(report['elapsed_ms'])}")
    payload = report["payload"]
    if "runs" in payload:
        lines.append(f"{'threads':>8} {'vars':>6} {'rows':>10} {'seconds':>10}")
        for run in payload["runs"]:
            lines.append(
                f"{run['threads']:>8} {run['vars']:>6} {run['rows']:>10} "
                f"{run['seconds_median']:>10.4g}"
            )
        if payload.get("per_row_exponent") is not None:
            lines.append(f"per_row_exponent: {_fmt(payload['per_row_exponent'])}")
        for s in payload["speedups"]:
            lines.append(
                f"speedup vars={s['vars']} threads={s['threads']}: {_fmt(s['speedup'])}"
            )
        return "\n".join(lines)
    for key, value in payload.items():
        if isinstance(value, list) and value and isinstance(value[0], dict):
            continue  # traces are JSON-only detail
        if isinstance(value, list):
            flat = ", ".join(_fmt(v) if v is not None else "null" for v in value)
            lines.append(f"{key}: [{flat}]")
        elif isinstance(value, dict):
            continue
        else:
            lines.append(f"{key}: {_fmt(value) if value is not None else 'null'}")
    return "\n".join(lines)


def schema_text():
    """The published JSON schema for run reports, as shipped in-package."""
    return resources.files("foldml").joinpath("schemas/runreport.schema.json").read_text()


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = _COMMANDS[args.command]
    t0 = time.perf_counter()
    try:
        payload, ledger, (n, d), code = handler(args)
    except PerfectSeparationError as exc:
        _emit_error("PerfectSeparationError", str(exc))
        return 2
    except DivergenceError as exc:
        _emit_error("DivergenceError", str(exc))
        return 2
    except (DataError, DimensionError, SizingError, NumericError, ValueError, OSError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    elapsed_ms = (time.perf_counter() - t0) * 1000.0
    report = {
        "command": argv,
        "dataset": {"n": n, "d": d},
        "partitions": getattr(args, "partitions", 1),
        "elapsed_ms": elapsed_ms,
        "payload": _jsonify(payload),
        "ledger": _jsonify(ledger),
    }
    if args.json:
        sys.stdout.write(json.dumps(report) + "\n")
    else:
        sys.stdout.write(_render_text(report) + "\n")
    sys.stdout.flush()
    return code


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
