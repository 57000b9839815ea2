"""Command-line interface: ``mrct {simulate,fit,select-alpha,scan-h,evaluate}``.

Indices in every output file are 0-based.  Exit codes: 0 success, 2 bad input
or flags, 3 numerical failure, 4 the search did not converge (outputs are still
written and the report says so).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys

import numpy as np

from .alpha_select import fit_auto, h_scan, standardized_eigvals
from .coeff import BasisSpec, SparseCurves, fit_coefficients
from .core import MrctConfig
from .errors import MrctError, NumericalError, ParseError
from .funcdata import FunctionalSample, Grid
from .metrics import confusion_rates, f_score, ise, sample_cov
from .simulate import ModelSpec, model_dataset, true_kernel_matrix

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_NONCONV = 0, 2, 3, 4


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# ingestion


def _read_text(path):
    if path in (None, "-"):
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc


def _float(cell, line):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell {cell!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite cell {cell!r}", line)
    return v


def ingest_dense(path, label_column: bool = False) -> FunctionalSample:
    """Rows are curves.  An optional first row ``#grid,t1,...,tp[,label]`` fixes the grid.

    Without a grid row the grid is ``linspace(0, 1, p)``.  A trailing label
    column (0/1) is expected when the grid row ends in ``label`` or when
    ``label_column`` is set.
    """
    rows = [(i + 1, r) for i, r in enumerate(csv.reader(io.StringIO(_read_text(path)))) if r]
    if not rows:
        raise ParseError("empty input")
    grid = None
    if rows[0][1][0].strip().lower() == "#grid":
        line, head = rows.pop(0)
        cells = [c.strip() for c in head[1:]]
        if cells and cells[-1].lower() == "label":
            label_column = True
            cells = cells[:-1]
        pts = [_float(c, line) for c in cells]
        if len(pts) < 2 or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ParseError("grid must have at least two strictly increasing points", line)
        grid = Grid(pts)
    if not rows:
        raise ParseError("no data rows")
    width = len(rows[0][1])
    values, labels = [], []
    for line, r in rows:
        if len(r) != width:
            raise ParseError(f"expected {width} columns, found {len(r)}", line)
        if label_column:
            lab = r[-1].strip()
            if lab not in ("0", "1"):
                raise ParseError(f"label must be 0 or 1, got {lab!r}", line)
            labels.append(lab == "1")
            r = r[:-1]
        values.append([_float(c, line) for c in r])
    p = len(values[0])
    if grid is None:
        if p < 2:
            raise ParseError("need at least two columns of values")
        grid = Grid.uniform(p)
    elif grid.p != p:
        raise ParseError(f"grid has {grid.p} points but rows have {p} values", rows[0][0])
    return FunctionalSample(grid, np.array(values), np.array(labels) if label_column else None)


def ingest_sparse(path) -> SparseCurves:
    """Long format with header ``curve_id,t,value``; curves keep first-appearance order."""
    reader = csv.reader(io.StringIO(_read_text(path)))
    rows = [(i + 1, r) for i, r in enumerate(reader) if r]
    if not rows:
        raise ParseError("empty input")
    line, head = rows[0]
    if [c.strip() for c in head] != ["curve_id", "t", "value"]:
        raise ParseError("header must be curve_id,t,value", line)
    if len(rows) == 1:
        raise ParseError("no observations")
    groups = {}
    seen = set()
    for line, r in rows[1:]:
        if len(r) != 3:
            raise ParseError(f"expected 3 columns, found {len(r)}", line)
        cid = r[0].strip()
        t, v = _float(r[1], line), _float(r[2], line)
        if (cid, t) in seen:
            raise ParseError(f"duplicate observation for curve {cid!r} at t={r[1].strip()}", line)
        seen.add((cid, t))
        ts, vs = groups.setdefault(cid, ([], []))
        ts.append(t)
        vs.append(v)
    ids = list(groups)
    return SparseCurves(ids, [groups[i][0] for i in ids], [groups[i][1] for i in ids])


def sparse_basis(curves: SparseCurves, m_max: int, degree: int) -> BasisSpec:
    """Cap the basis size by the sparsest curve (never below ``degree + 1``)."""
    a, b = curves.domain
    if not b > a:
        raise ParseError("sparse observations span a single time point")
    m = max(degree + 1, min(m_max, min(curves.counts)))
    return BasisSpec(m, degree, a, b)


def load_sample(args):
    if args.format == "sparse":
        curves = ingest_sparse(args.input)
        basis = sparse_basis(curves, args.basis_m, args.basis_degree)
        return fit_coefficients(curves, basis), basis
    return ingest_dense(args.input, args.labels), None


# --------------------------------------------------------------------------
# reports


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(c if isinstance(c, str) else fmt(c) if isinstance(c, float) else str(c) for c in row))
            fh.write("\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def emit_report(out, result, run_info, alpha_trace=None, scan=None, extra=None):
    """Write ``report.json``, ``distances.csv``, ``scree.csv`` and any plot-data files."""
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    d = result.distances
    report = {
        "alpha": result.alpha,
        "k": result.k,
        "h": result.h,
        "n": int(d.size),
        "subset": list(result.subset.indices),
        "cutoff": result.cutoff,
        "trace_objective": result.trace_objective,
        "n_flagged": int(result.flags.sum()),
        "converged": {
            "fixed_point": result.converged,
            "n_starts_fixed_point": result.n_starts_converged,
            "k": result.k_converged,
            "alpha_selection": None if alpha_trace is None else alpha_trace.converged,
        },
        "config": result.config.to_dict(),
        "run": run_info,
        "curves": [
            {"index": i, "distance": float(d[i]), "flagged": bool(result.flags[i])} for i in range(d.size)
        ],
    }
    if extra:
        report.update(extra)
    path = os.path.join(out, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2)
        fh.write("\n")
    _write_csv(
        os.path.join(out, "distances.csv"),
        ["index", "distance", "flag"],
        [(i, float(d[i]), int(result.flags[i])) for i in range(d.size)],
    )
    lam = result.robust_eigvals
    st = standardized_eigvals(lam, result.alpha)
    _write_csv(
        os.path.join(out, "scree.csv"),
        ["i", "robust_eigval", "standardized_eigval"],
        [(i + 1, float(a), float(b)) for i, (a, b) in enumerate(zip(lam, st))],
    )
    if alpha_trace is not None:
        _write_csv(
            os.path.join(out, "alpha_objective.csv"),
            ["alpha", "g"],
            [(float(a), float(g)) for a, g in zip(alpha_trace.grid, alpha_trace.g_values)],
        )
    if scan is not None:
        shift = np.concatenate([[np.nan], scan.cov_shift])
        _write_csv(
            os.path.join(out, "h_scan.csv"),
            ["h", "objective", "cov_shift"],
            [(int(h), float(o), float(s)) for h, o, s in zip(scan.h_values, scan.objective, shift)],
        )
    return path


# --------------------------------------------------------------------------
# argument handling


def _alpha(text):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a positive number or 'auto', got {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError("alpha must be positive")
    return v


def _selection(text):
    if text in ("trace", "kurtosis"):
        return text, None
    if text.startswith("trace-q="):
        try:
            q = float(text.split("=", 1)[1])
        except ValueError:
            q = float("nan")
        if not 0 < q <= 1:
            raise argparse.ArgumentTypeError("trace-q needs q in (0, 1]")
        return "trace_q", q
    raise argparse.ArgumentTypeError("selection must be trace, trace-q=<q> or kurtosis")


def _add_fit_flags(p, alpha_default="auto"):
    p.add_argument("--input", default="-", help="input CSV, '-' for stdin (default)")
    p.add_argument("--format", choices=("dense", "sparse"), default="dense")
    p.add_argument("--labels", action="store_true", help="dense input has a trailing 0/1 label column")
    p.add_argument("--alpha", type=_alpha, default=alpha_default, help="positive value or 'auto'")
    p.add_argument("--h-frac", type=float, default=0.75)
    p.add_argument("--h", type=int, default=None, help="subset size (overrides --h-frac)")
    p.add_argument("--n-starts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff-q", type=float, default=0.99)
    p.add_argument("--mc-n", type=int, default=2000)
    p.add_argument("--basis-m", type=int, default=15, help="maximum basis size for sparse input")
    p.add_argument("--basis-degree", type=int, default=3)
    p.add_argument("--selection", type=_selection, default=("trace", None))
    p.add_argument("--out", default="mrct_out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="mrct", description="Robust covariance and outlier detection for curves.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a contaminated sample from one of the simulation models")
    sim.add_argument("--model", type=int, choices=(1, 2, 3), required=True)
    sim.add_argument("--n", type=int, default=200)
    sim.add_argument("--p", type=int, default=100)
    sim.add_argument("--c", type=float, default=0.0, help="contamination rate")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default="-", help="output CSV, '-' for stdout (default)")

    _add_fit_flags(sub.add_parser("fit", help="fit and write a report"))
    _add_fit_flags(sub.add_parser("select-alpha", help="choose alpha from the data, then fit"))
    scan = sub.add_parser("scan-h", help="refit over a range of subset sizes")
    _add_fit_flags(scan)
    scan.add_argument("--h-min", type=int, default=None)
    scan.add_argument("--h-max", type=int, default=None)
    scan.add_argument("--h-step", type=int, default=1)
    ev = sub.add_parser("evaluate", help="fit labelled data and score the flags")
    _add_fit_flags(ev)
    ev.add_argument("--model", type=int, choices=(1, 2, 3), default=None, help="also report ISE against this model")
    return parser


def config_from_args(args) -> MrctConfig:
    selection, q = args.selection
    kw = {"selection_q": q} if q is not None else {}
    return MrctConfig(
        alpha=args.alpha,
        h=args.h,
        h_frac=args.h_frac,
        n_starts=args.n_starts,
        cutoff_q=args.cutoff_q,
        mc_N=args.mc_n,
        selection=selection,
        seed=args.seed,
        **kw,
    )


def _run_info(args, basis):
    info = {"command": args.command, "input": args.input, "format": args.format}
    if basis is not None:
        info["basis"] = dataclasses.asdict(basis)
    return info


def cmd_simulate(args):
    sample = model_dataset(ModelSpec(args.model, args.n, args.p, args.c, args.seed))
    buf = io.StringIO()
    buf.write(",".join(["#grid", *map(fmt, sample.grid.points), "label"]) + "\n")
    for row, lab in zip(sample.values, sample.labels):
        buf.write(",".join([*map(fmt, row), str(int(lab))]) + "\n")
    if args.out == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    return EXIT_OK


def _summary(result, path):
    print(
        f"alpha={result.alpha:.6g} h={result.h} k={result.k:.6g} cutoff={result.cutoff:.6g} "
        f"flagged={int(result.flags.sum())}/{result.distances.size} converged={result.converged} -> {path}"
    )


def cmd_fit(args):
    sample, basis = load_sample(args)
    cfg = config_from_args(args)
    if args.command == "select-alpha":
        cfg = dataclasses.replace(cfg, alpha="auto")
    result, trace = fit_auto(sample, cfg)
    scan = None
    extra = {}
    if args.command == "scan-h":
        n = sample.n
        lo = args.h_min if args.h_min is not None else -(-n // 2)
        hi = args.h_max if args.h_max is not None else n
        scan = h_scan(sample, result.alpha, range(lo, hi + 1, max(1, args.h_step)), cfg)
    if args.command == "evaluate":
        extra["evaluation"] = evaluate(sample, result, args.model)
    path = emit_report(args.out, result, _run_info(args, basis), trace, scan, extra)
    _summary(result, path)
    ok = result.converged and (trace is None or trace.converged)
    return EXIT_OK if ok else EXIT_NONCONV


def evaluate(sample, result, model_id=None):
    labels = getattr(sample, "labels", None)
    if labels is None:
        raise ParseError("evaluate needs labelled input (a label column)")
    rates = confusion_rates(result.flags, labels)
    out = {"rates": rates.as_dict()}
    out["f_score"] = f_score(rates) if rates.tpr is not None and rates.fpr is not None else None
    if model_id is not None:
        true = true_kernel_matrix(model_id, sample.grid)
        out["ise_robust"] = ise(true, sample_cov(sample.values, ~result.flags))
        out["ise_sample"] = ise(true, sample_cov(sample.values))
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        return cmd_fit(args)
    except NumericalError as exc:
        print(f"mrct: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MrctError, ValueError) as exc:
        print(f"mrct: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"mrct: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
