"""Command-line entry point.

Exit codes: 0 success, 1 optimality check failed, 2 solver hit its iteration
limit (or a path was truncated), 64 bad usage, 65 invalid data, 66 unreadable
input file.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from . import __version__
from .bench import CSV_HEADER, SOLVERS, fit_exponent, record_rows, run_scaling
from .divergence import DivergenceKind, PenaltyWeights, objective
from .errors import FormatError, UOTError
from .ioformat import (export_path, import_path, load_plan, load_problem, problem_hash,
                       save_plan, save_problem, write_csv)
from .mm import MmConfig, ipot_solve, solve_mm
from .oracle import kkt_check
from .regpath import PathOptions, compute_path, eval_path_at, parse_lambda
from .srpath import compute_sr_path, sr_objective
from .synthetic import make_gaussian_problem

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOINPUT = 66

CHECK_TOL = 1e-6
SOLVE_METHODS = ("mm-kl", "mm-l2", "mm-l2-alt", "mm-ruot", "ipot")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x):
    return repr(float(x))


def _emit(key, value):
    print(f"{key}: {value}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _finite(text):
    v = float(text)
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text}")
    return v


# -- subcommands ---------------------------------------------------------------

def cmd_solve(args):
    C, a, b = load_problem(args.problem)
    weight_flags = (args.lambda1, args.lambda2, args.lambda_reg)
    if args.method == "mm-ruot":
        if any(w is None for w in weight_flags):
            raise UsageError("mm-ruot needs --lambda1, --lambda2 and --lambda-reg")
        if args.lam is not None:
            raise UsageError("mm-ruot takes --lambda1/--lambda2/--lambda-reg, not --lambda")
    else:
        if args.lam is None:
            raise UsageError(f"{args.method} needs --lambda")
        if any(w is not None for w in weight_flags):
            raise UsageError("--lambda1/--lambda2/--lambda-reg only apply to mm-ruot")
    if args.method != "ipot" and args.inner_iters is not None:
        raise UsageError("--inner-iters only applies to ipot")

    report = {"method": args.method}
    if args.method == "ipot":
        T, iters, converged = ipot_solve(C, a, b, args.lam, outer_iters=args.max_iters,
                                         inner_iters=args.inner_iters or 1, tol=args.tol,
                                         full_output=True)
        value = float(np.sum(C * T))
        report["lambda"] = args.lam
    else:
        config = MmConfig(max_iters=args.max_iters, rel_tol=args.tol, init=args.init)
        if args.method == "mm-ruot":
            weights = PenaltyWeights(args.lambda1, args.lambda2, args.lambda_reg)
            rep = solve_mm("ruot", C, a, b, weights=weights, config=config)
            report.update(lambda1=args.lambda1, lambda2=args.lambda2, lambda_reg=args.lambda_reg)
        else:
            rep = solve_mm(args.method[3:], C, a, b, lam=args.lam, config=config)
            report["lambda"] = args.lam
        T, iters, converged, value = rep.plan, rep.iterations, rep.converged, rep.final_objective
    row_err = float(np.max(np.abs(T.sum(axis=1) - a)))
    col_err = float(np.max(np.abs(T.sum(axis=0) - b)))
    report.update(iterations=iters, objective=value, converged=converged,
                  marginal_errors=[row_err, col_err])
    save_plan(args.out, T, report)
    _emit("method", args.method)
    _emit("objective", _fmt(value))
    _emit("iterations", iters)
    _emit("row_marginal_error", _fmt(row_err))
    _emit("column_marginal_error", _fmt(col_err))
    _emit("converged", str(converged).lower())
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _breakpoint_rows(path, C, a, b):
    for seg in path.segments:
        lam = seg.lambda_lo
        if not lam > 0:
            continue
        T = eval_path_at(path, lam)
        if path.semi_relaxed:
            value = sr_objective(lam, T, C, a)
        else:
            value = objective(DivergenceKind.L2, lam, T, C, a, b)
        yield (float(lam), len(seg.active), float(value))


def cmd_path(args):
    C, a, b = load_problem(args.problem)
    options = PathOptions(max_segments=args.max_segments)
    path = (compute_sr_path if args.semi_relaxed else compute_path)(C, a, b, options)
    export_path(args.out, path, problem=(C, a, b))
    csv_file = args.csv or _sibling(args.out, ".csv")
    write_csv(csv_file, ("lambda", "active_size", "objective"), _breakpoint_rows(path, C, a, b))
    _emit("segments", len(path.segments))
    _emit("first_breakpoint", _fmt(path.segments[0].lambda_lo) if path.segments else "none")
    _emit("terminal_balanced", str(path.terminal_balanced).lower())
    _emit("truncated", str(path.truncated).lower())
    _emit("breakpoints_csv", csv_file)
    return EXIT_NOT_CONVERGED if path.truncated else EXIT_OK


def _sibling(file, suffix):
    stem = file[:-5] if file.endswith(".json") else file
    return stem + suffix


def cmd_eval_path(args):
    lam = parse_lambda(args.lam)
    path = import_path(args.path)
    T = eval_path_at(path, lam)
    if args.out:
        save_plan(args.out, T, {"lambda": "inf" if math.isinf(lam) else lam})
    _emit("lambda", "inf" if math.isinf(lam) else _fmt(lam))
    _emit("mass", _fmt(T.sum()))
    if args.problem:
        C, a, b = load_problem(args.problem)
        if C.shape != T.shape:
            raise FormatError(f"problem is {C.shape[0]}x{C.shape[1]} but path is "
                              f"{T.shape[0]}x{T.shape[1]}")
        _emit("cost", _fmt(np.sum(C * T)))
    return EXIT_OK


def cmd_make_problem(args):
    if not 0 <= args.outliers <= args.m:
        raise UsageError(f"--outliers must lie in [0, {args.m}]")
    prob = make_gaussian_problem(args.n, args.m, dim=args.dim, seed=args.seed, metric=args.metric,
                                 outliers=args.outliers, outlier_shift=args.outlier_shift)
    save_problem(args.out, prob.a, prob.b, X=prob.X, Y=prob.Y, metric=prob.metric, meta=prob.meta)
    _emit("problem_hash", problem_hash(*prob.arrays()))
    return EXIT_OK


def cmd_bench(args):
    try:
        sizes = sorted(int(s) for s in args.sizes.split(","))
    except ValueError:
        raise UsageError(f"--sizes must be a comma-separated list of integers, got {args.sizes!r}")
    if not sizes or sizes[0] < 1:
        raise UsageError("--sizes must be positive")
    records = run_scaling(args.solver, sizes, repeats=args.repeats, seed=args.seed, lam=args.lam,
                          dim=args.dim, workers=args.workers)
    write_csv(args.out, CSV_HEADER, record_rows(records))
    failures = sum(r.error is not None for r in records)
    _emit("records", len(records))
    _emit("failures", failures)
    if len(set(sizes)) >= 4:
        slope, r2 = fit_exponent(records)
        _emit("exponent", f"{slope:.4f}")
        _emit("r_squared", f"{r2:.4f}")
    else:
        _emit("exponent", "n/a (need at least 4 sizes)")
    return EXIT_OK


def cmd_check(args):
    lam = parse_lambda(args.lam)
    if math.isinf(lam):
        raise UsageError("check needs a finite --lambda")
    C, a, b = load_problem(args.problem)
    T = load_plan(args.plan)
    if T.shape != C.shape:
        raise FormatError(f"plan is {T.shape[0]}x{T.shape[1]} but problem is "
                          f"{C.shape[0]}x{C.shape[1]}", field="plan")
    res = kkt_check("semi-relaxed" if args.semi_relaxed else "full", T, lam, C, a, b)
    _emit("stationarity_active", _fmt(res.stationarity_active))
    _emit("dual_feasibility", _fmt(res.dual_feasibility))
    _emit("complementarity", _fmt(res.complementarity))
    if args.semi_relaxed:
        _emit("primal_feasibility", _fmt(res.primal_feasibility))
    ok = res.ok(CHECK_TOL)
    _emit("status", "ok" if ok else "violated")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- parser ----------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="uotpath", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run a multiplicative solver or IPOT")
    p.add_argument("--problem", required=True)
    p.add_argument("--out", required=True, help="plan file to write")
    p.add_argument("--method", required=True, choices=SOLVE_METHODS)
    p.add_argument("--lambda", dest="lam", type=_finite)
    p.add_argument("--lambda1", type=_finite)
    p.add_argument("--lambda2", type=_finite)
    p.add_argument("--lambda-reg", dest="lambda_reg", type=_finite)
    p.add_argument("--tol", type=_finite, default=1e-10,
                   help="relative objective change (MM) or max plan change (ipot)")
    p.add_argument("--max-iters", type=_positive_int, default=100_000)
    p.add_argument("--inner-iters", type=_positive_int, help="Sinkhorn steps per ipot iteration")
    p.add_argument("--init", choices=("outer", "uniform"), default="outer")
    p.add_argument("--seed", type=int, default=0, help="unused; solvers are deterministic")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("path", help="compute the l2 regularization path")
    p.add_argument("--problem", required=True)
    p.add_argument("--out", required=True, help="path file to write")
    p.add_argument("--csv", help="breakpoints CSV (default: next to --out)")
    p.add_argument("--semi-relaxed", action="store_true", help="enforce column sums exactly")
    p.add_argument("--max-segments", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0, help="unused; the path is deterministic")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("eval-path", help="evaluate a stored path at one lambda")
    p.add_argument("--path", required=True)
    p.add_argument("--lambda", dest="lam", required=True, help="positive number or 'inf'")
    p.add_argument("--out", help="plan file to write")
    p.add_argument("--problem", help="problem file; when given, the transport cost is printed")
    p.add_argument("--seed", type=int, default=0, help="unused")
    p.set_defaults(func=cmd_eval_path)

    p = sub.add_parser("make-problem", help="sample a Gaussian point-cloud problem")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--dim", type=_positive_int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", choices=("sqeuclidean", "euclidean"), default="sqeuclidean")
    p.add_argument("--outliers", type=int, default=0)
    p.add_argument("--outlier-shift", type=_finite, default=10.0)
    p.set_defaults(func=cmd_make_problem)

    p = sub.add_parser("bench", help="time a solver over problem sizes")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--solver", choices=SOLVERS, default="path")
    p.add_argument("--sizes", default="20,40,60,80,100")
    p.add_argument("--repeats", type=_positive_int, default=5)
    p.add_argument("--lambda", dest="lam", type=_finite, default=1.0)
    p.add_argument("--dim", type=_positive_int, default=10)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--problem", help="unused; bench samples its own problems")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="KKT residuals of a plan for the l2 problem")
    p.add_argument("--problem", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--lambda", dest="lam", required=True)
    p.add_argument("--semi-relaxed", action="store_true")
    p.add_argument("--out", help="unused")
    p.add_argument("--seed", type=int, default=0, help="unused")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"uotpath {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UOTError, ValueError) as exc:
        print(f"uotpath {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"uotpath {args.command}: {exc}", file=sys.stderr)
        return EXIT_NOINPUT


if __name__ == "__main__":
    sys.exit(main())
