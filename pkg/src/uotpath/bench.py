"""Timing harness and log-log complexity fit."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .mm import MmConfig, solve_mm
from .regpath import compute_path
from .srpath import compute_sr_path
from .synthetic import make_gaussian_problem

__all__ = ["BenchRecord", "SOLVERS", "run_scaling", "fit_exponent", "CSV_HEADER", "record_rows"]

logger = logging.getLogger(__name__)

SOLVERS = ("path", "sr-path", "mm-l2", "mm-kl")
CSV_HEADER = ("solver", "n", "m", "lambda", "repeat", "wall_time_s", "iters")


@dataclass(frozen=True)
class BenchRecord:
    solver: str
    n: int
    m: int
    lam: float
    repeat: int
    wall_time: float
    iterations: int
    objective: float
    error: str | None = None


def _run_one(solver, C, a, b, lam, mm_config):
    """Return ``(seconds, iterations, objective)``; only the solver call is timed."""
    if solver == "path":
        t0 = time.perf_counter()
        path = compute_path(C, a, b)
        dt = time.perf_counter() - t0
        return dt, len(path.segments), float("nan")
    if solver == "sr-path":
        t0 = time.perf_counter()
        path = compute_sr_path(C, a, b)
        dt = time.perf_counter() - t0
        return dt, len(path.segments), float("nan")
    if solver in ("mm-l2", "mm-kl"):
        t0 = time.perf_counter()
        rep = solve_mm(solver[3:], C, a, b, lam=lam, config=mm_config)
        dt = time.perf_counter() - t0
        return dt, rep.iterations, rep.final_objective
    raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")


def _task(args):
    solver, size, rep, seed, lam, dim, mm_config = args
    prob = make_gaussian_problem(size, size, dim=dim, seed=seed + size)
    C, a, b = prob.arrays()
    try:
        dt, iters, obj = _run_one(solver, C, a, b, lam, mm_config)
        return BenchRecord(solver, size, size, lam, rep, dt, iters, obj)
    except Exception as exc:  # recorded, not fatal
        logger.warning("%s failed at n=%d repeat=%d: %s", solver, size, rep, exc)
        return BenchRecord(solver, size, size, lam, rep, float("nan"), 0, float("nan"), repr(exc))


def run_scaling(solver, sizes, repeats=5, seed=0, lam=1.0, dim=10, mm_config=None, workers=1):
    """Time ``solver`` on square Gaussian problems of each size.

    One problem is drawn per size (seeded by ``seed + size``) and solved
    ``repeats`` times, yielding one record per (size, repeat). ``workers > 1``
    runs in a process pool; use it for correctness sweeps only, since
    concurrent runs distort timings.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be sorted ascending")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    mm_config = mm_config or MmConfig()
    tasks = [(solver, s, r, seed, lam, dim, mm_config) for s in sizes for r in range(repeats)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_task, tasks))
    return [_task(t) for t in tasks]


def fit_exponent(records):
    """Least-squares slope of ``log(median time)`` against ``log(n)``.

    Returns
    -------
    exponent : float
    r_squared : float
    """
    by_size = {}
    for r in records:
        if r.error is None and r.wall_time > 0:
            by_size.setdefault(r.n, []).append(r.wall_time)
    if len(by_size) < 4:
        raise ValueError(f"need at least 4 distinct sizes, got {len(by_size)}")
    sizes = np.array(sorted(by_size), dtype=np.float64)
    med = np.array([np.median(by_size[int(s)]) for s in sizes])
    x, y = np.log(sizes), np.log(med)
    if np.ptp(x) == 0:
        raise ValueError("sizes have zero spread")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(resid @ resid) / ss_tot
    return float(slope), r2


def record_rows(records):
    for r in records:
        yield (r.solver, r.n, r.m, r.lam, r.repeat, r.wall_time, r.iterations)


def as_dicts(records):
    return [asdict(r) for r in records]
