"""Acceptance suite: twelve end-to-end criteria at their stated tolerances.

Each criterion prints one ``PASS``/``FAIL`` line (shown with ``pytest -s`` and
repeated in the terminal summary). Run directly with
``python tests/test_acceptance.py`` for the bare report.
"""

import math
import time

import numpy as np
import pytest

from uotpath.bench import BenchRecord, fit_exponent, run_scaling
from uotpath.divergence import DivergenceKind, PenaltyWeights, bregman
from uotpath.errors import DegenerateError
from uotpath.mm import MmConfig, initial_plan, ipot_solve, mm_kl_step, mm_l2_step, mm_ruot_step, solve_mm
from uotpath.oracle import (balanced_ot_bruteforce, kkt_check, projected_gradient_l2,
                            projected_gradient_sr)
from uotpath.regpath import (ActiveSet, GramInverseCache, compute_path, eval_path_at, schur_add,
                             schur_remove)
from uotpath.srpath import compute_sr_path
from uotpath.synthetic import make_gaussian_problem

RESULTS = []


def _random(seed, n, m, balanced=False):
    rng = np.random.default_rng(seed)
    C = rng.uniform(0.1, 2.0, (n, m))
    a, b = rng.uniform(0.2, 1.0, n), rng.uniform(0.2, 1.0, m)
    if balanced:
        b *= a.sum() / b.sum()
    return C, a, b


def _segment_plan(path, seg, lam):
    t = np.zeros(path.n * path.m)
    t[list(seg.active)] = seg.m_tilde - (0.0 if math.isinf(lam) else seg.c_tilde / lam)
    return t.reshape(path.n, path.m)


def _midpoints(path):
    out = []
    for seg in path.segments:
        if math.isinf(seg.lambda_hi):
            out.append(2.0 * max(seg.lambda_lo, 1e-3))
        else:
            out.append(0.5 * (seg.lambda_lo + seg.lambda_hi))
    return out


def _probe_lambdas(path, count, seed):
    """All segment midpoints, topped up with log-uniform draws to ``count`` values."""
    lams = _midpoints(path)
    lo = max(path.segments[0].lambda_lo, 1e-3) * 0.5
    hi = 20.0 * max(path.segments[-1].lambda_lo, lo)
    rng = np.random.default_rng(seed)
    while len(lams) < count:
        lams.append(float(np.exp(rng.uniform(np.log(lo), np.log(hi)))))
    return lams


# -- criteria -------------------------------------------------------------------

def mm_descent():
    t0 = time.perf_counter()
    worst, traces = 0.0, 0
    config = MmConfig(max_iters=600, rel_tol=1e-13, record_trace=True)
    for seed in range(50):
        C, a, b = _random(seed, 20, 20)
        for lam in (0.1, 1.0, 10.0):
            for method in ("kl", "l2"):
                F = np.asarray(solve_mm(method, C, a, b, lam=lam, config=config).objective_trace)
                rel = np.diff(F) / np.maximum(np.abs(F[:-1]), 1e-300)
                worst = max(worst, float(rel.max(initial=0.0)))
                traces += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 30.0
    return ok, f"worst relative increase {worst:.2e} over {traces} traces in {elapsed:.1f} s"


def support_certificate():
    rng = np.random.default_rng(2)
    outside_one = outside_conv = 0
    for k in range(100):
        n, m = rng.integers(2, 9, 2)
        C, a, b = _random(1000 + k, n, m)
        ratio = C / (a[:, None] + b[None, :])
        lam = float(rng.uniform(ratio.min(), ratio.max()))
        excluded = lam * (a[:, None] + b[None, :]) < C
        T1 = mm_l2_step(initial_plan(a, b), C, a, b, lam)
        Tc = solve_mm("l2", C, a, b, lam=lam, config=MmConfig(rel_tol=1e-12, max_iters=50_000)).plan
        outside_one += int(np.count_nonzero(T1[excluded]))
        outside_conv += int(np.count_nonzero(Tc[excluded]))
    ok = outside_one == 0 and outside_conv == 0
    return ok, f"nonzero entries outside certificate: {outside_one} after one step, {outside_conv} at convergence"


def fixed_lambda_agreement():
    worst = 0.0
    config = MmConfig(rel_tol=1e-16, plan_tol=1e-13, max_iters=2_000_000)
    for seed in range(20):
        C, a, b = _random(200 + seed, 5, 5)
        for lam in (0.1, 1.0, 10.0):
            T = solve_mm("l2", C, a, b, lam=lam, config=config).plan
            ref = projected_gradient_l2(C, a, b, lam).plan
            worst = max(worst, float(np.max(np.abs(T - ref))))
    return worst <= 1e-6, f"max |mm-l2 - oracle| = {worst:.2e}"


def path_correctness():
    t0 = time.perf_counter()
    worst_gap = worst_kkt = 0.0
    checked = 0
    for seed in range(20):
        C, a, b = _random(300 + seed, 5, 5)
        path = compute_path(C, a, b)
        for lam in _probe_lambdas(path, 20, seed):
            T = eval_path_at(path, lam)
            ref = projected_gradient_l2(C, a, b, lam).plan
            worst_gap = max(worst_gap, float(np.max(np.abs(T - ref))))
            worst_kkt = max(worst_kkt, kkt_check("full", T, lam, C, a, b).worst())
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-6 and worst_kkt <= 1e-8 and elapsed < 60.0
    return ok, (f"{checked} points: max oracle gap {worst_gap:.2e}, max KKT residual "
                f"{worst_kkt:.2e}, {elapsed:.1f} s")


def balanced_limit():
    worst, count, flags = 0.0, 0, 0
    for n in (3, 4):
        for seed in range(10):
            C, a, b = _random(400 + 10 * n + seed, n, n, balanced=True)
            path = compute_path(C, a, b)
            cost, _ = balanced_ot_bruteforce(C, a, b)
            worst = max(worst, abs(float(np.sum(C * eval_path_at(path, math.inf))) - cost))
            flags += int(path.terminal_balanced)
            count += 1
    ok = worst <= 1e-8 and count >= 20
    return ok, f"{count} instances ({flags} flagged balanced): max cost gap {worst:.2e}"


def piecewise_linearity():
    paths = []
    for seed in range(20):
        paths.append(compute_path(*_random(300 + seed, 5, 5)))
        if seed < 10:
            paths.append(compute_sr_path(*_random(500 + seed, 4, 4)))
    rng = np.random.default_rng(6)
    collinear = jump = 0.0
    segments = 0
    for path in paths:
        for k, seg in enumerate(path.segments):
            s_hi = 0.0 if math.isinf(seg.lambda_hi) else 1.0 / seg.lambda_hi
            s_lo = 1.0 / seg.lambda_lo if seg.lambda_lo > 0 else 2.0 * s_hi + 1.0
            s = np.sort(rng.uniform(s_hi, s_lo, 3))
            s[0] = max(s[0], 1e-300)
            P = [eval_path_at(path, 1.0 / x) if x > 0 else eval_path_at(path, math.inf) for x in s]
            w = (s[1] - s[0]) / (s[2] - s[0])
            collinear = max(collinear, float(np.max(np.abs(P[1] - ((1 - w) * P[0] + w * P[2])))))
            segments += 1
            if k + 1 < len(path.segments):
                nxt = path.segments[k + 1]
                gap = _segment_plan(path, seg, seg.lambda_hi) - _segment_plan(path, nxt, nxt.lambda_lo)
                jump = max(jump, float(np.max(np.abs(gap))))
            if k == 0 and not path.semi_relaxed:
                jump = max(jump, float(np.max(np.abs(_segment_plan(path, seg, seg.lambda_lo)))))
    ok = collinear <= 1e-10 and jump <= 1e-9
    return ok, f"{segments} segments: collinearity {collinear:.2e}, breakpoint jump {jump:.2e}"


def schur_consistency():
    worst, steps = 0.0, 0
    for seed in range(5):
        rng = np.random.default_rng(700 + seed)
        active, cache = ActiveSet((), 6), GramInverseCache()
        for _ in range(200):
            inactive = [q for q in range(36) if q not in active]
            if len(active) and (rng.random() < 0.4 or len(active) >= 11):
                q = int(rng.choice(active.members))
                cache, active = schur_remove(cache, q, active), active.removed(q)
            else:
                for q in rng.permutation(inactive):
                    try:
                        GramInverseCache.direct(active.added(int(q)))
                    except DegenerateError:
                        continue
                    cache, active = schur_add(cache, int(q), active), active.added(int(q))
                    break
            if len(active):
                direct = np.linalg.inv(active.gram_matrix())
                worst = max(worst, float(np.max(np.abs(cache.inverse - direct))))
            steps += 1
    return worst <= 1e-8, f"{steps} add/remove steps: max |incremental - direct| = {worst:.2e}"


def semi_relaxed_feasibility():
    col_err = gap = 0.0
    points = 0
    for seed in range(10):
        C, a, b = _random(500 + seed, 4, 4)
        path = compute_sr_path(C, a, b)
        lams = _probe_lambdas(path, 12, seed)
        for lam in lams + [s.lambda_lo for s in path.segments[1:]] + [math.inf]:
            T = eval_path_at(path, lam)
            col_err = max(col_err, float(np.max(np.abs(T.sum(axis=0) - b))))
            points += 1
        for lam in lams:
            ref = projected_gradient_sr(C, a, b, lam).plan
            gap = max(gap, float(np.max(np.abs(eval_path_at(path, lam) - ref))))
    ok = col_err <= 1e-10 and gap <= 1e-6
    return ok, f"{points} points: column-sum error {col_err:.2e}, oracle gap {gap:.2e}"


def reduction_identities():
    rng = np.random.default_rng(9)
    step_gap = homog = 0.0
    for k in range(50):
        n, m = rng.integers(1, 7, 2)
        C, a, b = _random(900 + k, n, m)
        T = rng.uniform(0.0, 1.0, (n, m))
        lam = float(np.exp(rng.uniform(-3, 3)))
        kl = mm_kl_step(T, C, a, b, lam)
        ru = mm_ruot_step(T, C, a, b, PenaltyWeights(lam, lam, 0.0))
        step_gap = max(step_gap, float(np.max(np.abs(kl - ru))) / max(1.0, float(np.abs(kl).max())))
        x, y = rng.uniform(0.01, 3.0, 6), rng.uniform(0.01, 3.0, 6)
        for kind in DivergenceKind:
            s = lam ** kind.alpha
            lhs = lam * bregman(kind, x, y)
            homog = max(homog, abs(lhs - bregman(kind, s * x, s * y)) / max(1.0, abs(lhs)))
    ok = step_gap <= 1e-14 and homog <= 1e-12
    return ok, f"ruot vs kl step gap {step_gap:.2e}, homogeneity gap {homog:.2e}"


def ipot_agreement():
    worst = 0.0
    for seed in range(10):
        C, a, b = _random(1100 + seed, 3, 3, balanced=True)
        T = ipot_solve(C, a, b, 1.0, outer_iters=20_000)
        cost, _ = balanced_ot_bruteforce(C, a, b)
        worst = max(worst, abs(float(np.sum(C * T)) - cost))
    return worst <= 1e-6, f"max |ipot cost - LP cost| = {worst:.2e}"


def complexity_trend():
    sizes = [10, 20, 40, 80, 160]
    synth = [BenchRecord("synthetic", n, n, 1.0, 0, n**3 * 1e-9, 1, 0.0) for n in sizes]
    slope3, r2_3 = fit_exponent(synth)
    records = run_scaling("path", [20, 40, 60, 100, 140, 200], repeats=3, seed=0)
    slope, r2 = fit_exponent(records)
    t100 = max(r.wall_time for r in records if r.n == 100)
    failures = sum(r.error is not None for r in records)
    ok = abs(slope3 - 3.0) <= 0.01 and r2_3 >= 0.999 and r2 >= 0.95 and t100 < 60.0 and not failures
    return ok, (f"synthetic exponent {slope3:.4f}; path exponent {slope:.2f} (r^2 {r2:.3f}); "
                f"n=100 in {t100:.2f} s")


def outlier_detection():
    prob = make_gaussian_problem(30, 30, dim=2, seed=0, outliers=3)
    C, a, b = prob.arrays()
    outliers = set(prob.meta["outliers"])
    path = compute_path(C, a, b)
    lams = sorted({s.lambda_lo for s in path.segments} | set(_midpoints(path)))
    hits = []
    for lam in lams:
        if lam <= 0:
            continue
        received = eval_path_at(path, lam).sum(axis=0)
        if set(np.flatnonzero(received < 0.25 * b)) == outliers:
            hits.append(lam)
    if not hits:
        return False, f"no lambda among {len(lams)} separates outliers {sorted(outliers)}"
    return True, (f"{len(hits)} of {len(lams)} swept lambdas separate outliers {sorted(outliers)}, "
                  f"e.g. lambda={hits[len(hits) // 2]:.4g}")


CRITERIA = [
    (1, "mm-descent", mm_descent),
    (2, "support-certificate", support_certificate),
    (3, "fixed-lambda-agreement", fixed_lambda_agreement),
    (4, "path-correctness", path_correctness),
    (5, "balanced-limit", balanced_limit),
    (6, "piecewise-linearity", piecewise_linearity),
    (7, "schur-consistency", schur_consistency),
    (8, "semi-relaxed-feasibility", semi_relaxed_feasibility),
    (9, "reduction-identities", reduction_identities),
    (10, "ipot-agreement", ipot_agreement),
    (11, "complexity-trend", complexity_trend),
    (12, "outlier-detection", outlier_detection),
]


def _report(number, name, fn):
    ok, detail = fn()
    line = f"{'PASS' if ok else 'FAIL'} {number:2d} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok, line


@pytest.mark.parametrize("number, name, fn", CRITERIA, ids=[f"{k:02d}-{n}" for k, n, _ in CRITERIA])
def test_criterion(number, name, fn):
    ok, line = _report(number, name, fn)
    assert ok, line


if __name__ == "__main__":
    for number, name, fn in CRITERIA:
        _report(number, name, fn)
