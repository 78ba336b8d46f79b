import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uotpath.errors import DegenerateError
from uotpath.oracle import balanced_ot_bruteforce, kkt_check, projected_gradient_sr
from uotpath.regpath import PathOptions, eval_path_at
from uotpath.srpath import (SrKktSystem, compute_sr_path, eval_sr_path_at, resolve_sr_ties,
                            sr_initial_plan, sr_multipliers_at, sr_objective)


def _random(seed, n, m, balanced=False):
    rng = np.random.default_rng(seed)
    C = rng.uniform(0.1, 2.0, (n, m))
    a, b = rng.uniform(0.2, 1.0, n), rng.uniform(0.2, 1.0, m)
    if balanced:
        b *= a.sum() / b.sum()
    return C, a, b


def _probe_lambdas(path):
    """Midpoints of every segment (geometric on the last, unbounded one)."""
    out = []
    for seg in path.segments:
        lo = max(seg.lambda_lo, 1e-6)
        hi = seg.lambda_hi if math.isfinite(seg.lambda_hi) else 4 * max(lo, 1.0)
        out.append(0.5 * (lo + hi))
    return out


def test_initial_plan_examples():
    np.testing.assert_array_equal(sr_initial_plan([[1.0, 2.0], [2.0, 1.0]], [3.0, 4.0]),
                                  [[3.0, 0.0], [0.0, 4.0]])
    np.testing.assert_array_equal(sr_initial_plan(np.ones((3, 2)), [1.0, 2.0]),
                                  [[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(sr_initial_plan([[5.0, 1.0, 2.0]], [1.0, 2.0, 3.0]), [[1.0, 2.0, 3.0]])


def test_identity_plan_is_constant(two_by_two):
    C, a, b = two_by_two
    path = compute_sr_path(C, a, b)
    assert len(path.segments) == 1 and path.semi_relaxed
    for lam in (1e-3, 1.0, 1e3, math.inf):
        np.testing.assert_allclose(eval_sr_path_at(path, lam), np.eye(2), atol=1e-14)


def test_single_row_forced():
    path = compute_sr_path([[0.0, 0.0]], [1.0], [0.5, 0.5])
    for lam in (0.1, 1.0, math.inf):
        np.testing.assert_allclose(eval_sr_path_at(path, lam), [[0.5, 0.5]], atol=1e-15)


def test_needs_positive_columns():
    with pytest.raises(DegenerateError):
        compute_sr_path([[1.0, 2.0]], [1.0], [1.0, 0.0])


def test_rejects_full_path():
    from uotpath.regpath import compute_path
    with pytest.raises(ValueError):
        eval_sr_path_at(compute_path([[1.0]], [1.0], [1.0]), 1.0)


def test_below_first_breakpoint_is_initial_plan():
    C, a, b = _random(3, 4, 4)
    path = compute_sr_path(C, a, b)
    lam = 0.5 * path.segments[0].lambda_hi
    np.testing.assert_allclose(eval_sr_path_at(path, lam), sr_initial_plan(C, b), atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_random_matches_oracle(seed):
    C, a, b = _random(100 + seed, 4, 4)
    path = compute_sr_path(C, a, b)
    for lam in _probe_lambdas(path):
        T = eval_sr_path_at(path, lam)
        ref = projected_gradient_sr(C, a, b, lam).plan
        assert np.max(np.abs(T - ref)) <= 1e-6
        assert np.max(np.abs(T.sum(axis=0) - b)) <= 1e-10
    for seg in path.segments[1:]:
        T = eval_sr_path_at(path, seg.lambda_lo)
        assert np.max(np.abs(T.sum(axis=0) - b)) <= 1e-10


def test_kkt_and_multipliers():
    C, a, b = _random(7, 5, 3)
    path = compute_sr_path(C, a, b)
    n, m = C.shape
    for lam in _probe_lambdas(path):
        T = eval_sr_path_at(path, lam)
        assert kkt_check("sr", T, lam, C, a, b).worst() <= 1e-8
        u = sr_multipliers_at(path, lam)
        grad = C / lam + (T.sum(axis=1) - a)[:, None] + u[None, :]
        assert np.max(np.abs(grad[T > 0])) <= 1e-8
        assert grad.min() >= -1e-8


def test_segment_midpoint_is_affine_in_inverse_lambda():
    C, a, b = _random(11, 4, 5)
    path = compute_sr_path(C, a, b)
    for seg in path.segments[1:-1]:
        lo, hi = seg.lambda_lo, seg.lambda_hi
        mid = 2.0 / (1.0 / lo + 1.0 / hi)
        expect = 0.5 * (eval_sr_path_at(path, lo) + eval_sr_path_at(path, hi))
        np.testing.assert_allclose(eval_sr_path_at(path, mid), expect, atol=1e-10)


def test_balanced_limit_matches_lp():
    for seed in range(3):
        C, a, b = _random(20 + seed, 3, 3, balanced=True)
        path = compute_sr_path(C, a, b)
        cost, _ = balanced_ot_bruteforce(C, a, b)
        assert np.sum(C * eval_sr_path_at(path, math.inf)) == pytest.approx(cost, abs=1e-8)


def test_objective_not_worse_than_oracle():
    C, a, b = _random(5, 3, 4)
    path = compute_sr_path(C, a, b)
    lam = _probe_lambdas(path)[-1]
    T = eval_sr_path_at(path, lam)
    ref = projected_gradient_sr(C, a, b, lam).plan
    assert sr_objective(lam, T, C, a) <= sr_objective(lam, ref, C, a) + 1e-12


def test_kkt_system_updates_match_direct():
    C, a, b = _random(2, 4, 4)
    options = PathOptions(refresh_every=1000)
    kkt = SrKktSystem(4, [0, 5, 10, 15], options)
    for q in (1, 6, 12):
        kkt.add(q)
        np.testing.assert_allclose(kkt.inverse, np.linalg.inv(kkt.matrix()), atol=1e-10)
    kkt.remove(5)
    np.testing.assert_allclose(kkt.inverse, np.linalg.inv(kkt.matrix()), atol=1e-10)


def test_kkt_system_empty_column():
    with pytest.raises(DegenerateError, match="column 1"):
        SrKktSystem(2, [0, 2], PathOptions())


def test_constant_cost_ties_at_zero():
    # every row ties for every column; the level problem spreads mass to match a
    C = np.ones((3, 3))
    a = np.array([3.0, 1.0, 2.0])
    b = np.array([2.0, 2.0, 2.0])
    path = compute_sr_path(C, a, b)
    T = eval_sr_path_at(path, 0.1)
    np.testing.assert_allclose(T.sum(axis=1), a, atol=1e-12)
    np.testing.assert_allclose(T.sum(axis=0), b, atol=1e-12)


def test_resolve_at_zero_picks_balancing_rows():
    C = np.zeros((2, 2))
    a = np.array([1.0, 1.0])
    b = np.array([1.0, 1.0])
    kkt = resolve_sr_ties((), range(4), C, a, b, level=sr_initial_plan(C, b).ravel())
    mt, ct, _, _ = kkt.solve(a, b, C.ravel())
    T = np.zeros(4)
    T[kkt.members] = mt
    np.testing.assert_allclose(T.reshape(2, 2).sum(axis=1), a)
    np.testing.assert_allclose(ct, 0.0, atol=1e-15)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5), st.integers(1, 3))
def test_integer_costs_with_ties(seed, n, m, levels):
    rng = np.random.default_rng(seed)
    C = rng.integers(0, levels, (n, m)).astype(float)
    a = rng.integers(1, 4, n).astype(float)
    b = rng.integers(1, 4, m).astype(float)
    path = compute_sr_path(C, a, b)
    for lam in _probe_lambdas(path):
        T = eval_path_at(path, lam)
        assert kkt_check("sr", T, lam, C, a, b).worst() <= 1e-9


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4))
def test_column_sums_exact_everywhere(seed, n, m):
    C, a, b = _random(seed, n, m)
    path = compute_sr_path(C, a, b)
    for lam in _probe_lambdas(path) + [math.inf]:
        T = eval_sr_path_at(path, lam)
        assert np.max(np.abs(T.sum(axis=0) - b)) <= 1e-10
        assert T.min() >= 0.0
