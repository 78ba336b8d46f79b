import numpy as np
import pytest

from uotpath.bench import BenchRecord, fit_exponent, record_rows, run_scaling


def _synthetic(times, sizes, repeats=1):
    return [BenchRecord("x", n, n, 1.0, r, float(t), 1, 0.0)
            for n, t in zip(sizes, times) for r in range(repeats)]


def test_exact_cubic_law():
    sizes = [10, 20, 40, 80, 160]
    slope, r2 = fit_exponent(_synthetic([n**3 * 1e-9 for n in sizes], sizes))
    assert slope == pytest.approx(3.0, abs=0.01)
    assert r2 >= 0.999


def test_constant_times():
    sizes = [10, 20, 30, 40]
    slope, _ = fit_exponent(_synthetic([0.5] * 4, sizes))
    assert slope == pytest.approx(0.0, abs=0.01)


def test_scale_invariance():
    rng = np.random.default_rng(1)
    sizes = [10, 15, 20, 30, 50]
    times = rng.uniform(0.1, 1.0, 5)
    s1, _ = fit_exponent(_synthetic(times, sizes))
    s2, _ = fit_exponent(_synthetic(times * 37.5, sizes))
    assert abs(s1 - s2) <= 1e-12


def test_median_over_repeats():
    recs = _synthetic([1.0, 8.0, 27.0, 64.0], [1, 2, 3, 4])
    # one slow outlier per size does not move the median of three
    recs += _synthetic([1.0, 8.0, 27.0, 64.0], [1, 2, 3, 4])
    recs += _synthetic([100.0] * 4, [1, 2, 3, 4])
    slope, _ = fit_exponent(recs)
    assert slope == pytest.approx(3.0, abs=1e-9)


def test_fit_needs_four_sizes():
    with pytest.raises(ValueError, match="4 distinct"):
        fit_exponent(_synthetic([1, 2, 3], [1, 2, 3]))
    with pytest.raises(ValueError):
        fit_exponent(_synthetic([1.0] * 5, [7] * 5))


def test_failed_records_ignored():
    recs = _synthetic([1.0, 8.0, 27.0, 64.0], [1, 2, 3, 4])
    recs.append(BenchRecord("x", 5, 5, 1.0, 0, float("nan"), 0, float("nan"), "boom"))
    with pytest.raises(ValueError):
        fit_exponent(recs[:3] + recs[4:])
    assert fit_exponent(recs)[0] == pytest.approx(3.0)


def test_run_scaling_cardinality_and_determinism():
    recs = run_scaling("path", [4, 6], repeats=5, seed=3)
    assert len(recs) == 10
    for size in (4, 6):
        rows = [r for r in recs if r.n == size]
        assert len(rows) == 5 and sorted(r.repeat for r in rows) == list(range(5))
        assert len({r.iterations for r in rows}) == 1
        assert all(r.wall_time > 0 and r.error is None for r in rows)


@pytest.mark.parametrize("solver", ["sr-path", "mm-l2", "mm-kl"])
def test_other_solvers(solver):
    recs = run_scaling(solver, [3, 5], repeats=1)
    assert all(r.error is None and r.iterations > 0 for r in recs)


def test_failures_are_recorded():
    recs = run_scaling("nope", [3], repeats=2)
    assert len(recs) == 2 and all(r.error for r in recs)


def test_parallel_matches_serial_counts():
    serial = run_scaling("path", [4, 5], repeats=1, seed=9)
    parallel = run_scaling("path", [4, 5], repeats=1, seed=9, workers=2)
    assert [r.iterations for r in serial] == [r.iterations for r in parallel]


def test_run_scaling_validation():
    with pytest.raises(ValueError):
        run_scaling("path", [5, 4])
    with pytest.raises(ValueError):
        run_scaling("path", [4], repeats=0)


def test_record_rows():
    rows = list(record_rows(_synthetic([0.25], [3])))
    assert rows == [("x", 3, 3, 1.0, 0, 0.25, 1)]
