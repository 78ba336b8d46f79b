"""Seeded synthetic problems: two Gaussian clouds, optionally with shifted outliers."""

from __future__ import annotations

import numpy as np

from .ioformat import ProblemFile

__all__ = ["make_gaussian_problem", "outlier_direction"]


def outlier_direction(dim):
    """Unit vector along which outliers (and the target mean) are displaced."""
    return np.full(dim, 1.0 / np.sqrt(dim))


def make_gaussian_problem(n, m, dim=2, seed=0, metric="sqeuclidean", outliers=0,
                          outlier_shift=10.0, mean_gap=2.0):
    """Source ``N(0, I)`` and target ``N(mu, I)`` clouds with uniform masses.

    ``mu`` has norm ``mean_gap``. When ``outliers > 0``, the ``outliers`` target
    points lying furthest along the displacement direction are moved by
    ``outlier_shift`` along it; their indices go to ``meta["outliers"]``.
    """
    if n < 1 or m < 1 or dim < 1:
        raise ValueError("n, m and dim must be >= 1")
    if not 0 <= outliers <= m:
        raise ValueError(f"outliers must lie in [0, {m}]")
    rng = np.random.default_rng(seed)
    u = outlier_direction(dim)
    mu = mean_gap * u
    X = rng.standard_normal((n, dim))
    Y = mu + rng.standard_normal((m, dim))
    meta = {"seed": int(seed), "target_mean": mu.tolist()}
    if outliers:
        proj = (Y - mu) @ u
        idx = np.sort(np.argsort(-proj, kind="stable")[:outliers])
        Y[idx] += outlier_shift * u
        meta["outliers"] = [int(i) for i in idx]
        meta["outlier_shift"] = float(outlier_shift)
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    return ProblemFile(a=a, b=b, X=X, Y=Y, metric=metric, meta=meta)
