"""Domain types and the matrix-free design operator.

A transport plan ``T`` of shape ``(n, m)`` is vectorized row-major,
``t[i * m + j] = T[i, j]``, everywhere in the package. The design operator
``H = [H_r; H_c]`` maps ``t`` to its stacked marginals ``[T 1_m; T^T 1_n]``
and is never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "FlatIndex",
    "DesignOperator",
    "as_histogram",
    "as_cost_matrix",
    "as_plan",
    "check_problem",
    "apply_design",
    "apply_design_adjoint",
    "gram_apply",
    "stacked_targets",
]


def _finite_array(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise DomainError(f"{name}{list(bad)} is not finite")
    return arr


def as_histogram(weights, name="a"):
    """Validate a non-negative mass vector and return it as a float64 array."""
    arr = _finite_array(weights, name)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-d array, got shape {arr.shape}")
    neg = np.flatnonzero(arr < 0)
    if neg.size:
        raise DomainError(f"{name}[{neg[0]}] = {arr[neg[0]]!r} is negative")
    if not np.any(arr > 0):
        raise DomainError(f"{name} carries no mass")
    return arr


def as_cost_matrix(C, shape=None):
    """Validate a finite non-negative cost matrix."""
    arr = _finite_array(C, "C")
    if arr.ndim != 2:
        raise DimensionError(f"C must be 2-d, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"C has shape {arr.shape}, expected {tuple(shape)}")
    if np.any(arr < 0):
        i, j = np.argwhere(arr < 0)[0]
        raise DomainError(f"C[{i}, {j}] = {arr[i, j]!r} is negative")
    return arr


def as_plan(T, shape=None):
    """Validate a non-negative transport plan. Flat input is reshaped when ``shape`` is given."""
    arr = _finite_array(T, "T")
    if shape is not None:
        n, m = shape
        if arr.ndim == 1 and arr.size == n * m:
            arr = arr.reshape(n, m)
        if arr.shape != (n, m):
            raise DimensionError(f"plan has shape {arr.shape}, expected {(n, m)}")
    elif arr.ndim != 2:
        raise DimensionError(f"plan must be 2-d, got shape {arr.shape}")
    if np.any(arr < 0):
        i, j = np.argwhere(arr < 0)[0]
        raise DomainError(f"T[{i}, {j}] = {arr[i, j]!r} is negative")
    return arr


def check_problem(C, a, b):
    """Validate ``(C, a, b)`` jointly and return float64 copies."""
    a = as_histogram(a, "a")
    b = as_histogram(b, "b")
    C = as_cost_matrix(C, (a.size, b.size))
    return C, a, b


def stacked_targets(a, b):
    """Return ``y = [a; b]``."""
    return np.concatenate([np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)])


class FlatIndex(NamedTuple):
    """Position of a plan entry, both as ``(i, j)`` and as its row-major offset."""

    i: int
    j: int
    flat: int

    @classmethod
    def from_ij(cls, i, j, m):
        return cls(int(i), int(j), int(i) * m + int(j))

    @classmethod
    def from_flat(cls, flat, m):
        i, j = divmod(int(flat), m)
        return cls(i, j, int(flat))


@dataclass(frozen=True)
class DesignOperator:
    """Implicit ``(n + m) x (n m)`` matrix stacking the row-sum and column-sum operators.

    ``apply``, ``adjoint`` and ``gram`` all run in ``O(n m)`` time and memory.
    """

    n: int
    m: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DimensionError(f"sizes must be positive, got n={self.n}, m={self.m}")

    @property
    def shape(self):
        return (self.n + self.m, self.n * self.m)

    def _as_matrix(self, t):
        t = np.asarray(t, dtype=np.float64)
        if t.shape == (self.n, self.m):
            return t
        if t.ndim == 1 and t.size == self.n * self.m:
            return t.reshape(self.n, self.m)
        raise DimensionError(
            f"expected a plan of shape {(self.n, self.m)} or length {self.n * self.m}, got {t.shape}"
        )

    def apply(self, t):
        """``H t``: row sums followed by column sums."""
        T = self._as_matrix(t)
        return np.concatenate([T.sum(axis=1), T.sum(axis=0)])

    def adjoint(self, s):
        """``H^T s``: entry ``(i, j)`` of the result is ``s[i] + s[n + j]``."""
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (self.n + self.m,):
            raise DimensionError(f"expected length {self.n + self.m}, got shape {s.shape}")
        return (s[: self.n, None] + s[None, self.n :]).ravel()

    def gram(self, t):
        """``H^T H t``: entry ``(i, j)`` is row-sum ``i`` plus column-sum ``j`` of ``T``."""
        T = self._as_matrix(t)
        return (T.sum(axis=1)[:, None] + T.sum(axis=0)[None, :]).ravel()

    def flat(self, i, j):
        return FlatIndex.from_ij(i, j, self.m)

    def unflat(self, q):
        return FlatIndex.from_flat(q, self.m)


def apply_design(plan, shape=None):
    """Stacked marginals ``[T 1_m; T^T 1_n]`` of a plan.

    Examples
    --------
    >>> apply_design([[1.0, 2.0], [3.0, 4.0]])
    array([3., 7., 4., 6.])
    """
    T = np.asarray(plan, dtype=np.float64)
    if shape is None:
        if T.ndim != 2:
            raise DimensionError("a flat plan needs an explicit shape")
        shape = T.shape
    return DesignOperator(*shape).apply(T)


def apply_design_adjoint(s, n, m):
    """Flattened ``a 1_m^T + 1_n b^T`` where ``s = [a; b]``."""
    return DesignOperator(n, m).adjoint(s)


def gram_apply(t, n, m):
    """``H^T H t`` computed from the row and column sums of ``t``."""
    return DesignOperator(n, m).gram(t)
