"""Slow reference solvers and optimality checkers.

Nothing here calls into the fast solvers or the matrix-free operator: the
design matrix is built densely and every quantity is recomputed from it.
Sizes are capped so the dense matrices stay small.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, PreconditionError

__all__ = [
    "KktResidual",
    "OracleResult",
    "dense_design",
    "projected_gradient_l2",
    "projected_gradient_sr",
    "project_simplex",
    "balanced_ot_bruteforce",
    "kkt_check",
]

MAX_DENSE = 10_000
MAX_BRUTEFORCE = 16


class OracleResult(NamedTuple):
    plan: np.ndarray
    converged: bool
    iterations: int


@dataclass(frozen=True)
class KktResidual:
    """Optimality violations of a candidate plan; all fields are >= 0."""

    stationarity_active: float
    dual_feasibility: float
    complementarity: float
    primal_feasibility: float = 0.0

    def worst(self):
        return max(self.stationarity_active, self.dual_feasibility,
                   self.complementarity, self.primal_feasibility)

    def ok(self, tol):
        return self.worst() <= tol


def dense_design(n, m):
    """Explicit ``(n + m) x (n m)`` 0/1 design matrix ``[H_r; H_c]``."""
    if n * m > MAX_DENSE:
        raise DimensionError(f"dense design limited to n*m <= {MAX_DENSE}, got {n * m}")
    Hr = np.repeat(np.eye(n), m, axis=1)
    Hc = np.tile(np.eye(m), n)
    return np.vstack([Hr, Hc])


def projected_gradient_l2(C, a, b, lam, tol=1e-11, max_iters=2_000_000):
    """Minimize ``c^T t / lam + ||H t - y||^2 / 2`` over ``t >= 0`` by projected gradient.

    Step size is ``1 / (n + m)``, an upper bound on ``||H^T H||_2``. Stops when the
    gradient mapping is below ``tol`` in max-norm.
    """
    C = np.asarray(C, dtype=np.float64)
    n, m = C.shape
    H = dense_design(n, m)
    G = H.T @ H
    y = np.concatenate([np.asarray(a, float), np.asarray(b, float)])
    lin = C.ravel() / lam - H.T @ y
    L = float(n + m)
    t = np.zeros(n * m)
    for it in range(1, max_iters + 1):
        grad = G @ t + lin
        t_new = np.maximum(t - grad / L, 0.0)
        step = L * np.max(np.abs(t_new - t))
        t = t_new
        if step <= tol:
            return OracleResult(t.reshape(n, m), True, it)
    return OracleResult(t.reshape(n, m), False, max_iters)


def project_simplex(v, mass):
    """Euclidean projection of ``v`` onto ``{x >= 0, sum(x) = mass}`` (sort based)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - mass
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def projected_gradient_sr(C, a, b, lam, tol=1e-11, max_iters=2_000_000):
    """Semi-relaxed reference: ``c^T t / lam + ||H_r t - a||^2 / 2`` with exact column sums.

    Projected gradient with step ``1 / m`` and a per-column simplex projection.
    """
    C = np.asarray(C, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = C.shape
    Hr = dense_design(n, m)[:n]
    G = Hr.T @ Hr
    lin = C.ravel() / lam - Hr.T @ a
    L = float(m)

    def project(x):
        X = x.reshape(n, m)
        return np.column_stack([project_simplex(X[:, j], b[j]) for j in range(m)]).ravel()

    t = project(np.zeros(n * m))
    for it in range(1, max_iters + 1):
        t_new = project(t - (G @ t + lin) / L)
        step = L * np.max(np.abs(t_new - t))
        t = t_new
        if step <= tol:
            return OracleResult(t.reshape(n, m), True, it)
    return OracleResult(t.reshape(n, m), False, max_iters)


def _tree_solution(cells, n, m, a, b):
    """Values of the basic variables of a spanning-tree basis, or None if not a tree."""
    parent = list(range(n + m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in cells:
        ri, rj = find(i), find(n + j)
        if ri == rj:
            return None
        parent[ri] = rj
    supply = {i: a[i] for i in range(n)}
    supply.update({n + j: b[j] for j in range(m)})
    edges = {(i, n + j) for i, j in cells}
    deg = {v: 0 for v in range(n + m)}
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    values = {}
    while edges:
        leaf = next(v for v in deg if deg[v] == 1)
        e = next(e for e in edges if leaf in e)
        other = e[1] if e[0] == leaf else e[0]
        val = supply[leaf]
        values[(e[0], e[1] - n)] = val
        supply[other] -= val
        supply[leaf] = 0.0
        edges.remove(e)
        deg[leaf] -= 1
        deg[other] -= 1
    return values


def balanced_ot_bruteforce(C, a, b):
    """Exact balanced OT by enumerating every spanning-tree basis of the transportation LP.

    Returns
    -------
    cost : float
    plan : ndarray of shape (n, m)
    """
    C = np.asarray(C, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = C.shape
    if n * m > MAX_BRUTEFORCE:
        raise DimensionError(f"brute force limited to n*m <= {MAX_BRUTEFORCE}, got {n * m}")
    mass = a.sum()
    if abs(mass - b.sum()) > 1e-12 * max(mass, 1.0):
        raise PreconditionError(f"masses differ: {mass!r} vs {b.sum()!r}")
    cells = [(i, j) for i in range(n) for j in range(m)]
    best_cost, best = np.inf, None
    feas_tol = 1e-12 * max(mass, 1.0)
    for basis in itertools.combinations(cells, n + m - 1):
        vals = _tree_solution(basis, n, m, a, b)
        if vals is None or min(vals.values()) < -feas_tol:
            continue
        cost = sum(C[i, j] * v for (i, j), v in vals.items())
        if cost < best_cost:
            best_cost = cost
            best = vals
    T = np.zeros((n, m))
    for (i, j), v in best.items():
        T[i, j] = max(v, 0.0)
    return float(best_cost), T


def kkt_check(kind, t, lam, C, a, b):
    """KKT residuals of a candidate solution of the l2 problem at ``lam``.

    ``kind`` is ``"full"`` (both marginals penalized) or ``"semi-relaxed"``
    (column sums constrained; the multipliers are fitted by least squares on
    the support).
    """
    C = np.asarray(C, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = C.shape
    t = np.asarray(t, dtype=np.float64).ravel()
    if t.size != n * m:
        raise DimensionError(f"plan has {t.size} entries, expected {n * m}")
    H = dense_design(n, m)
    Hr, Hc = H[:n], H[n:]
    supp = t > 0
    primal = 0.0
    if kind == "full":
        y = np.concatenate([a, b])
        gamma = C.ravel() / lam + H.T @ (H @ t - y)
    elif kind in ("semi-relaxed", "semi_relaxed", "sr"):
        g0 = (C.ravel() / lam + Hr.T @ (Hr @ t - a)).reshape(n, m)
        S = supp.reshape(n, m)
        u = np.empty(m)
        for j in range(m):
            col = g0[S[:, j], j]
            u[j] = -col.mean() if col.size else -g0[:, j].min()
        gamma = (g0 + u[None, :]).ravel()
        primal = float(np.max(np.abs(Hc @ t - b)))
    else:
        raise ValueError(f"unknown problem kind {kind!r}")
    stat = float(np.max(np.abs(gamma[supp]))) if supp.any() else 0.0
    off = ~supp
    dual = float(max(0.0, -gamma[off].min())) if off.any() else 0.0
    comp = float(np.max(np.abs(gamma * t)))
    return KktResidual(stat, dual, comp, primal)
