"""Exact regularization path of squared-l2 penalized UOT.

For ``lam`` between two consecutive breakpoints the active set ``A`` (support of
the optimal plan) is fixed and the solution is affine in ``1/lam``::

    t_A(lam) = m_tilde - c_tilde / lam,   m_tilde = B^-1 m_A,  c_tilde = B^-1 c_A

where ``B = H_A^T H_A`` has entries ``[i_p == i_q] + [j_p == j_q]`` and
``m = vec(a 1^T + 1 b^T)``. The path walks ``lam`` upward from the first
activation, detecting the next removal (an active entry hits zero) or
addition (an inactive multiplier turns negative), and keeps ``B^-1`` up to
date with bordered-inverse (Schur complement) updates.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import DesignOperator, check_problem
from .errors import DegenerateError, DomainError, PathError

__all__ = [
    "PathOptions",
    "ActiveSet",
    "GramInverseCache",
    "PathSegment",
    "RegularizationPath",
    "Breakpoint",
    "initial_breakpoint",
    "next_removal_lambda",
    "next_addition_lambda",
    "schur_add",
    "schur_remove",
    "resolve_ties",
    "compute_path",
    "eval_path_at",
    "parse_lambda",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathOptions:
    """Knobs of the path algorithms.

    Attributes
    ----------
    max_segments : int
        Hard cap on the number of segments; the path is flagged ``truncated``.
    singular_tol : float
        Schur pivots below this trigger a full re-factorization.
    refresh_every : int
        Re-factorize the cached inverse after this many incremental updates.
    tie_rtol : float
        Relative gap under which candidate breakpoints are merged, and the
        strictness margin of the ``> lam_k`` filter.
    residual_rtol : float
        ``||H t - y||^2 <= residual_rtol * ||y||^2`` counts as balanced termination.
    """

    max_segments: int = 100_000
    singular_tol: float = 1e-10
    refresh_every: int = 50
    tie_rtol: float = 1e-12
    residual_rtol: float = 1e-12


class Breakpoint(NamedTuple):
    """Next breakpoint candidate: ``lam`` is None when no event lies ahead.

    ``indices`` holds every tied index (positions in the active set for
    removals, flat plan indices for additions).
    """

    lam: float | None
    indices: tuple


@dataclass(frozen=True)
class ActiveSet:
    """Ordered set of flat plan indices; the order matches the cached inverse."""

    members: tuple = ()
    m: int = 1

    def __len__(self):
        return len(self.members)

    def __contains__(self, q):
        return q in self.members

    @property
    def rows(self):
        return np.asarray(self.members, dtype=np.intp) // self.m

    @property
    def cols(self):
        return np.asarray(self.members, dtype=np.intp) % self.m

    def position(self, q):
        return self.members.index(q)

    def added(self, q):
        if q in self.members:
            raise ValueError(f"index {q} is already active")
        return ActiveSet(self.members + (int(q),), self.m)

    def removed(self, q):
        pos = self.position(q)
        return ActiveSet(self.members[:pos] + self.members[pos + 1:], self.m)

    def gram_column(self, q):
        """Column ``q`` of ``H^T H`` restricted to the members."""
        i, j = divmod(int(q), self.m)
        return (self.rows == i).astype(np.float64) + (self.cols == j)

    def gram_matrix(self):
        r, c = self.rows, self.cols
        return (r[:, None] == r[None, :]).astype(np.float64) + (c[:, None] == c[None, :])


@dataclass(frozen=True)
class GramInverseCache:
    """``(H_A^T H_A)^-1`` plus the number of incremental updates since it was last factorized."""

    inverse: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    updates: int = 0

    @classmethod
    def direct(cls, active):
        if len(active) == 0:
            return cls()
        G = active.gram_matrix()
        if np.linalg.matrix_rank(G) < len(active):
            raise DegenerateError(
                f"Gram matrix of the active set is singular (|A|={len(active)}); "
                "the active entries contain a cycle")
        return cls(np.linalg.inv(G), 0)


def schur_add(cache, new_index, active, singular_tol=1e-10):
    """Inverse of the Gram matrix after appending ``new_index`` to ``active``.

    Uses the bordered-matrix formula with pivot ``S = 2 - b^T B^-1 b`` where ``b`` is
    the new Gram column. Falls back to a direct factorization when ``|S|`` is tiny.
    """
    if new_index in active:
        raise ValueError(f"index {new_index} is already active")
    col = active.gram_column(new_index)
    Binv = cache.inverse
    w = Binv @ col
    S = 2.0 - col @ w
    if abs(S) < singular_tol:
        logger.debug("schur_add: pivot %.3e below tolerance, re-factorizing", S)
        return GramInverseCache.direct(active.added(new_index))
    k = len(active)
    out = np.empty((k + 1, k + 1))
    out[:k, :k] = Binv + np.outer(w, w) / S
    out[:k, k] = -w / S
    out[k, :k] = -w / S
    out[k, k] = 1.0 / S
    return GramInverseCache(out, cache.updates + 1)


def schur_remove(cache, index, active, singular_tol=1e-10):
    """Inverse of the Gram matrix after dropping ``index`` from ``active``."""
    pos = active.position(index)
    Binv = cache.inverse
    d = Binv[pos, pos]
    if abs(d) < singular_tol:
        logger.debug("schur_remove: pivot %.3e below tolerance, re-factorizing", d)
        return GramInverseCache.direct(active.removed(index))
    keep = np.r_[0:pos, pos + 1:Binv.shape[0]]
    colv = Binv[keep, pos]
    out = Binv[np.ix_(keep, keep)] - np.outer(colv, Binv[pos, keep]) / d
    return GramInverseCache(out, cache.updates + 1)


@dataclass(frozen=True)
class PathSegment:
    """One affine piece ``t_A(lam) = m_tilde - c_tilde / lam`` on ``[lambda_lo, lambda_hi]``.

    ``u_m_tilde``/``u_c_tilde`` hold the column-constraint multipliers of
    semi-relaxed paths and are None otherwise.
    """

    lambda_lo: float
    lambda_hi: float
    active: tuple
    m_tilde: np.ndarray
    c_tilde: np.ndarray
    u_m_tilde: np.ndarray | None = None
    u_c_tilde: np.ndarray | None = None

    def coefficients_at(self, lam):
        if math.isinf(lam):
            return self.m_tilde.copy()
        return self.m_tilde - self.c_tilde / lam


@dataclass(frozen=True)
class RegularizationPath:
    n: int
    m: int
    segments: tuple
    terminal_balanced: bool
    semi_relaxed: bool = False
    truncated: bool = False
    refresh_drift: tuple = ()

    @property
    def breakpoints(self):
        return np.array([s.lambda_lo for s in self.segments])

    def locate(self, lam):
        """Index of the segment containing ``lam`` (-1 below the first breakpoint)."""
        los = [s.lambda_lo for s in self.segments]
        if math.isinf(lam):
            return len(los) - 1
        return bisect.bisect_right(los, lam) - 1


def parse_lambda(value):
    """Parse a penalty value, accepting ``inf`` as the balanced limit."""
    if isinstance(value, str):
        value = value.strip().lower()
        if value in ("inf", "+inf", "infinity"):
            return math.inf
        value = float(value)
    lam = float(value)
    if math.isnan(lam) or lam <= 0:
        raise DomainError(f"lambda must be > 0, got {value!r}")
    return lam


def _scatter(n, m, active, values):
    t = np.zeros(n * m)
    if len(active):
        t[np.asarray(active, dtype=np.intp)] = np.maximum(values, 0.0)
    return t.reshape(n, m)


def eval_path_at(path, lam):
    """Optimal plan at ``lam`` (``math.inf`` or ``"inf"`` gives the terminal plan).

    Below the first breakpoint the plan is zero for the full problem.
    Tiny negative round-off is clamped to zero.
    """
    lam = parse_lambda(lam)
    k = path.locate(lam)
    if k < 0:
        return np.zeros((path.n, path.m))
    seg = path.segments[k]
    if lam > seg.lambda_hi:
        raise PathError(
            f"path was truncated at lambda={seg.lambda_hi!r}; cannot evaluate at {lam!r}")
    return _scatter(path.n, path.m, seg.active, seg.coefficients_at(lam))


def initial_breakpoint(C, a, b, rtol=1e-12):
    """First activation ``lam_1 = min c / m`` and all indices achieving it.

    Entries with ``m = a_i + b_j = 0`` never activate and are skipped.
    """
    C = np.asarray(C, dtype=np.float64)
    mvec = (np.asarray(a, dtype=np.float64)[:, None] + np.asarray(b, dtype=np.float64)[None, :]).ravel()
    cvec = C.ravel()
    ok = mvec > 0
    if not np.any(ok):
        raise DegenerateError("all entries of a_i + b_j are zero")
    ratios = np.full(mvec.shape, np.inf)
    ratios[ok] = cvec[ok] / mvec[ok]
    lam1 = float(ratios.min())
    ties = np.flatnonzero(ratios <= lam1 * (1 + rtol))
    return lam1, tuple(int(q) for q in ties)


def _threshold(lam_k, rtol):
    return lam_k * (1.0 + rtol)


def _pick(ratios, valid, lam_k, rtol):
    valid = valid & (ratios > _threshold(lam_k, rtol))
    if not np.any(valid):
        return Breakpoint(None, ())
    lam = float(ratios[valid].min())
    ties = np.flatnonzero(valid & (ratios <= lam * (1 + rtol)))
    return Breakpoint(lam, tuple(int(p) for p in ties))


def next_removal_lambda(m_tilde, c_tilde, lambda_k, decreasing_only=False, exclude=(), rtol=1e-12):
    """Smallest ``c_tilde / m_tilde`` strictly above ``lambda_k``.

    Returns positions within the active set. With ``decreasing_only`` only
    entries whose value decreases with ``lam`` (``c_tilde < 0``) qualify; these
    are the only ones that can genuinely reach zero from above.

    Examples
    --------
    >>> next_removal_lambda([1.0, 2.0], [3.0, 1.0], 1.0)
    Breakpoint(lam=3.0, indices=(0,))
    """
    mt = np.asarray(m_tilde, dtype=np.float64)
    ct = np.asarray(c_tilde, dtype=np.float64)
    # a level that is zero up to round-off is never crossed at finite lam
    valid = np.abs(mt) > 1e-12 * max(1.0, float(np.abs(mt).max(initial=0.0)))
    ratios = np.full(mt.shape, -np.inf)
    ratios[valid] = ct[valid] / mt[valid]
    if decreasing_only:
        valid &= ct < 0
    if len(exclude):
        valid[list(exclude)] = False
    return _pick(ratios, valid, lambda_k, rtol)


def next_addition_lambda(m_tilde, c_tilde, active, lambda_k, C, a, b, exclude=(), rtol=1e-12,
                         den_tol=1e-12):
    """Smallest ``lam > lambda_k`` at which an inactive multiplier reaches zero.

    With ``m_tilde``/``c_tilde`` zero-extended outside the active set, the
    candidate for an inactive entry is
    ``(c - H^T H c_tilde) / (m - H^T H m_tilde)``; entries whose denominator is
    not positive (beyond ``den_tol`` times the scale of ``m``) are skipped.
    Returns flat plan indices.
    """
    C = np.asarray(C, dtype=np.float64)
    n, m = C.shape
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    H = DesignOperator(n, m)
    idx = np.asarray(active, dtype=np.intp)
    mt_full = np.zeros(n * m)
    ct_full = np.zeros(n * m)
    mt_full[idx] = m_tilde
    ct_full[idx] = c_tilde
    mvec = (a[:, None] + b[None, :]).ravel()
    num = C.ravel() - H.gram(ct_full)
    den = mvec - H.gram(mt_full)
    scale = max(1.0, float(mvec.max()))
    valid = den > den_tol * scale
    valid[idx] = False
    if len(exclude):
        valid[list(exclude)] = False
    ratios = np.full(n * m, np.inf)
    ratios[valid] = num[valid] / den[valid]
    return _pick(ratios, valid, lambda_k, rtol)


def _nnqp(G, g, free, E=None, e=None, x0=None, tol=1e-12):
    """``argmin 0.5 x^T G x - g^T x`` s.t. ``E x = e`` and ``x >= 0`` off ``free``.

    Lawson-Hanson active-set iterations for a small PSD ``G``. Subproblems are
    solved by least squares, so singular systems are tolerated as long as they
    are consistent. ``x0`` must be feasible when given; otherwise zero is used.
    """
    k = len(g)
    free = np.asarray(free, dtype=bool)
    E = np.zeros((0, k)) if E is None else np.asarray(E, dtype=np.float64)
    e = np.zeros(E.shape[0]) if e is None else np.asarray(e, dtype=np.float64)
    scale = max(1.0, float(np.abs(g).max(initial=0.0)), float(np.abs(e).max(initial=0.0)))
    thr = tol * scale
    mu = np.zeros(E.shape[0])

    def subproblem(P):
        idx = np.flatnonzero(P)
        p, r = len(idx), E.shape[0]
        K = np.zeros((p + r, p + r))
        K[:p, :p] = G[np.ix_(idx, idx)]
        K[:p, p:] = E[:, idx].T
        K[p:, :p] = E[:, idx]
        sol = np.linalg.lstsq(K, np.concatenate([g[idx], e]), rcond=None)[0]
        z = np.zeros(k)
        z[idx] = sol[:p]
        return z, sol[p:]

    def settle(P, x):
        for _ in range(3 * k + 10):
            z, mu = subproblem(P)
            bad = P & ~free & (z <= thr)
            if not bad.any():
                return P, z, mu
            alpha = float(np.min(x[bad] / np.maximum(x[bad] - z[bad], 1e-300)))
            x = x + min(alpha, 1.0) * (z - x)
            P = P & (free | (x > thr))
            x[~P] = 0.0
        return P, x, mu

    if x0 is None:
        x = np.zeros(k)
        P = free.copy()
    else:
        x = np.asarray(x0, dtype=np.float64).copy()
        P = free | (x > thr)
    if P.any():
        P, x, mu = settle(P, x)
    for _ in range(3 * k + 10):
        w = g - G @ x - E.T @ mu
        w[P] = -np.inf
        j = int(np.argmax(w)) if k else 0
        if not k or w[j] <= thr:
            break
        P[j] = True
        P, x, mu = settle(P, x)
    return x


def _find_cycle(order, m):
    """One cycle of the row/column graph spanned by ``order``, or None.

    Returns the flat indices on the cycle (starting with the edge that closed
    it) and alternating signs, so that the signed indicator has zero row and
    column sums.
    """
    adj = {}
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for q in order:
        i, j = divmod(q, m)
        u, v = ("r", i), ("c", j)
        if find(u) == find(v):
            # breadth-first search for the forest path v -> u
            prev = {v: None}
            queue = [v]
            while queue:
                x = queue.pop(0)
                if x == u:
                    break
                for y, edge in adj.get(x, ()):
                    if y not in prev:
                        prev[y] = (x, edge)
                        queue.append(y)
            edges = [q]
            x = u
            while prev[x] is not None:
                x, edge = prev[x]
                edges.append(edge)
            signs = [1.0 if k % 2 == 0 else -1.0 for k in range(len(edges))]
            return edges, signs
        parent[find(u)] = find(v)
        adj.setdefault(u, []).append((v, q))
        adj.setdefault(v, []).append((u, q))
    return None


def _break_cycles(values, keep, candidates, m, thr):
    """Shift ``values`` along cycles until the chosen entries form a forest.

    Moving along a cycle changes neither row nor column sums, so the
    objective of the tie problem is unchanged; each shift zeroes (and drops)
    at least one candidate entry. Entries in ``keep`` are never dropped.
    """
    values = dict(values)
    keep = set(keep)
    while True:
        order = [q for q in values if q in keep] + [q for q in candidates if q in values]
        cyc = _find_cycle(order, m)
        if cyc is None:
            return values
        edges, signs = cyc
        pos = [q for q, sgn in zip(edges, signs) if q not in keep and sgn > 0]
        theta = min(values[q] for q in pos)
        for q, sgn in zip(edges, signs):
            values[q] -= theta * sgn
        for q in pos:
            if values[q] <= thr:
                del values[q]


def resolve_ties(keep, candidates, C, a, b, at_zero=False, tol=1e-9):
    """Active set leaving a breakpoint where several indices change at once.

    ``keep`` are active entries that stay strictly positive; ``candidates``
    are tied entries sitting at zero with a zero multiplier (entering or
    leaving). The slope ``d = dt / d(-1/lam)`` of the plan just past the
    breakpoint solves ``min 0.5 ||H d||^2 - c^T d`` with ``d >= 0`` on the
    candidates. Its support, reduced to an acyclic set by moving along
    cycles of the row/column graph, is the next active set.

    With ``at_zero`` (breakpoint at ``lam = 0``, zero-cost entries) the plan
    jumps to its level ``m_tilde`` rather than growing from zero, so ``m``
    replaces ``c`` in that problem.

    Returns the new member tuple, or None if the result fails verification.
    """
    C = np.asarray(C, dtype=np.float64)
    n, m = C.shape
    rhs = C.ravel()
    if at_zero:
        rhs = (np.asarray(a, dtype=np.float64)[:, None]
               + np.asarray(b, dtype=np.float64)[None, :]).ravel()
    keep = [int(q) for q in keep]
    cand = [int(q) for q in candidates if q not in keep]
    S = keep + cand
    G = ActiveSet(tuple(S), m).gram_matrix()
    free = np.arange(len(S)) < len(keep)
    x = _nnqp(G, rhs[S], free)
    thr = tol * max(1.0, float(np.abs(x).max(initial=0.0)))
    chosen = {q: x[p] for p, q in enumerate(S) if free[p] or x[p] > thr}
    chosen = _break_cycles(chosen, keep, cand, m, thr)

    members = tuple(keep + [q for q in cand if q in chosen])
    try:
        Binv = GramInverseCache.direct(ActiveSet(members, m)).inverse
    except DegenerateError:
        return None
    slope = Binv @ rhs[list(members)]
    full = np.zeros(n * m)
    full[list(members)] = slope
    w = DesignOperator(n, m).gram(full) - rhs
    vtol = tol * max(1.0, float(np.abs(rhs).max()))
    entering_ok = all(slope[p] >= -vtol for p in range(len(keep), len(members)))
    excluded_ok = all(w[q] >= -vtol for q in cand if q not in chosen)
    if not (entering_ok and excluded_ok):
        logger.warning("tie resolution failed verification (|keep|=%d, |candidates|=%d)",
                       len(keep), len(cand))
        return None
    return members


class _GramState:
    """Mutable active set + inverse used while a path is being built."""

    def __init__(self, m, options):
        self.active = ActiveSet((), m)
        self.cache = GramInverseCache()
        self.options = options
        self.drift = []

    def add(self, q):
        self.cache = schur_add(self.cache, q, self.active, self.options.singular_tol)
        self.active = self.active.added(q)
        self._maybe_refresh()

    def remove(self, q):
        self.cache = schur_remove(self.cache, q, self.active, self.options.singular_tol)
        self.active = self.active.removed(q)
        self._maybe_refresh()

    def reset(self, members):
        self.active = ActiveSet(tuple(members), self.active.m)
        self.cache = GramInverseCache.direct(self.active)

    def pivot(self, q):
        col = self.active.gram_column(q)
        return 2.0 - col @ (self.cache.inverse @ col)

    def _maybe_refresh(self):
        if self.cache.updates >= self.options.refresh_every:
            fresh = GramInverseCache.direct(self.active)
            if len(self.active):
                self.drift.append(float(np.max(np.abs(fresh.inverse - self.cache.inverse))))
            self.cache = fresh


def compute_path(C, a, b, options=None):
    """Whole regularization path of ``min_{t>=0} c^T t / lam + ||H t - y||^2 / 2``.

    Returns
    -------
    RegularizationPath
        Segments start at the first activation ``lam_1``; the last one extends to
        ``inf`` unless ``options.max_segments`` was reached (``truncated``).

    Raises
    ------
    PathError
        On cycling or a Gram matrix that stays singular after re-factorization.
    """
    options = options or PathOptions()
    C, a, b = check_problem(C, a, b)
    n, m = C.shape
    mvec = (a[:, None] + b[None, :]).ravel()
    cvec = C.ravel()
    y = np.concatenate([a, b])
    H = DesignOperator(n, m)

    lam_k, first = initial_breakpoint(C, a, b, options.tie_rtol)
    state = _GramState(m, options)
    resolved = resolve_ties((), first, C, a, b, at_zero=lam_k == 0) if len(first) > 1 else None
    if resolved is not None:
        state.reset(resolved)
    else:
        for q in first:
            _add_checked(state, q, tied=len(first) > 1)
    just_added, just_removed = set(state.active.members), set()

    segments = []
    seen = set()
    truncated = False
    while True:
        active = state.active.members
        idx = np.asarray(active, dtype=np.intp)
        Binv = state.cache.inverse
        mt = Binv @ mvec[idx]
        ct = Binv @ cvec[idx]

        excl_r = [state.active.position(q) for q in just_added if q in state.active]
        rem = next_removal_lambda(mt, ct, lam_k, decreasing_only=True, exclude=excl_r,
                                  rtol=options.tie_rtol)
        add = next_addition_lambda(mt, ct, active, lam_k, C, a, b, exclude=tuple(just_removed),
                                   rtol=options.tie_rtol)
        cands = [x.lam for x in (rem, add) if x.lam is not None]
        if not cands:
            segments.append(PathSegment(lam_k, math.inf, active, mt, ct))
            break
        lam_next = min(cands)
        segments.append(PathSegment(lam_k, lam_next, active, mt, ct))
        if len(segments) >= options.max_segments:
            truncated = True
            logger.warning("compute_path stopped after %d segments", len(segments))
            break

        near = lambda x: x.lam is not None and x.lam <= lam_next * (1 + options.tie_rtol)  # noqa: E731
        removals = [active[p] for p in rem.indices] if near(rem) else []
        additions = list(add.indices) if near(add) else []
        # members sitting at zero at lam_next are tied with the event as well
        t_next = mt - ct / lam_next
        zero_tol = 1e-12 * max(1.0, float(np.abs(mt).max(initial=0.0)))
        removals += [q for q, v in zip(active, t_next) if abs(v) <= zero_tol and q not in removals]
        # likewise inactive entries whose multiplier vanishes (including 0/0 ratios on cycles)
        t_full = np.zeros(n * m)
        t_full[idx] = t_next
        gamma = cvec / lam_next + H.gram(t_full) - mvec
        g_tol = 1e-11 * max(1.0, float(mvec.max()), float(np.abs(cvec).max()) / lam_next)
        in_active = set(active)
        additions += [int(q) for q in np.flatnonzero(np.abs(gamma) <= g_tol)
                      if q not in in_active and q not in additions]
        resolved = None
        if len(removals) + len(additions) > 1:
            logger.info("%d removals and %d additions tied at lambda=%.17g",
                        len(removals), len(additions), lam_next)
            keep = [q for q in active if q not in removals]
            resolved = resolve_ties(keep, removals + additions, C, a, b)
        if resolved is not None:
            state.reset(resolved)
            just_added = set(resolved) - set(active)
            just_removed = set(active) - set(resolved)
        else:
            for q in removals:
                state.remove(q)
            for q in additions:
                _add_checked(state, q, tied=len(additions) > 1)
            just_added, just_removed = set(additions), set(removals)

        key = (lam_next, frozenset(state.active.members))
        if key in seen:
            raise PathError(f"cycling detected at lambda={lam_next!r} with |A|={len(state.active)}")
        seen.add(key)
        lam_k = lam_next

    last = segments[-1]
    terminal = False
    if not truncated:
        t_inf = _scatter(n, m, last.active, last.m_tilde)
        res = H.apply(t_inf) - y
        terminal = bool(res @ res <= options.residual_rtol * (y @ y))
    return RegularizationPath(n, m, tuple(segments), terminal, semi_relaxed=False,
                              truncated=truncated, refresh_drift=tuple(state.drift))


def _add_checked(state, q, tied):
    piv = state.pivot(q)
    if abs(piv) < state.options.singular_tol:
        if tied:
            # a tied entry closing a cycle with the others is redundant at this lambda
            logger.info("skipping dependent tied index %d (pivot %.3e)", q, piv)
            return
        try:
            state.add(q)
        except DegenerateError as exc:
            raise PathError(
                f"Gram matrix singular when adding flat index {q} "
                f"(row {q // state.active.m}, col {q % state.active.m}): {exc}") from exc
        return
    state.add(q)
