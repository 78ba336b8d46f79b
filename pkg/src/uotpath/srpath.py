"""Regularization path of semi-relaxed squared-l2 UOT.

Problem::

    min_{t >= 0, H_c t = b}  c^T t / lam + ||H_r t - a||^2 / 2

Column marginals are exact constraints with multipliers ``u``. On a fixed
active set the pair ``(t_A, u)`` solves the saddle system

    [ 0        H_c,A          ] [u  ]   [ b   ]          [ 0   ]
    [ H_c,A^T  H_r,A^T H_r,A  ] [t_A] = [ a_A ] - 1/lam [ c_A ]

(``a_A`` holds ``a_i`` for each active ``(i, j)``), so both are affine in ``1/lam``.
The path starts at ``lam = 0`` from the plan putting each column's mass on its
cheapest row.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .core import check_problem
from .errors import DegenerateError, PathError
from .regpath import (
    PathOptions,
    PathSegment,
    RegularizationPath,
    _break_cycles,
    _nnqp,
    _pick,
    eval_path_at,
    next_removal_lambda,
    parse_lambda,
)

__all__ = [
    "SrKktSystem",
    "sr_initial_plan",
    "compute_sr_path",
    "eval_sr_path_at",
    "sr_multipliers_at",
    "sr_objective",
    "resolve_sr_ties",
]

logger = logging.getLogger(__name__)


def sr_initial_plan(C, b):
    """Plan at ``lam = 0``: column ``j`` carries ``b_j`` on ``argmin_i C[i, j]`` (first row on ties).

    Examples
    --------
    >>> sr_initial_plan([[1.0, 2.0], [2.0, 1.0]], [3.0, 4.0])
    array([[3., 0.],
           [0., 4.]])
    """
    C = np.asarray(C, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    rows = np.argmin(C, axis=0)
    T = np.zeros(C.shape)
    T[rows, np.arange(C.shape[1])] = b
    return T


def sr_objective(lam, plan, C, a):
    """``<C, T> / lam + ||T 1 - a||^2 / 2`` (column feasibility is not checked)."""
    T = np.asarray(plan, dtype=np.float64)
    return float(np.sum(np.asarray(C) * T)) / lam + 0.5 * float(np.sum((T.sum(axis=1) - a) ** 2))


class SrKktSystem:
    """Inverse of the saddle matrix for the current active set.

    Unknowns are ordered ``[u_0 .. u_{m-1}, t_{A_0}, t_{A_1}, ...]``; new active
    entries are appended at the end.
    """

    def __init__(self, m, members, options):
        self.m = m
        self.members = list(members)
        self.options = options
        self.updates = 0
        self.drift = []
        self.inverse = self._factorize()

    def _rows_cols(self, members=None):
        mem = np.asarray(self.members if members is None else members, dtype=np.intp)
        return mem // self.m, mem % self.m

    def matrix(self, members=None):
        """Dense saddle matrix for ``members`` (defaults to the current set)."""
        mem = self.members if members is None else members
        k = len(mem)
        r, c = self._rows_cols(mem)
        K = np.zeros((self.m + k, self.m + k))
        K[c, self.m + np.arange(k)] = 1.0
        K[self.m + np.arange(k), c] = 1.0
        K[self.m:, self.m:] = r[:, None] == r[None, :]
        return K

    def _factorize(self, members=None):
        K = self.matrix(members)
        mem = self.members if members is None else members
        _, c = self._rows_cols(mem)
        empty = np.setdiff1d(np.arange(self.m), c)
        if empty.size:
            raise DegenerateError(f"column {int(empty[0])} has no active entry; saddle system singular")
        if np.linalg.matrix_rank(K) < K.shape[0]:
            raise DegenerateError(f"saddle system singular for |A|={len(mem)}")
        return np.linalg.inv(K)

    def border(self, q):
        i, j = divmod(int(q), self.m)
        r, _ = self._rows_cols()
        k = np.zeros(self.inverse.shape[0])
        k[j] = 1.0
        k[self.m:] = r == i
        return k

    def pivot(self, q):
        k = self.border(q)
        return 1.0 - k @ (self.inverse @ k)

    def add(self, q):
        k = self.border(q)
        w = self.inverse @ k
        S = 1.0 - k @ w
        if abs(S) < self.options.singular_tol:
            self.members.append(int(q))
            self.inverse = self._factorize()
            self.updates = 0
            return
        N = self.inverse.shape[0]
        out = np.empty((N + 1, N + 1))
        out[:N, :N] = self.inverse + np.outer(w, w) / S
        out[:N, N] = -w / S
        out[N, :N] = -w / S
        out[N, N] = 1.0 / S
        self.inverse = out
        self.members.append(int(q))
        self._bump()

    def remove(self, q):
        pos = self.m + self.members.index(q)
        d = self.inverse[pos, pos]
        del self.members[pos - self.m]
        if abs(d) < self.options.singular_tol:
            self.inverse = self._factorize()
            self.updates = 0
            return
        keep = np.r_[0:pos, pos + 1:self.inverse.shape[0]]
        colv = self.inverse[keep, pos]
        self.inverse = self.inverse[np.ix_(keep, keep)] - np.outer(colv, self.inverse[pos, keep]) / d
        self._bump()

    def _bump(self):
        self.updates += 1
        if self.updates >= self.options.refresh_every:
            fresh = self._factorize()
            self.drift.append(float(np.max(np.abs(fresh - self.inverse))))
            self.inverse = fresh
            self.updates = 0

    def solve(self, a, b, cvec):
        """Return ``(m_tilde_t, c_tilde_t, m_tilde_u, c_tilde_u)``."""
        r, _ = self._rows_cols()
        mem = np.asarray(self.members, dtype=np.intp)
        beta = np.concatenate([b, a[r]])
        gam = np.concatenate([np.zeros(self.m), cvec[mem]])
        mt = self.inverse @ beta
        ct = self.inverse @ gam
        return mt[self.m:], ct[self.m:], mt[:self.m], ct[:self.m]


def _addition_terms(n, m, members, mt, ct, umt, uct, a, cvec):
    """Numerator/denominator of the inactive multipliers ``gamma = N / lam - D``."""
    mem = np.asarray(members, dtype=np.intp)
    rows = mem // m
    row_m = np.bincount(rows, weights=mt, minlength=n)
    row_c = np.bincount(rows, weights=ct, minlength=n)
    N = cvec - (row_c[:, None] + uct[None, :]).ravel()
    D = (a[:, None] - row_m[:, None] - umt[None, :]).ravel()
    return N, D


def resolve_sr_ties(keep, candidates, C, a, b, options=None, level=None, tol=1e-9):
    """Active set leaving a breakpoint where several indices change at once.

    The slope ``d = dt / d(-1/lam)`` just past the breakpoint solves
    ``min 0.5 ||H_r d||^2 - c^T d`` subject to zero column sums and ``d >= 0``
    on the tied ``candidates``; entries in ``keep`` are unconstrained.

    At ``lam = 0`` pass ``level``, a feasible plan (flat array) supported on
    ``candidates``. The plan then is the minimizer of
    ``0.5 ||H_r t - a||^2`` over the tied column minima with exact column sums.

    Returns a :class:`SrKktSystem` for the new set, or None if the result
    fails verification.
    """
    options = options or PathOptions()
    C = np.asarray(C, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = C.shape
    cvec = C.ravel()
    keep = [int(q) for q in keep]
    cand = [int(q) for q in candidates if q not in keep]
    S = np.asarray(keep + cand, dtype=np.intp)
    rows, cols = S // m, S % m
    G = (rows[:, None] == rows[None, :]).astype(np.float64)
    E = (np.arange(m)[:, None] == cols[None, :]).astype(np.float64)
    free = np.arange(len(S)) < len(keep)
    if level is None:
        x = _nnqp(G, cvec[S], free, E, np.zeros(m))
    else:
        x = _nnqp(G, a[rows], free, E, b, x0=np.asarray(level, dtype=np.float64)[S])
    thr = tol * max(1.0, float(np.abs(x).max(initial=0.0)))
    chosen = {int(q): x[p] for p, q in enumerate(S) if free[p] or x[p] > thr}
    chosen = _break_cycles(chosen, keep, cand, m, thr)

    members = keep + [q for q in cand if q in chosen]
    try:
        kkt = SrKktSystem(m, members, options)
    except DegenerateError:
        return None
    mt, ct, umt, uct = kkt.solve(a, b, cvec)
    N, D = _addition_terms(n, m, members, mt, ct, umt, uct, a, cvec)
    vtol = tol * max(1.0, float(np.abs(cvec).max()), float(a.max()), float(b.max()))
    excluded = [q for q in cand if q not in chosen]
    if level is None:
        ok = all(ct[p] >= -vtol for p in range(len(keep), len(members)))
        ok = ok and all(N[q] <= vtol for q in excluded)
    else:
        ok = all(mt >= -vtol) and all(np.abs(ct) <= vtol)
        ok = ok and all(N[q] >= -vtol and (N[q] > vtol or D[q] <= vtol) for q in excluded)
    if not ok:
        logger.warning("tie resolution failed verification (|keep|=%d, |candidates|=%d)",
                       len(keep), len(cand))
        return None
    return kkt


def _greedy_zero_ties(kkt, n, m, a, b, cvec, den_tol, options):
    """Fallback at ``lam = 0``: admit tied entries one at a time while their multiplier would go negative."""
    for _ in range(n * m):
        mt, ct, umt, uct = kkt.solve(a, b, cvec)
        N, D = _addition_terms(n, m, kkt.members, mt, ct, umt, uct, a, cvec)
        cand = (D > den_tol) & (N <= 1e-12 * max(1.0, float(cvec.max())))
        cand[np.asarray(kkt.members)] = False
        if not np.any(cand):
            return
        q = int(np.flatnonzero(cand)[0])
        if abs(kkt.pivot(q)) < options.singular_tol:
            return
        kkt.add(q)


def compute_sr_path(C, a, b, options=None):
    """Whole regularization path of semi-relaxed squared-l2 UOT (exact column sums).

    The first segment starts at ``lam = 0`` with the active set equal to the
    support of :func:`sr_initial_plan`.
    """
    options = options or PathOptions()
    C, a, b = check_problem(C, a, b)
    n, m = C.shape
    if np.any(b <= 0):
        raise DegenerateError("semi-relaxed path needs b > 0 in every column")
    cvec = C.ravel()
    scale = max(1.0, float(a.max() + b.max()))
    den_tol = 1e-12 * scale

    rows0 = np.argmin(C, axis=0)
    kkt = SrKktSystem(m, [int(i) * m + j for j, i in enumerate(rows0)], options)

    def coefficients():
        return kkt.solve(a, b, cvec)

    # entries tied with their column minimum all compete for the mass at lam = 0
    cmin = C.min(axis=0)
    tied = np.flatnonzero((C <= cmin + 1e-12 * max(1.0, float(np.abs(C).max()))).ravel())
    if len(tied) > m:
        resolved = resolve_sr_ties((), tied, C, a, b, options, level=sr_initial_plan(C, b).ravel())
        if resolved is not None:
            kkt = resolved
        else:
            _greedy_zero_ties(kkt, n, m, a, b, cvec, den_tol, options)
    just_added, just_removed = set(kkt.members), set()

    segments = []
    seen = set()
    truncated = False
    lam_k = 0.0
    while True:
        members = tuple(kkt.members)
        mt, ct, umt, uct = coefficients()
        excl = [members.index(q) for q in just_added if q in members]
        rem = next_removal_lambda(mt, ct, lam_k, decreasing_only=True, exclude=excl,
                                  rtol=options.tie_rtol)
        N, D = _addition_terms(n, m, members, mt, ct, umt, uct, a, cvec)
        valid = D > den_tol
        valid[np.asarray(members, dtype=np.intp)] = False
        if just_removed:
            valid[list(just_removed)] = False
        ratios = np.full(n * m, np.inf)
        ratios[valid] = N[valid] / D[valid]
        add = _pick(ratios, valid, lam_k, options.tie_rtol)

        cands = [x.lam for x in (rem, add) if x.lam is not None]
        if not cands:
            segments.append(PathSegment(lam_k, math.inf, members, mt, ct, umt, uct))
            break
        lam_next = min(cands)
        segments.append(PathSegment(lam_k, lam_next, members, mt, ct, umt, uct))
        if len(segments) >= options.max_segments:
            truncated = True
            logger.warning("compute_sr_path stopped after %d segments", len(segments))
            break

        near = lambda x: x.lam is not None and x.lam <= lam_next * (1 + options.tie_rtol)  # noqa: E731
        removals = [members[p] for p in rem.indices] if near(rem) else []
        additions = list(add.indices) if near(add) else []
        # members sitting at zero and inactive entries with a vanishing multiplier are tied too
        t_next = mt - ct / lam_next
        zero_tol = 1e-12 * max(1.0, float(np.abs(mt).max(initial=0.0)))
        removals += [q for q, v in zip(members, t_next) if abs(v) <= zero_tol and q not in removals]
        gamma = N / lam_next - D
        g_tol = 1e-11 * max(scale, float(np.abs(cvec).max()) / lam_next)
        in_active = set(members)
        additions += [int(q) for q in np.flatnonzero(np.abs(gamma) <= g_tol)
                      if q not in in_active and q not in additions]
        resolved = None
        if len(removals) + len(additions) > 1:
            logger.info("%d removals and %d additions tied at lambda=%.17g",
                        len(removals), len(additions), lam_next)
            keep = [q for q in members if q not in removals]
            resolved = resolve_sr_ties(keep, removals + additions, C, a, b, options)
        if resolved is not None:
            resolved.drift = kkt.drift
            kkt = resolved
            just_added = set(kkt.members) - set(members)
            just_removed = set(members) - set(kkt.members)
        else:
            for q in removals:
                j = q % m
                if sum(1 for p in kkt.members if p % m == j) == 1:
                    raise PathError(f"column {j} would lose its last active entry at lambda={lam_next!r}")
                kkt.remove(q)
            for q in additions:
                if len(additions) > 1 and abs(kkt.pivot(q)) < options.singular_tol:
                    logger.info("skipping dependent tied index %d", q)
                    continue
                try:
                    kkt.add(q)
                except DegenerateError as exc:
                    raise PathError(f"singular saddle system adding ({q // m}, {q % m}): {exc}") from exc
            just_added, just_removed = set(additions), set(removals)

        key = (lam_next, frozenset(kkt.members))
        if key in seen:
            raise PathError(f"cycling detected at lambda={lam_next!r}")
        seen.add(key)
        lam_k = lam_next

    last = segments[-1]
    terminal = False
    if not truncated:
        T = np.zeros(n * m)
        T[np.asarray(last.active, dtype=np.intp)] = last.m_tilde
        T = T.reshape(n, m)
        res = np.concatenate([T.sum(axis=1) - a, T.sum(axis=0) - b])
        y = np.concatenate([a, b])
        terminal = bool(res @ res <= options.residual_rtol * (y @ y))
    return RegularizationPath(n, m, tuple(segments), terminal, semi_relaxed=True,
                              truncated=truncated, refresh_drift=tuple(kkt.drift))


def eval_sr_path_at(path, lam):
    """Plan of a semi-relaxed path at ``lam`` (``inf`` allowed)."""
    if not path.semi_relaxed:
        raise ValueError("not a semi-relaxed path")
    return eval_path_at(path, lam)


def sr_multipliers_at(path, lam):
    """Column-constraint multipliers ``u(lam)`` of a semi-relaxed path."""
    lam = parse_lambda(lam)
    seg = path.segments[max(path.locate(lam), 0)]
    if math.isinf(lam):
        return seg.u_m_tilde.copy()
    return seg.u_m_tilde - seg.u_c_tilde / lam
