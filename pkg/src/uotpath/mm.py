"""Multiplicative Majorization-Minimization solvers.

Every update is an entrywise product of the current plan with a scaling
factor, so entries that are zero stay zero and the objective being minimized
never increases from one iterate to the next.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import as_plan, check_problem
from .divergence import DivergenceKind, PenaltyWeights, bregman
from .errors import DegenerateError, DomainError, PreconditionError

__all__ = [
    "MmConfig",
    "SolveReport",
    "METHODS",
    "initial_plan",
    "mm_kl_step",
    "mm_l2_step",
    "mm_l2_alt_step",
    "mm_ruot_step",
    "solve_mm",
    "ipot_solve",
]

logger = logging.getLogger(__name__)

METHODS = ("kl", "l2", "l2-alt", "ruot")


@dataclass(frozen=True)
class MmConfig:
    """Stopping rule and start of :func:`solve_mm`.

    Iterations stop once the objective changes by at most ``rel_tol`` relative
    to its value. With ``plan_tol > 0`` the largest entry change must also be at
    most ``plan_tol * max(1, max T)``; use it when the limit plan itself is
    needed, since the objective flattens to round-off well before the plan
    stops moving on slowly contracting problems.
    """

    max_iters: int = 100_000
    rel_tol: float = 1e-10
    init: str = "outer"
    record_trace: bool = False
    plan_tol: float = 0.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if not self.plan_tol >= 0:
            raise ValueError("plan_tol must be >= 0")
        if self.init not in ("outer", "uniform"):
            raise ValueError(f"init must be 'outer' or 'uniform', got {self.init!r}")


@dataclass(frozen=True)
class SolveReport:
    plan: np.ndarray
    iterations: int
    final_objective: float
    marginal_errors: tuple
    converged: bool
    objective_trace: tuple | None = field(default=None, repr=False)


def _check_lambda(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise DomainError(f"lambda must be finite and > 0, got {lam!r}")


def _marginals(T, a, b, what):
    r = T.sum(axis=1)
    s = T.sum(axis=0)
    if np.any((r == 0) & (a > 0)) or np.any((s == 0) & (b > 0)):
        raise DegenerateError(f"{what}: a row or column of the iterate carries no mass")
    return r, s


def _floats(C, a, b):
    return (np.asarray(C, dtype=np.float64), np.asarray(a, dtype=np.float64),
            np.asarray(b, dtype=np.float64))


def _safe_ratio(num, den):
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def initial_plan(a, b, init="outer"):
    """Starting point of the multiplicative solvers.

    ``"outer"`` gives ``a_i b_j / ||b||_1`` (row sums equal ``a``); ``"uniform"``
    spreads the mean of the two masses evenly.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if init == "outer":
        return np.outer(a, b) / b.sum()
    if init == "uniform":
        n, m = a.size, b.size
        return np.full((n, m), 0.5 * (a.sum() + b.sum()) / (n * m))
    raise ValueError(f"unknown init {init!r}")


def mm_kl_step(T, C, a, b, lam):
    """One KL-penalized MM update.

    ``T'_{ij} = sqrt(a_i / r_i) T_{ij} exp(-C_{ij} / (2 lam)) sqrt(b_j / s_j)`` with
    ``r, s`` the row and column sums of ``T``.
    """
    _check_lambda(lam)
    T = np.asarray(T, dtype=np.float64)
    C, a, b = _floats(C, a, b)
    r, s = _marginals(T, a, b, "mm_kl_step")
    left = np.sqrt(_safe_ratio(a, r))
    right = np.sqrt(_safe_ratio(b, s))
    return left[:, None] * (T * np.exp(-C / (2.0 * lam))) * right[None, :]


def mm_l2_step(T, C, a, b, lam):
    """One thresholded MM update for the squared-l2 penalty.

    Entries with ``a_i + b_j - C_ij / lam < 0`` are set to exactly zero; the
    remaining ones are rescaled by ``(a_i + b_j - C_ij/lam) / (r_i + s_j)``.
    """
    _check_lambda(lam)
    T = np.asarray(T, dtype=np.float64)
    C, a, b = _floats(C, a, b)
    if np.any(T < 0):
        raise PreconditionError("mm_l2_step needs a non-negative plan")
    num = np.maximum(0.0, a[:, None] + b[None, :] - C / lam)
    den = T.sum(axis=1)[:, None] + T.sum(axis=0)[None, :]
    # 0/0 only happens for an isolated zero entry; it stays zero
    return _safe_ratio(T * num, den)


def mm_l2_alt_step(T, C, a, b, lam):
    """Unthresholded squared-l2 update using a quadratic bound on the linear term.

    ``T'_{ij} = T_{ij} (a_i + b_j) / (r_i + s_j + C_ij / (2 lam))``. Its fixed
    points minimize ``<C,T> + lam ||H t - y||^2``, i.e. the half-squared objective
    at ``2 lam``; zeros are never created.
    """
    _check_lambda(lam)
    T = np.asarray(T, dtype=np.float64)
    C, a, b = _floats(C, a, b)
    if np.any(T < 0):
        raise PreconditionError("mm_l2_alt_step needs a non-negative plan")
    den = T.sum(axis=1)[:, None] + T.sum(axis=0)[None, :] + C / (2.0 * lam)
    if np.any((den <= 0) & (T > 0)):
        raise DegenerateError("mm_l2_alt_step: zero denominator on a positive entry")
    return _safe_ratio(T * (a[:, None] + b[None, :]), den)


def mm_ruot_step(T, C, a, b, weights):
    """MM update for KL-penalized UOT with an optional ``KL(T, a b^T)`` term.

    With ``lam_all = lambda1 + lambda2 + lambda_reg``::

        T' = diag(a/r)^(lambda1/lam_all) (T^((lambda1+lambda2)/lam_all) * K) diag(b/s)^(lambda2/lam_all)
        K  = (a b^T)^(lambda_reg/lam_all) * exp(-C / lam_all)
    """
    T = np.asarray(T, dtype=np.float64)
    C, a, b = _floats(C, a, b)
    l1, l2, lr = weights.lambda1, weights.lambda2, weights.lambda_reg
    tot = weights.total
    r, s = _marginals(T, a, b, "mm_ruot_step")
    K = np.exp(-C / tot)
    if lr > 0:
        ab = np.outer(a, b)
        if np.any((ab == 0) & (T > 0)):
            raise DomainError("a_i b_j = 0 on a positive plan entry with lambda_reg > 0")
        K = K * ab ** (lr / tot)
    left = _safe_ratio(a, r) ** (l1 / tot)
    right = _safe_ratio(b, s) ** (l2 / tot)
    return left[:, None] * (T ** ((l1 + l2) / tot) * K) * right[None, :]


def _kl_value(u, v):
    pos = u > 0
    return float(np.sum(u[pos] * np.log(u[pos] / v[pos])) - u.sum() + v.sum())


def _make_objective(method, C, a, b, lam, weights):
    # validation happened once up front; these closures skip it per iteration
    if method == "kl":
        y = np.concatenate([a, b])
        return lambda T: float(np.sum(C * T)) / lam + _kl_value(
            np.concatenate([T.sum(axis=1), T.sum(axis=0)]), y)
    if method in ("l2", "l2-alt"):
        scale = lam if method == "l2" else 2.0 * lam
        return lambda T: float(np.sum(C * T)) / scale + 0.5 * (
            np.sum((T.sum(axis=1) - a) ** 2) + np.sum((T.sum(axis=0) - b) ** 2))
    if method == "ruot":
        ab = np.outer(a, b).ravel()

        def f(T):
            val = float(np.sum(C * T))
            val += weights.lambda1 * _kl_value(T.sum(axis=1), a)
            val += weights.lambda2 * _kl_value(T.sum(axis=0), b)
            if weights.lambda_reg > 0:
                val += weights.lambda_reg * _kl_value(T.ravel(), ab)
            return val
        return f
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def solve_mm(method, C, a, b, lam=None, weights=None, config=None, init_plan=None):
    """Iterate one of the multiplicative updates until the objective stalls.

    Parameters
    ----------
    method : {"kl", "l2", "l2-alt", "ruot"}
        Update rule. ``"ruot"`` needs ``weights``; the others need ``lam``.
    C, a, b : array_like
        Cost matrix and marginals.
    lam : float, optional
        Marginal penalty weight.
    weights : PenaltyWeights, optional
        Weights of the regularized problem.
    config : MmConfig, optional
    init_plan : array_like, optional
        Starting plan; overrides ``config.init``.

    Returns
    -------
    SolveReport
        ``converged`` is False when ``max_iters`` was hit first. The objective
        reported for ``"l2-alt"`` is the one its update descends (penalty ``2 lam``).
    """
    config = config or MmConfig()
    C, a, b = check_problem(C, a, b)
    if method == "ruot":
        if weights is None:
            raise PreconditionError("method 'ruot' needs PenaltyWeights")
        step = lambda T: mm_ruot_step(T, C, a, b, weights)  # noqa: E731
    else:
        if lam is None:
            raise PreconditionError(f"method {method!r} needs lam")
        _check_lambda(lam)
        steps = {"kl": mm_kl_step, "l2": mm_l2_step, "l2-alt": mm_l2_alt_step}
        if method not in steps:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        fn = steps[method]
        step = lambda T: fn(T, C, a, b, lam)  # noqa: E731
    F = _make_objective(method, C, a, b, lam, weights)

    if init_plan is not None:
        T = as_plan(init_plan, C.shape).copy()
    else:
        T = initial_plan(a, b, config.init)
    if method in ("kl", "ruot"):
        # rows/columns without target mass are driven to zero by the first step anyway
        T[a == 0, :] = 0.0
        T[:, b == 0] = 0.0

    f_old = F(T)
    trace = [f_old] if config.record_trace else None
    converged = False
    it = 0
    while it < config.max_iters:
        T_new = step(T)
        it += 1
        f_new = F(T_new)
        if trace is not None:
            trace.append(f_new)
        stalled = abs(f_old - f_new) <= config.rel_tol * max(abs(f_old), 1e-300)
        if stalled and config.plan_tol > 0:
            stalled = np.max(np.abs(T_new - T)) <= config.plan_tol * max(1.0, float(T_new.max()))
        T = T_new
        if stalled:
            converged = True
            break
        f_old = f_new
    if not converged:
        logger.info("solve_mm(%s) hit max_iters=%d", method, config.max_iters)
    errs = (float(np.max(np.abs(T.sum(axis=1) - a))), float(np.max(np.abs(T.sum(axis=0) - b))))
    return SolveReport(
        plan=T,
        iterations=it,
        final_objective=F(T),
        marginal_errors=errs,
        converged=converged,
        objective_trace=tuple(trace) if trace is not None else None,
    )


def ipot_solve(C, a, b, lam, outer_iters=1000, inner_iters=1, tol=0.0, full_output=False):
    """Inexact proximal point iterations for balanced OT.

    Each outer step builds the kernel ``exp(-C/lam) * T_k`` and runs
    ``inner_iters`` Sinkhorn scalings on it. The column scaling ``v`` is carried
    over between outer steps. Stops early when the plan changes by at most
    ``tol`` in max-norm.

    Small ``lam`` makes the kernel underflow: plan entries that reach exactly
    zero never recover, and the iteration can settle on an infeasible plan.
    ``lam`` of the order of the largest cost is safe.

    Returns the plan, or ``(plan, outer_iterations, converged)`` with ``full_output``.
    """
    _check_lambda(lam)
    C, a, b = check_problem(C, a, b)
    if np.any(a <= 0) or np.any(b <= 0):
        raise PreconditionError("ipot needs strictly positive marginals")
    if abs(a.sum() - b.sum()) > 1e-12 * max(a.sum(), b.sum()):
        raise PreconditionError(f"ipot needs balanced masses, got {float(a.sum())!r} vs {float(b.sum())!r}")
    if outer_iters < 1 or inner_iters < 1:
        raise ValueError("iteration counts must be >= 1")
    G = np.exp(-C / lam)
    T = np.outer(a, b) / a.sum()
    v = np.ones_like(b)
    converged = False
    it = 0
    while it < outer_iters:
        it += 1
        Q = G * T
        for _ in range(inner_iters):
            Qv = Q @ v
            if np.any(Qv <= 0):
                raise DegenerateError("ipot kernel has an empty row")
            with np.errstate(over="ignore"):
                u = a / Qv
            Qu = Q.T @ u if np.all(np.isfinite(u)) else np.full_like(b, np.nan)
            if np.any(Qu <= 0):
                raise DegenerateError("ipot kernel has an empty column")
            with np.errstate(over="ignore"):
                v = b / Qu
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise DegenerateError(f"ipot scalings overflowed at iteration {it}; increase lam")
        T_new = u[:, None] * Q * v[None, :]
        delta = np.max(np.abs(T_new - T))
        T = T_new
        if delta <= tol:
            converged = True
            break
    if full_output:
        return T, it, converged
    return T
