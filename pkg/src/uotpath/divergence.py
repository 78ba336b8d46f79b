"""Bregman divergences and the UOT objectives built on them."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import DesignOperator, check_problem, as_plan, stacked_targets
from .errors import DomainError

__all__ = [
    "DivergenceKind",
    "PenaltyWeights",
    "bregman",
    "objective",
    "objective_gradient",
    "objective_regularized",
]


class DivergenceKind(enum.Enum):
    """Generator of the Bregman divergence.

    ``KL`` uses ``phi(y) = y log y - y``; ``L2`` uses ``phi(y) = y**2 / 2`` so that
    ``D(u, v) = ||u - v||**2 / 2``.
    """

    KL = "kl"
    L2 = "l2"

    @property
    def alpha(self):
        """Homogeneity exponent: ``lam * D(x, y) == D(lam**alpha * x, lam**alpha * y)``."""
        return 1.0 if self is DivergenceKind.KL else 0.5

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        aliases = {"kl": cls.KL, "l2": cls.L2, "quadraticl2": cls.L2, "quadratic": cls.L2}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown divergence {value!r}") from None

    def grad_phi(self, y):
        y = np.asarray(y, dtype=np.float64)
        if self is DivergenceKind.KL:
            with np.errstate(divide="ignore"):
                return np.log(y)
        return y


@dataclass(frozen=True)
class PenaltyWeights:
    """Weights of the general regularized problem.

    ``lambda1`` and ``lambda2`` penalize the row and column marginals, ``lambda_reg``
    the divergence of the plan to ``a b^T``. Only finite weights are accepted: the
    balanced limit is reached through the regularization path, never by plugging
    in an infinite weight.
    """

    lambda1: float
    lambda2: float
    lambda_reg: float = 0.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        if not np.isfinite(self.lambda_reg) or self.lambda_reg < 0:
            raise DomainError(f"lambda_reg must be finite and >= 0, got {self.lambda_reg!r}")

    @property
    def total(self):
        return self.lambda1 + self.lambda2 + self.lambda_reg


def bregman(kind, u, v):
    """Separable Bregman divergence ``D_phi(u, v)`` summed over entries.

    For KL the convention ``0 log 0 = 0`` applies, and an entry with ``u_i = v_i = 0``
    contributes zero.

    Examples
    --------
    >>> bregman(DivergenceKind.KL, [0.0], [2.0])
    2.0
    >>> bregman(DivergenceKind.L2, [0.0, 0.0], [1.0, 1.0])
    1.0
    """
    kind = DivergenceKind.parse(kind)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DomainError(f"shape mismatch {u.shape} vs {v.shape}")
    if np.isnan(u).any() or np.isnan(v).any():
        raise DomainError("NaN input to divergence")
    if kind is DivergenceKind.L2:
        return float(0.5 * np.sum((u - v) ** 2))
    if np.any(u < 0):
        raise DomainError("KL divergence needs u >= 0")
    if np.any(v < 0) or np.any((v == 0) & (u > 0)):
        raise DomainError("KL divergence needs v > 0 wherever u > 0")
    pos = u > 0
    out = np.sum(u[pos] * np.log(u[pos] / v[pos])) - u.sum() + v.sum()
    return float(out)


def objective(kind, lam, plan, C, a, b):
    """``(1/lam) <C, T> + D_phi(H t, [a; b])``."""
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam!r}")
    C, a, b = check_problem(C, a, b)
    T = as_plan(plan, C.shape)
    H = DesignOperator(*C.shape)
    return float(np.sum(C * T)) / lam + bregman(kind, H.apply(T), stacked_targets(a, b))


def objective_gradient(kind, lam, plan, C, a, b):
    """Gradient of :func:`objective` w.r.t. the flattened plan.

    ``(1/lam) c + H^T (phi'(H t) - phi'(y))``.
    """
    kind = DivergenceKind.parse(kind)
    C, a, b = check_problem(C, a, b)
    T = np.asarray(plan, dtype=np.float64).reshape(C.shape)
    H = DesignOperator(*C.shape)
    resid = kind.grad_phi(H.apply(T)) - kind.grad_phi(stacked_targets(a, b))
    return C.ravel() / lam + H.adjoint(resid)


def objective_regularized(kind, weights, plan, C, a, b):
    """``<C,T> + l1 D(T 1, a) + l2 D(T^T 1, b) + l_reg D(T, a b^T)``.

    With ``lambda1 == lambda2 == lam`` and ``lambda_reg == 0`` this equals
    ``lam * objective(kind, lam, ...)``.
    """
    kind = DivergenceKind.parse(kind)
    C, a, b = check_problem(C, a, b)
    T = as_plan(plan, C.shape)
    val = float(np.sum(C * T))
    val += weights.lambda1 * bregman(kind, T.sum(axis=1), a)
    val += weights.lambda2 * bregman(kind, T.sum(axis=0), b)
    if weights.lambda_reg > 0:
        if kind is not DivergenceKind.KL:
            raise DomainError("the plan regularization term is only defined for KL")
        ref = np.outer(a, b)
        if np.any((ref == 0) & (T > 0)):
            raise DomainError("a b^T has zeros where the plan carries mass")
        val += weights.lambda_reg * bregman(kind, T.ravel(), ref.ravel())
    return val
