"""Regularized quadratic penalty of an LP.

    f(x) = c^T x - u_bar^T (Ax - b) + (beta/2) ||Ax - b||^2 + (1/(2 beta)) ||x - x_bar||^2

minimized over the box of the LP. ``f`` is strongly convex with modulus
``1/beta`` and its Hessian diagonal is bounded by ``l_max``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lp_core import DimensionError, StandardFormLp


@dataclass(frozen=True, eq=False)
class PenaltyProblem:
    lp: StandardFormLp
    beta: float
    u_bar: np.ndarray = None
    x_bar: np.ndarray = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        u = np.zeros(self.lp.m) if self.u_bar is None else np.asarray(self.u_bar, dtype=np.float64)
        x = np.zeros(self.lp.n) if self.x_bar is None else np.asarray(self.x_bar, dtype=np.float64)
        if u.shape != (self.lp.m,) or x.shape != (self.lp.n,):
            raise DimensionError("anchors must match the LP dimensions")
        object.__setattr__(self, "u_bar", u)
        object.__setattr__(self, "x_bar", x)
        object.__setattr__(self, "beta", float(self.beta))

    @cached_property
    def reduced_cost(self) -> np.ndarray:
        """``c - A^T u_bar``, fixed for the lifetime of the problem."""
        return np.ascontiguousarray(self.lp.cost - self.lp.matrix.rmatvec(self.u_bar))


@dataclass(frozen=True)
class LipschitzInfo:
    l_max: float
    l_strong: float
    hessian_diag: np.ndarray = field(repr=False)


def objective(p: PenaltyProblem, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.lp.n,):
        raise DimensionError(f"x has shape {x.shape}, expected ({p.lp.n},)")
    r = p.lp.matrix.matvec(x) - p.lp.b
    d = x - p.x_bar
    return float(p.lp.cost @ x - p.u_bar @ r + 0.5 * p.beta * (r @ r) + (d @ d) / (2.0 * p.beta))


def gradient(p: PenaltyProblem, x: np.ndarray, r: np.ndarray | None = None) -> np.ndarray:
    """Full gradient; ``r`` may be passed when ``Ax - b`` is already known."""
    x = np.asarray(x, dtype=np.float64)
    if r is None:
        r = p.lp.matrix.matvec(x) - p.lp.b
    return p.reduced_cost + p.beta * p.lp.matrix.rmatvec(r) + (x - p.x_bar) / p.beta


def grad_component(p: PenaltyProblem, r: np.ndarray, x_i: float, i: int) -> float:
    """Partial derivative in coordinate ``i`` given the residual ``r = Ax - b``.

    Only column ``i`` is touched.
    """
    if not 0 <= i < p.lp.n:
        raise IndexError(i)
    rows, vals = p.lp.matrix.column(i)
    return float(p.reduced_cost[i] + p.beta * (vals @ r[rows]) + (x_i - p.x_bar[i]) / p.beta)


def lipschitz(p: PenaltyProblem) -> LipschitzInfo:
    norms = p.lp.matrix.col_sq_norms
    diag = p.beta * norms + 1.0 / p.beta
    l_max = float(diag.max()) if diag.size else 1.0 / p.beta
    return LipschitzInfo(l_max=l_max, l_strong=1.0 / p.beta, hessian_diag=diag)
