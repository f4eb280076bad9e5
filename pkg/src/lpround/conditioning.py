"""Condition estimates, penalty-parameter choice and perturbation-bound checks.

Estimates follow the closed forms for covering LPs in explicit-row form
``Ax >= b, x >= 0`` (box rows folded into ``A``). The data norm is
``||d|| = max(||A||_F, ||b||, ||c||)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import lsq_linear

from .alm import AlmOptions, alm_solve
from .lp_core import SparseMatrix, StandardFormLp
from .penalty import PenaltyProblem
from .problems import EncodedProblem, Graph
from .scd import SolveOptions

SQRT2 = math.sqrt(2.0)
SQRT6 = math.sqrt(6.0)


class ConditioningError(ValueError):
    pass


@dataclass
class ConditionEstimate:
    d_norm: float
    delta_p_lb: float
    delta_d_lb: float
    c_star: float
    source: str
    c_star_heuristic: bool = False
    slack: float | None = None

    def __post_init__(self):
        if not (self.d_norm > 0 and self.delta_p_lb > 0 and self.delta_d_lb > 0 and self.c_star >= 0):
            raise ConditioningError(f"invalid estimate: {self}")
        if self.delta_p_lb > 1 or self.delta_d_lb > 1:
            raise ConditioningError("condition lower bounds cannot exceed 1")


@dataclass
class BetaChoice:
    beta: float
    binding: str
    bounds: dict[str, float]
    eps_bar: float
    inputs: dict = field(default_factory=dict)


def data_norm(a, b, c) -> float:
    if isinstance(a, SparseMatrix):
        fro = a.frobenius_norm()
    elif sp.issparse(a):
        fro = float(sp.linalg.norm(a))
    else:
        fro = float(np.linalg.norm(a))
    return max(fro, float(np.linalg.norm(b)), float(np.linalg.norm(c)))


def estimate_vc_condition(g: Graph) -> ConditionEstimate:
    """Closed forms for unit-cost vertex cover with anchors ``x_bar = 1``, ``u_bar = 0``."""
    if g.n == 0 or g.m == 0:
        raise ConditioningError("vertex-cover estimate needs at least one edge")
    d = math.sqrt(2 * g.m + g.n)
    return ConditionEstimate(d, 1.0 / (4.0 * d * math.sqrt(g.n)), 1.0 / d, math.sqrt(g.m), "vc-closed-form")


def covering_form(enc: EncodedProblem) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    """Explicit-row covering data ``[A; -I] x >= [b; -1]`` over the decision columns."""
    if enc.kind not in ("vertex_cover", "set_cover"):
        raise ConditioningError(f"{enc.kind} is not a covering encoding")
    a = enc.lp.matrix.to_scipy().tocsc()[:, enc.decision]
    n = a.shape[1]
    big = sp.vstack([a, -sp.identity(n)]).tocsr()
    rhs = np.concatenate([enc.lp.b, -np.ones(n)])
    return big, rhs, enc.lp.cost[enc.decision]


def covering_slack(a, b, x) -> float:
    """``min_i (Ax - b)_i`` for a nonnegative point ``x``; negative when infeasible."""
    x = np.asarray(x, dtype=np.float64)
    if x.size and x.min() < 0:
        return -math.inf
    r = sp.csr_matrix(a) @ x - b
    return float(r.min()) if r.size else math.inf


def max_slack_point(a, b, seed: int = 0) -> np.ndarray:
    """Approximate ``argmax_x min_i (Ax - b)_i`` over ``x >= 0`` with a loose ALM solve."""
    a = sp.csr_matrix(a)
    m, n = a.shape
    cap = float(np.max(np.abs(b), initial=0.0)) + 1.0
    # columns: x (n), t, row slacks (m);  rows: A x - t - s = b;  minimize -t
    big = sp.hstack([a, -np.ones((m, 1)), -sp.identity(m)]).tocsc()
    lo = np.zeros(n + 1 + m)
    hi = np.concatenate([np.full(n, np.inf), [cap], np.full(m, np.inf)])
    c = np.zeros(n + 1 + m)
    c[n] = -1.0
    lp = StandardFormLp.create(SparseMatrix.from_scipy(big), b, c, lo, hi)
    res = alm_solve(lp, AlmOptions(target_eps=1e-3, max_outer=40, stall_rounds=40,
                                   inner=SolveOptions(max_steps=0, target_qp_gap=1e-8, seed=seed)))
    return res.x[:n]


def estimate_covering_condition(a, b, c, x=None, c_star: float | None = None) -> ConditionEstimate:
    """Bounds from the slack of a strictly feasible point of ``Ax >= b, x >= 0``.

    ``delta_P >= s / (2 ||d|| sqrt(n))`` and ``delta_D >= min(c) / ||d||``.
    Without ``c_star`` the heuristic ``sqrt(m)`` is used and flagged.
    """
    a = sp.csr_matrix(a)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    m, n = a.shape
    if x is None:
        x = max_slack_point(a, b)
    s = covering_slack(a, b, x)
    if not s > 0:
        raise ConditioningError("no positive-slack point found")
    if np.min(c) <= 0:
        raise ConditioningError("covering costs must be positive")
    d = data_norm(a, b, c)
    heuristic = c_star is None
    cs = math.sqrt(m) if heuristic else float(c_star)
    dp = min(1.0, s / (2.0 * d * math.sqrt(n)))
    dd = min(1.0, float(np.min(c)) / d)
    return ConditionEstimate(d, dp, dd, cs, "covering-slack", heuristic, s)


def choose_beta(est: ConditionEstimate, eps: float, delta: float | None, objective_magnitude: float | None,
                x_bar_norm: float = 0.0) -> BetaChoice:
    """Largest of the three lower bounds on ``beta`` that give an (eps, delta) point.

    ``eps`` or ``delta`` set to ``inf`` (or ``delta=None``) drops that bound.
    """
    cs, d, dp, dd = est.c_star, est.d_norm, est.delta_p_lb, est.delta_d_lb
    if not eps > 0:
        raise ValueError("eps must be positive")
    if delta is not None and math.isfinite(delta):
        if not delta > 0:
            raise ValueError("delta must be positive")
        if not objective_magnitude:
            raise ValueError("objective magnitude must be nonzero when delta is requested")
        objective_bound = (25 * cs / (dp * dd) + 6 * cs**2 + SQRT6 * x_bar_norm * cs) / (delta * abs(objective_magnitude))
    else:
        objective_bound = 0.0
    bounds = {
        "conditioning": 10 * cs / (d * min(dp, dd)),
        "objective": objective_bound,
        "residual": ((1 + SQRT2) * cs + 25 * cs / (2 * dp * dd)) / eps if math.isfinite(eps) else 0.0,
    }
    binding = max(bounds, key=bounds.get)
    beta = bounds[binding]
    if beta <= 0:
        beta, binding = 1.0, "none"
    c20 = 25 * cs / (2 * d * dp * dd)
    return BetaChoice(beta, binding, bounds, c20**2 / beta**3,
                      {"eps": eps, "delta": delta, "objective_magnitude": objective_magnitude, "x_bar_norm": x_bar_norm,
                       "c_star": cs, "d_norm": d, "delta_p_lb": dp, "delta_d_lb": dd})


def scd_iteration_bound(n: int, l: float, l_max: float, eps_bar: float, eta: float, r_sq: float, f_gap0: float) -> int:
    """Steps after which ``P(f(x_j) - f* < eps_bar) >= 1 - eta`` for serial SCD."""
    rate = n * (l + l_max) / l
    inner = l_max / (2 * eta * eps_bar) * (r_sq + 2.0 / l_max * f_gap0)
    return int(math.ceil(rate * abs(math.log(inner))))


def penalty_minimizer(p: PenaltyProblem) -> np.ndarray:
    """Minimizer of the penalty objective as a bounded least-squares problem.

    ``f = 1/2 ||M x - g||^2 + const`` with ``M = [sqrt(b) A; I/sqrt(b)]`` and
    ``g = [sqrt(b)(b + u/beta); (x_bar - beta c)/sqrt(beta)]``.
    """
    lp, beta = p.lp, p.beta
    sb = math.sqrt(beta)
    a = lp.matrix.toarray()
    mat = np.vstack([sb * a, np.eye(lp.n) / sb])
    rhs = np.concatenate([sb * (lp.b + p.u_bar / beta), (p.x_bar - beta * lp.cost) / sb])
    res = lsq_linear(mat, rhs, bounds=(lp.lower, lp.upper), method="bvls", tol=1e-14, lsmr_tol=None)
    return np.clip(res.x, lp.lower, lp.upper)


@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    applicable: bool = True

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass
class PerturbationReport:
    c_star: float
    checks: list[BoundCheck]
    tol: float

    @property
    def passed(self) -> bool:
        return all(ch.slack >= -self.tol for ch in self.checks if ch.applicable)

    def as_dict(self) -> dict:
        return {
            "c_star": self.c_star,
            "passed": self.passed,
            "checks": [{"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "slack": c.slack, "applicable": c.applicable} for c in self.checks],
        }


def verify_perturbation_bounds(lp: StandardFormLp, beta: float, x_beta, x_star, u_star, x_bar=None, u_bar=None,
                               est: ConditionEstimate | None = None, tol: float = 1e-7) -> PerturbationReport:
    """Check the residual, distance and objective bounds for the penalty minimizer ``x_beta``.

    The objective bound applies only when ``est`` is given and ``beta`` clears
    the conditioning threshold. ``dist_to_solution`` is reported but not
    enforced (``applicable=False``).
    """
    if x_star is None or u_star is None:
        raise ValueError("reference solution (x*, u*) is required")
    x_bar = np.zeros(lp.n) if x_bar is None else np.asarray(x_bar, dtype=np.float64)
    u_bar = np.zeros(lp.m) if u_bar is None else np.asarray(u_bar, dtype=np.float64)
    dx = float(np.linalg.norm(np.asarray(x_star) - x_bar))
    du = float(np.linalg.norm(np.asarray(u_star) - u_bar))
    cs = max(dx, du)
    res = float(np.linalg.norm(lp.matrix.matvec(x_beta) - lp.b))
    move = float(np.linalg.norm(x_beta - x_bar))
    sharp_res = (du + math.sqrt(du**2 + dx**2)) / beta
    checks = [
        BoundCheck("residual", res, (1 + SQRT2) * cs / beta),
        BoundCheck("residual_sharp", res, sharp_res),
        BoundCheck("dist_to_anchor", move, SQRT6 * cs),
        BoundCheck("dist_to_anchor_sharp", move, math.sqrt(2 * du * (du + math.sqrt(du**2 + dx**2)) + dx**2)),
        BoundCheck("dist_to_solution", float(np.linalg.norm(x_beta - x_star)), SQRT6 * cs, applicable=False),
    ]
    if est is not None:
        threshold = 10 * cs / (est.d_norm * min(est.delta_p_lb, est.delta_d_lb))
        gap = abs(float(lp.cost @ x_star) - float(lp.cost @ x_beta))
        rhs = (25 * cs / (2 * est.delta_p_lb * est.delta_d_lb) + 6 * cs**2 + SQRT6 * float(np.linalg.norm(x_bar)) * cs) / beta
        checks.append(BoundCheck("objective", gap, rhs, applicable=beta >= threshold))
    return PerturbationReport(cs, checks, tol)
