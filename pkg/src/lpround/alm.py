"""Proximal method of multipliers around the penalty subproblem.

Each round minimizes the penalty objective for the current ``(beta, u_bar,
x_bar)`` with SCD, then moves the anchors: ``u_bar <- u_bar - beta (Ax - b)``
and ``x_bar <- x``. ``beta`` grows by ``beta_growth`` whenever a round fails to
halve the max-norm residual.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .lp_core import ApproxCertificate, StandardFormLp, certify, dual_bound
from .penalty import PenaltyProblem
from .scd import SolveOptions, TimeLimitExceeded, solve, solve_parallel


class StalledError(RuntimeError):
    """The residual stopped decreasing for several consecutive rounds."""


@dataclass
class AlmOptions:
    beta0: float = 5.0
    beta_growth: float = 2.0
    beta_max: float = math.inf
    max_outer: int = 20
    inner: SolveOptions = field(default_factory=lambda: SolveOptions(max_steps=0, target_qp_gap=1e-6))
    # inner step budget in epochs, used when inner.max_steps is 0
    inner_epochs: int = 200
    target_eps: float = 0.1
    target_delta: float | None = None
    stall_rounds: int = 3
    u0: np.ndarray | None = None
    x0: np.ndarray | None = None
    time_limit: float | None = None

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if self.beta_growth < 1:
            raise ValueError("beta_growth must be >= 1")


@dataclass
class RoundStats:
    round: int
    beta: float
    eps: float
    objective: float
    dual_bound: float
    gap_estimate: float | None
    steps: int
    wall_time: float
    qp_gap_surrogate: float


class AlmResult(NamedTuple):
    x: np.ndarray
    u: np.ndarray
    certificate: ApproxCertificate
    rounds: list[RoundStats]


def _gap(obj: float, bound: float) -> float | None:
    if not math.isfinite(bound) or bound == 0.0:
        return None
    return abs(obj - bound) / abs(bound)


def alm_solve(lp: StandardFormLp, opts: AlmOptions | None = None) -> AlmResult:
    """Run outer rounds until ``||Ax - b||_inf <= target_eps`` (and, if set, the dual-bound gap).

    The returned certificate is measured against the Lagrangian bound of the
    final multipliers (``reference_kind="dual-bound"``) when that bound is
    finite and nonzero; otherwise it carries no delta.
    """
    opts = opts or AlmOptions()
    t_start = time.monotonic()
    deadline = None if opts.time_limit is None else t_start + opts.time_limit
    u = np.zeros(lp.m) if opts.u0 is None else np.array(opts.u0, dtype=np.float64)
    x_bar = lp.clip(np.zeros(lp.n) if opts.x0 is None else np.array(opts.x0, dtype=np.float64))
    beta = float(opts.beta0)
    rounds: list[RoundStats] = []
    prev_eps = math.inf
    non_decreasing = 0
    x = x_bar
    inner = opts.inner

    for t in range(opts.max_outer):
        p = PenaltyProblem(lp, beta, u, x_bar)
        max_steps = inner.max_steps or opts.inner_epochs * max(lp.n, 1)
        sopts = SolveOptions(
            max_steps=max_steps,
            target_qp_gap=inner.target_qp_gap,
            check_interval=inner.check_interval,
            threads=inner.threads,
            blocks=inner.blocks,
            step_safety=inner.step_safety,
            seed=inner.seed + t,
            x0=x_bar,
            deadline=deadline,
        )
        t0 = time.perf_counter()
        try:
            res = solve_parallel(p, sopts) if inner.threads > 1 else solve(p, sopts)
        except TimeLimitExceeded as exc:
            partial = exc.partial
            exc.partial = AlmResult(partial.x, u, partial.certificate, rounds)
            raise
        x = res.x
        r = lp.matrix.matvec(x) - lp.b
        eps = float(np.max(np.abs(r))) if r.size else 0.0
        u = u - beta * r
        bound = dual_bound(lp, u)
        obj = float(lp.cost @ x)
        gap = _gap(obj, bound)
        rounds.append(RoundStats(t, beta, eps, lp.objective(x), bound, gap, res.stats.steps, time.perf_counter() - t0, res.stats.qp_gap_surrogate))

        done = eps <= opts.target_eps and (opts.target_delta is None or gap is None or gap <= opts.target_delta)
        if done:
            break
        if deadline is not None and time.monotonic() > deadline:
            raise TimeLimitExceeded("time limit reached between ALM rounds", AlmResult(x, u, _certificate(lp, x, u), rounds))
        if eps >= prev_eps and eps > opts.target_eps:
            non_decreasing += 1
            if non_decreasing >= opts.stall_rounds:
                raise StalledError(f"residual has not decreased for {non_decreasing} rounds (eps={eps:.3g})")
        else:
            non_decreasing = 0
        if eps > 0.5 * prev_eps:
            beta = min(beta * opts.beta_growth, opts.beta_max)
        prev_eps = eps
        x_bar = x

    return AlmResult(x, u, _certificate(lp, x, u), rounds)


def _certificate(lp, x, u) -> ApproxCertificate:
    bound = dual_bound(lp, u)
    if math.isfinite(bound) and bound != 0.0:
        ref = -bound if lp.maximize else bound
        return certify(lp, x, ref, "dual-bound")
    return certify(lp, x)
