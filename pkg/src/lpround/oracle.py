"""Reference solutions for small instances.

``exact_lp`` enumerates basic solutions when the LP is tiny and hands larger
ones to HiGHS; ``high_accuracy_lp`` drives the package's own ALM/SCD solver to
a tight tolerance. ``exact_integral`` is brute force over all integral
solutions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .alm import AlmOptions, alm_solve
from .lp_core import StandardFormLp
from .problems import Graph, MultiwayInstance, SetSystem
from .rounding import IntegralSolution, check_multiway, multiway_cost
from .scd import SolveOptions

PIVOT_TOL = 1e-9


class OracleError(RuntimeError):
    pass


class InfeasibleLpError(OracleError):
    pass


class UnboundedLpError(OracleError):
    pass


class InstanceTooLarge(OracleError):
    pass


@dataclass
class LpSolution:
    """``u`` is the multiplier of the minimization form: ``c - A^T u`` are reduced costs."""

    x: np.ndarray
    u: np.ndarray
    objective: float
    method: str

    @property
    def exact(self) -> bool:
        return self.method in ("enumeration", "highs")


def exact_lp(lp: StandardFormLp, max_rows: int = 12, max_patterns: int = 5_000_000) -> LpSolution:
    """Exact optimum and multipliers: basis enumeration for tiny LPs, HiGHS otherwise."""
    fixed = lp.lower == lp.upper
    free = np.flatnonzero(~fixed)
    a = lp.matrix.toarray()
    rhs = lp.b - a[:, fixed] @ lp.lower[fixed]
    rows = _independent_rows(a[:, free], rhs)
    m = rows.size
    if m <= max_rows and _pattern_count(lp, free, m) <= max_patterns:
        return _enumerate(lp, a, free, rows, rhs)
    return _highs(lp)


def _independent_rows(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if a.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if a.shape[1] == 0:
        if np.any(np.abs(rhs) > PIVOT_TOL):
            raise InfeasibleLpError("fixed variables violate the equality rows")
        return np.zeros(0, dtype=np.int64)
    _, rr, piv = sla.qr(a.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(rr))
    rank = int(np.sum(diag > PIVOT_TOL * max(1.0, diag.max(initial=0.0))))
    keep = np.sort(piv[:rank])
    sol, *_ = np.linalg.lstsq(a[keep].T, a.T, rcond=None)
    if np.max(np.abs(sol.T @ rhs[keep] - rhs), initial=0.0) > 1e-7:
        raise InfeasibleLpError("equality rows are inconsistent")
    return keep


def _pattern_count(lp, free, m) -> float:
    n = free.size
    if m > n:
        return math.inf
    boxed = int(np.sum(np.isfinite(lp.upper[free])))
    return math.comb(n, m) * 2.0 ** min(boxed, n - m)


def _enumerate(lp: StandardFormLp, a, free, rows, rhs) -> LpSolution:
    af = a[np.ix_(rows, free)]
    bf = rhs[rows]
    cf = lp.cost[free]
    lo, hi = lp.lower[free], lp.upper[free]
    n, m = free.size, rows.size
    best_obj = math.inf
    candidates = []  # (obj, xf, basis, nonbasic-at-upper mask)
    for basis in itertools.combinations(range(n), m):
        basis = np.array(basis, dtype=np.int64)
        bmat = af[:, basis]
        if m and abs(np.linalg.det(bmat)) < PIVOT_TOL:
            continue
        nb = np.setdiff1d(np.arange(n), basis)
        boxed = nb[np.isfinite(hi[nb])]
        # every nonbasic-at-bound pattern at once: columns are patterns
        pats = np.array(list(itertools.product((0, 1), repeat=boxed.size)), dtype=bool).reshape(1 << boxed.size, boxed.size).T
        xn = np.repeat(lo[nb][:, None], pats.shape[1], axis=1)
        if boxed.size:
            pos = np.searchsorted(nb, boxed)
            xn[pos] = np.where(pats, hi[boxed][:, None], lo[boxed][:, None])
        xb = np.linalg.solve(bmat, bf[:, None] - af[:, nb] @ xn) if m else np.zeros((0, xn.shape[1]))
        ok = np.all((xb >= lo[basis][:, None] - 1e-9) & (xb <= hi[basis][:, None] + 1e-9), axis=0)
        for p in np.flatnonzero(ok):
            xf = np.empty(n)
            xf[basis] = np.clip(xb[:, p], lo[basis], hi[basis])
            xf[nb] = xn[:, p]
            obj = float(cf @ xf)
            best_obj = min(best_obj, obj)
            candidates.append((obj, xf, basis, nb))
    if not candidates:
        raise InfeasibleLpError("no feasible basic solution")
    scale = max(1.0, abs(best_obj))
    for obj, xf, basis, nb in candidates:
        if obj > best_obj + 1e-9 * scale:
            continue
        u_rows = np.linalg.solve(af[:, basis].T, cf[basis]) if m else np.zeros(0)
        d = cf - af.T @ u_rows
        at_lo = np.abs(xf[nb] - lo[nb]) <= 1e-9
        at_hi = np.abs(xf[nb] - hi[nb]) <= 1e-9
        dn = d[nb]
        if np.all((at_lo & (dn >= -1e-9)) | (at_hi & (dn <= 1e-9)) | (at_lo & at_hi)):
            x = lp.lower.copy()
            x[free] = xf
            u = np.zeros(lp.m)
            u[rows] = u_rows
            return LpSolution(x, u, lp.objective(x), "enumeration")
    raise UnboundedLpError("no dual-feasible optimal basis; the LP is unbounded")


def _highs(lp: StandardFormLp) -> LpSolution:
    bounds = np.column_stack([lp.lower, np.where(np.isfinite(lp.upper), lp.upper, np.nan)])
    res = linprog(lp.cost, A_eq=lp.matrix.to_scipy(), b_eq=lp.b,
                  bounds=[(lo, None if np.isnan(hi) else hi) for lo, hi in bounds], method="highs")
    if res.status == 2:
        raise InfeasibleLpError(res.message)
    if res.status == 3:
        raise UnboundedLpError(res.message)
    if res.status != 0:
        raise OracleError(res.message)
    x = np.clip(res.x, lp.lower, lp.upper)
    return LpSolution(x, np.asarray(res.eqlin.marginals, dtype=np.float64), lp.objective(x), "highs")


def high_accuracy_lp(lp: StandardFormLp, blocks=None, target_eps: float = 1e-10, max_outer: int = 80,
                     seed: int = 0) -> LpSolution:
    """ALM/SCD run to QP gap 1e-12 with beta growing x10 until the residual is tiny.

    Not exact; labeled ``"high-accuracy"``.
    """
    opts = AlmOptions(
        beta0=1.0,
        beta_growth=10.0,
        max_outer=max_outer,
        inner=SolveOptions(max_steps=0, target_qp_gap=1e-12, blocks=blocks, seed=seed),
        inner_epochs=5000,
        target_eps=target_eps,
        stall_rounds=max_outer,
    )
    res = alm_solve(lp, opts)
    return LpSolution(res.x, res.u, lp.objective(res.x), "high-accuracy")


# --- exhaustive integral search ---------------------------------------------


def _masks(n: int, chunk: int = 1 << 16):
    total = 1 << n
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield ((ids[:, None] >> np.arange(n)) & 1).astype(bool)


def _best_subset(n, costs, feasible, maximize):
    best_cost, best = (-math.inf if maximize else math.inf), None
    for sel in _masks(n):
        ok = feasible(sel)
        if not ok.any():
            continue
        vals = sel[ok] @ costs
        j = int(np.argmax(vals) if maximize else np.argmin(vals))
        if (vals[j] > best_cost) if maximize else (vals[j] < best_cost):
            best_cost, best = float(vals[j]), sel[ok][j].copy()
    return best_cost, best


def exact_integral(instance, problem: str, max_vars: int = 25) -> IntegralSolution:
    """Optimal integral solution by exhaustive search.

    ``problem`` is one of ``vertex_cover`` and ``independent_set`` (Graph),
    ``set_cover`` and ``set_packing`` (SetSystem), ``multiway_cut``
    (MultiwayInstance, at most 12 vertices and k <= 4).
    """
    if problem in ("vertex_cover", "independent_set"):
        g: Graph = instance
        if g.n > max_vars:
            raise InstanceTooLarge(f"{g.n} vertices > {max_vars}")
        u, v = g.edges[:, 0], g.edges[:, 1]
        if problem == "vertex_cover":
            feas = lambda s: np.all(s[:, u] | s[:, v], axis=1)
        else:
            feas = lambda s: ~np.any(s[:, u] & s[:, v], axis=1)
        cost, sel = _best_subset(g.n, g.vertex_costs, feas, problem == "independent_set")
    elif problem in ("set_cover", "set_packing"):
        ss: SetSystem = instance
        if ss.n_sets > max_vars:
            raise InstanceTooLarge(f"{ss.n_sets} sets > {max_vars}")
        w = ss.incidence().toarray()
        if problem == "set_cover":
            feas = lambda s: np.all((s.astype(float) @ (w > 0).T) >= 1, axis=1)
        else:
            feas = lambda s: np.all((s.astype(float) @ w.T) <= 1 + 1e-12, axis=1)
        cost, sel = _best_subset(ss.n_sets, ss.costs, feas, problem == "set_packing")
    elif problem == "multiway_cut":
        return _exact_multiway(instance)
    else:
        raise ValueError(f"unknown problem {problem!r}")
    if sel is None:
        raise InfeasibleLpError("no feasible integral solution")
    return IntegralSolution(np.flatnonzero(sel), cost, True)


def _exact_multiway(mi: MultiwayInstance) -> IntegralSolution:
    g, k = mi.graph, mi.k
    if g.n > 12 or k > 4:
        raise InstanceTooLarge("multiway cut enumeration needs <= 12 vertices and k <= 4")
    others = [v for v in range(g.n) if v not in set(mi.terminals)]
    grid = np.array(list(itertools.product(range(k), repeat=len(others))), dtype=np.int64).reshape(-1, len(others))
    assign = np.empty((grid.shape[0], g.n), dtype=np.int64)
    assign[:, others] = grid
    assign[:, mi.terminals] = np.arange(k)
    if g.m:
        split = assign[:, g.edges[:, 0]] != assign[:, g.edges[:, 1]]
        costs = split @ g.edge_costs
    else:
        costs = np.zeros(grid.shape[0])
    j = int(np.argmin(costs))
    best = assign[j]
    assert check_multiway(mi, best)[0]
    return IntegralSolution(best, multiway_cost(g, best), True)
