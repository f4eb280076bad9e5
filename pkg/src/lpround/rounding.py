"""Feasibility repair for approximate LP solutions and oblivious rounding schemes.

Repair functions scale an (ε, δ)-approximate point until it satisfies its
constraint family exactly. Rounders turn a feasible fractional point into an
integral solution and re-check validity before returning.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp

from .lp_core import ApproxCertificate, SparseMatrix
from .problems import Graph, MultiwayInstance, SetSystem

# feasibility slack for floating-point comparisons against integral right-hand sides
TOL = 1e-9


class InfeasibleInputError(ValueError):
    """A rounding precondition (feasible fractional input) does not hold."""


class RepairError(ValueError):
    pass


class RoundingFailure(RuntimeError):
    """Every repetition of a randomized rounder failed."""


@dataclass
class FractionalSolution:
    x: np.ndarray
    certificate: ApproxCertificate | None = None
    alpha: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.size and (self.x.min() < -TOL or self.x.max() > 1 + TOL):
            raise ValueError("fractional solution must lie in [0, 1]")


@dataclass
class IntegralSolution:
    """``selected`` is an index array, or for multiway cut the terminal index of each vertex."""

    selected: np.ndarray
    cost: float
    feasible: bool
    violations: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def _as_csr(matrix) -> sp.csr_matrix:
    if isinstance(matrix, SparseMatrix):
        return matrix.to_scipy().tocsr()
    if sp.issparse(matrix):
        return sp.csr_matrix(matrix)
    return sp.csr_matrix(np.atleast_2d(np.asarray(matrix, dtype=np.float64)))


def _edge_sums(g: Graph, x: np.ndarray) -> np.ndarray:
    return x[g.edges[:, 0]] + x[g.edges[:, 1]]


# --- repair ----------------------------------------------------------------


def repair_covering(matrix, b, x_hat, eps: float, q: float = 1.0) -> FractionalSolution:
    """Scale by ``1/(1 - eps/q)`` and clip to the unit box; the result must satisfy ``Ax >= b``.

    ``q`` is the minimum violation of any integral infeasible point (at least 1
    for integer data), see ``covering_q``.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    alpha = eps / q
    if not 0 <= alpha < 1:
        raise RepairError(f"need 0 <= eps/q < 1, got {alpha}")
    x = np.clip(np.asarray(x_hat, dtype=np.float64) / (1.0 - alpha), 0.0, 1.0)
    a = _as_csr(matrix)
    short = np.asarray(b, dtype=np.float64) - a @ x
    bad = np.flatnonzero(short > TOL)
    if bad.size:
        raise RepairError(f"{bad.size} covering rows still violated after scaling (worst {short.max():.3g})")
    return FractionalSolution(x, alpha=alpha)


def repair_vertex_cover(g: Graph, x_hat, eps: float) -> FractionalSolution:
    """Scale by ``1/(1 - eps)``; every edge then satisfies ``x_u + x_v >= 1``."""
    if eps >= 1:
        raise RepairError("eps must be < 1")
    eps = max(float(eps), 0.0)
    x = np.clip(np.asarray(x_hat, dtype=np.float64) / (1.0 - eps), 0.0, 1.0)
    if g.m:
        short = 1.0 - _edge_sums(g, x)
        if short.max() > TOL:
            raise RepairError(f"edge constraint violated by {short.max():.3g} after scaling; input residual exceeds eps")
    return FractionalSolution(x, alpha=eps)


def repair_packing(matrix, u_hat, capacity=None) -> FractionalSolution:
    """Shrink ``u`` by the tight factor ``1 + max((Mu - cap)/cap)_+`` so that ``Mu <= cap``."""
    u = np.asarray(u_hat, dtype=np.float64)
    m = _as_csr(matrix)
    cap = np.ones(m.shape[0]) if capacity is None else np.asarray(capacity, dtype=np.float64)
    if np.any(cap <= 0):
        raise ValueError("capacities must be positive")
    load = m @ u
    alpha = max(float(np.max((load - cap) / cap)) if load.size else 0.0, 0.0)
    out = u / (1.0 + alpha)
    if np.any(m @ out > cap * (1 + 1e-12)):
        raise RepairError("packing repair failed")
    return FractionalSolution(np.clip(out, 0.0, 1.0), alpha=alpha)


def covering_q(matrix, b, max_support: int = 20) -> float:
    """Smallest positive row shortfall ``b_i - A_i x`` over binary ``x`` on each row's support.

    This is exact for a single row and a valid lower bound on the program-wide
    minimum violation in general.
    """
    a = _as_csr(matrix)
    b = np.asarray(b, dtype=np.float64)
    best = math.inf
    for i in range(a.shape[0]):
        vals = a.data[a.indptr[i] : a.indptr[i + 1]]
        if vals.size > max_support:
            raise ValueError(f"row {i} has {vals.size} variables; enumeration limit is {max_support}")
        for bits in itertools.product((0.0, 1.0), repeat=vals.size):
            short = b[i] - float(np.dot(vals, bits))
            if short > TOL:
                best = min(best, short)
    return best


# --- rounders --------------------------------------------------------------


def round_vertex_cover(g: Graph, fs: FractionalSolution) -> IntegralSolution:
    """Select every vertex with ``x_v >= 1/2``."""
    x = fs.x
    if g.m and np.min(_edge_sums(g, x)) < 1 - TOL:
        raise InfeasibleInputError("fractional point violates an edge constraint")
    chosen = x >= 0.5 - TOL
    cost = float(g.vertex_costs[chosen].sum())
    sol = IntegralSolution(np.flatnonzero(chosen), cost, *check_vertex_cover(g, chosen))
    frac = float(g.vertex_costs @ x)
    assert sol.feasible and cost <= 2 * frac + 1e-9 * max(1.0, frac)
    return sol


def check_vertex_cover(g: Graph, chosen: np.ndarray) -> tuple[bool, list]:
    if not g.m:
        return True, []
    miss = ~(chosen[g.edges[:, 0]] | chosen[g.edges[:, 1]])
    return not miss.any(), [tuple(e) for e in g.edges[miss].tolist()]


def _check_cover_input(ss: SetSystem, x: np.ndarray) -> np.ndarray:
    inc = ss.incidence().to_scipy().tocsr()
    inc.data[:] = 1.0
    if ss.n_elements and np.min(inc @ x) < 1 - TOL:
        raise InfeasibleInputError("fractional point leaves an element uncovered")
    return inc


def check_set_cover(ss: SetSystem, chosen: np.ndarray) -> tuple[bool, list]:
    covered = np.zeros(ss.n_elements, dtype=bool)
    for j in np.flatnonzero(chosen):
        covered[ss.sets[j]] = True
    return bool(covered.all()), np.flatnonzero(~covered).tolist()


def round_set_cover_threshold(ss: SetSystem, fs: FractionalSolution, f: int | None = None) -> IntegralSolution:
    """Pick every set with ``x_s >= 1/f``; ``f`` defaults to the element frequency."""
    f = ss.frequency() if f is None else int(f)
    if f < 1:
        raise ValueError("f must be >= 1")
    _check_cover_input(ss, fs.x)
    chosen = fs.x >= 1.0 / f - TOL
    cost = float(ss.costs[chosen].sum())
    ok, missing = check_set_cover(ss, chosen)
    frac = float(ss.costs @ fs.x)
    assert ok and cost <= f * frac + 1e-9 * max(1.0, frac)
    return IntegralSolution(np.flatnonzero(chosen), cost, ok, missing, {"f": f})


def cover_inclusion_probability(x: np.ndarray, n_elements: int) -> np.ndarray:
    """Per-set inclusion probability after ``d = ceil(ln 2N)`` independent trials."""
    d = max(1, math.ceil(math.log(2 * max(n_elements, 1))))
    return 1.0 - (1.0 - np.clip(x, 0.0, 1.0)) ** d


def round_set_cover_randomized(ss: SetSystem, fs: FractionalSolution, seed) -> IntegralSolution:
    """Independent inclusion; an uncovering sample is returned with ``feasible=False``."""
    rng = np.random.default_rng(seed)
    p = cover_inclusion_probability(fs.x, ss.n_elements)
    chosen = rng.random(p.size) < p
    ok, missing = check_set_cover(ss, chosen)
    return IntegralSolution(np.flatnonzero(chosen), float(ss.costs[chosen].sum()), ok, missing)


def check_packing(ss: SetSystem, chosen: np.ndarray) -> tuple[bool, list]:
    load = np.zeros(ss.n_elements)
    for j in np.flatnonzero(chosen):
        load[ss.sets[j]] += ss.weights[j]
    over = np.flatnonzero(load > 1 + 1e-12)
    return not over.size, over.tolist()


def round_set_packing(ss: SetSystem, fs: FractionalSolution, k: int, theta: float | None = None, seed=None) -> IntegralSolution:
    """Sample with probability ``x_s/(k theta)``, then delete on capacity conflicts.

    A sampled set ``s`` containing ``a`` is marked when the sampled sets at
    ``a`` with weight at least ``w_{a,s}`` (``s`` included) weigh more than 1.
    Marked sets are removed together, so each element ends within capacity.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    theta = 1.0 / k if theta is None else float(theta)
    if not theta > 0:
        raise ValueError("theta must be positive")
    rng = np.random.default_rng(seed)
    raw = fs.x / (k * theta)
    capped = int(np.sum(raw > 1.0))
    sampled = rng.random(raw.size) < np.minimum(raw, 1.0)

    # per element: (weight, set) pairs of sampled sets
    at: dict[int, list[tuple[float, int]]] = {}
    for j in np.flatnonzero(sampled):
        for a, w in zip(ss.sets[j].tolist(), ss.weights[j].tolist()):
            at.setdefault(a, []).append((w, j))
    marked = np.zeros(raw.size, dtype=bool)
    for entries in at.values():
        if sum(w for w, _ in entries) <= 1 + 1e-12:
            continue
        ws = np.array([w for w, _ in entries])
        for w, j in entries:
            if ws[ws >= w].sum() > 1 + 1e-12:
                marked[j] = True
    kept = sampled & ~marked
    ok, over = check_packing(ss, kept)
    assert ok
    stats = {"sampled": int(sampled.sum()), "deleted": int((sampled & marked).sum()), "capped": capped}
    return IntegralSolution(np.flatnonzero(kept), float(ss.costs[kept].sum()), ok, over, stats)


def check_independent_set(g: Graph, chosen: np.ndarray) -> tuple[bool, list]:
    if not g.m:
        return True, []
    clash = chosen[g.edges[:, 0]] & chosen[g.edges[:, 1]]
    return not clash.any(), [tuple(e) for e in g.edges[clash].tolist()]


def multiway_cost(g: Graph, assignment: np.ndarray) -> float:
    if not g.m:
        return 0.0
    split = assignment[g.edges[:, 0]] != assignment[g.edges[:, 1]]
    return float(g.edge_costs[split].sum())


def check_multiway(mi: MultiwayInstance, assignment: np.ndarray) -> tuple[bool, list]:
    bad = [j for j, t in enumerate(mi.terminals) if assignment[t] != j]
    return not bad, bad


def round_multiway_cut(mi: MultiwayInstance, xv: np.ndarray, seed=None) -> IntegralSolution:
    """Single-threshold rounding on the simplex relaxation.

    Draw ``theta ~ U(0, 1)`` and a random terminal order; each vertex goes to
    the first terminal ``i`` in that order with ``x_v^i >= theta``, and any
    vertex left over goes to the last terminal in the order.
    """
    xv = np.asarray(xv, dtype=np.float64)
    k = mi.k
    if xv.shape != (mi.graph.n, k):
        raise ValueError(f"expected shape {(mi.graph.n, k)}, got {xv.shape}")
    off = np.abs(xv.sum(axis=1) - 1.0)
    if off.size and (off.max() > 1e-9 or xv.min() < -1e-9):
        raise InfeasibleInputError("a vertex block is not on the simplex")
    for j, t in enumerate(mi.terminals):
        if xv[t, j] < 1 - 1e-9:
            raise InfeasibleInputError(f"terminal {t} is not at its own corner")
    rng = np.random.default_rng(seed)
    theta = 0.0
    while theta == 0.0:
        theta = rng.random()
    order = rng.permutation(k)
    assignment = np.full(mi.graph.n, -1, dtype=np.int64)
    for i in order[:-1]:
        hit = (assignment < 0) & (xv[:, i] >= theta)
        assignment[hit] = i
    assignment[assignment < 0] = order[-1]
    ok, bad = check_multiway(mi, assignment)
    assert ok
    return IntegralSolution(assignment, multiway_cost(mi.graph, assignment), ok, bad, {"theta": theta, "order": order.tolist()})


def best_of(rounder: Callable[[int], IntegralSolution], repetitions: int = 10, seeds: Iterable[int] | None = None,
            maximize: bool = False) -> IntegralSolution:
    """Run ``rounder(seed)`` per seed and keep the best feasible result."""
    seeds = list(range(repetitions)) if seeds is None else list(seeds)
    best = None
    costs = []
    for s in seeds:
        sol = rounder(s)
        costs.append(sol.cost if sol.feasible else None)
        if not sol.feasible:
            continue
        if best is None or (sol.cost > best.cost if maximize else sol.cost < best.cost):
            best = sol
    if best is None:
        raise RoundingFailure(f"all {len(seeds)} repetitions failed")
    best.stats = {**best.stats, "repetition_costs": costs}
    return best
