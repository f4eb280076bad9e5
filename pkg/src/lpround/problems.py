"""Combinatorial instances and their standard-form LP encodings.

Every ``>=`` / ``<=`` row becomes an equality with a slack column bounded to
``[0, inf)``; decision variables keep their ``[0, 1]`` box as variable bounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lp_core import SparseMatrix, StandardFormLp
from .scd import Block

log = logging.getLogger(__name__)


class ParseError(ValueError):
    pass


@dataclass(eq=False)
class Graph:
    """Undirected graph on vertices ``0..n-1`` without self-loops or parallel edges."""

    n: int
    edges: np.ndarray
    edge_costs: np.ndarray
    vertex_costs: np.ndarray
    labels: list = field(default=None, repr=False)
    self_loops_dropped: int = 0

    @classmethod
    def from_edges(cls, n: int, edges, edge_costs=None, vertex_costs=None, labels=None) -> "Graph":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        costs = np.ones(len(edges)) if edge_costs is None else np.asarray(edge_costs, dtype=np.float64)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise IndexError("edge endpoint out of range")
        if np.any(costs < 0):
            raise ValueError("edge costs must be nonnegative")
        loops = edges[:, 0] == edges[:, 1]
        edges, costs = edges[~loops], costs[~loops]
        merged: dict[tuple[int, int], float] = {}
        for (u, v), c in zip(edges.tolist(), costs.tolist()):
            key = (u, v) if u < v else (v, u)
            merged[key] = merged.get(key, 0.0) + c
        keys = sorted(merged)
        e = np.array(keys, dtype=np.int64).reshape(-1, 2)
        ec = np.array([merged[k] for k in keys], dtype=np.float64)
        vc = np.ones(n) if vertex_costs is None else np.asarray(vertex_costs, dtype=np.float64)
        labels = list(range(n)) if labels is None else list(labels)
        return cls(n, e, ec, vc, labels, int(loops.sum()))

    @property
    def m(self) -> int:
        return len(self.edges)

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges.tolist():
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def index_of(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"vertex {label!r} is not in the graph") from None


@dataclass(eq=False)
class SetSystem:
    """Sets over a universe ``0..n_elements-1`` with per-(element, set) weights."""

    n_elements: int
    sets: list[np.ndarray]
    weights: list[np.ndarray]
    costs: np.ndarray

    @classmethod
    def create(cls, n_elements: int, sets, weights=None, costs=None) -> "SetSystem":
        sets = [np.asarray(s, dtype=np.int64) for s in sets]
        if weights is None:
            weights = [np.ones(len(s)) for s in sets]
        weights = [np.asarray(w, dtype=np.float64) for w in weights]
        costs = np.ones(len(sets)) if costs is None else np.asarray(costs, dtype=np.float64)
        for s, w in zip(sets, weights):
            if s.shape != w.shape:
                raise ValueError("each set needs one weight per element")
            if np.any(w <= 0):
                raise ValueError("weights must be positive")
            if s.size and (s.min() < 0 or s.max() >= n_elements):
                raise IndexError("element out of range")
            if np.unique(s).size != s.size:
                raise ValueError("repeated element within a set")
        return cls(n_elements, sets, weights, costs)

    @classmethod
    def independent_set(cls, g: Graph) -> "SetSystem":
        """Sets are vertices, elements are edges (unit weights)."""
        incident: list[list[int]] = [[] for _ in range(g.n)]
        for e, (u, v) in enumerate(g.edges.tolist()):
            incident[u].append(e)
            incident[v].append(e)
        return cls.create(g.m, incident, costs=g.vertex_costs)

    @classmethod
    def edge_cover_of(cls, g: Graph) -> "SetSystem":
        """Vertex cover as set cover: sets are vertices, elements are edges."""
        return cls.independent_set(g)

    @property
    def n_sets(self) -> int:
        return len(self.sets)

    def incidence(self) -> SparseMatrix:
        """Element-by-set weight matrix."""
        rows = np.concatenate([s for s in self.sets]) if self.sets else np.zeros(0, np.int64)
        cols = np.concatenate([np.full(len(s), j) for j, s in enumerate(self.sets)]) if self.sets else np.zeros(0, np.int64)
        vals = np.concatenate(self.weights) if self.sets else np.zeros(0)
        return SparseMatrix.from_triplets(rows, cols, vals, (self.n_elements, self.n_sets))

    def frequency(self) -> int:
        """Largest number of sets sharing one element."""
        if not self.sets:
            return 0
        counts = np.bincount(np.concatenate(self.sets), minlength=self.n_elements) if self.n_elements else np.zeros(0)
        return int(counts.max()) if counts.size else 0

    def column_sparsity(self) -> int:
        """Largest number of elements in one set."""
        return max((len(s) for s in self.sets), default=0)


@dataclass(eq=False)
class MultiwayInstance:
    graph: Graph
    terminals: list[int]

    def __post_init__(self):
        t = [int(v) for v in self.terminals]
        if len(t) < 2:
            raise ValueError("need at least two terminals")
        if len(set(t)) != len(t):
            raise ValueError("terminal collision: terminals must be distinct")
        if min(t) < 0 or max(t) >= self.graph.n:
            raise IndexError("terminal out of range")
        self.terminals = t

    @property
    def k(self) -> int:
        return len(self.terminals)


@dataclass(eq=False)
class EncodedProblem:
    """An LP plus the bookkeeping to move between LP columns and decisions.

    ``decision`` holds the LP column of each combinatorial decision (a
    ``(|V|, k)`` array for multiway cut). ``slack``, ``slack_row`` and
    ``slack_sign`` describe the slack column attached to each inequality row.
    """

    kind: str
    lp: StandardFormLp
    decision: np.ndarray
    slack: np.ndarray
    slack_row: np.ndarray
    slack_sign: np.ndarray
    blocks: list[Block] = field(default_factory=list)
    edge_vars: np.ndarray | None = None
    strong_rows: int = 0
    column_sparsity: int = 0

    def decode(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.decision]

    def structural_columns(self) -> np.ndarray:
        mask = np.ones(self.lp.n, dtype=bool)
        mask[self.slack] = False
        return np.flatnonzero(mask)

    def full_solution(self, values: np.ndarray) -> np.ndarray:
        """Lift decision values to a full LP point with the best slack values.

        For multiway cut the edge variables are set to ``|x_u^i - x_v^i|``.
        Slacks are set to ``max(0, (b - A_struct x) / sign)``, the value that
        minimizes each row's residual.
        """
        values = np.asarray(values, dtype=np.float64).reshape(self.decision.shape)
        x = np.zeros(self.lp.n)
        x[self.decision] = values
        if self.edge_vars is not None:
            xv = values
            edges = self._graph_edges
            x[self.edge_vars] = np.abs(xv[edges[:, 0]] - xv[edges[:, 1]]).ravel()
        return self.fill_slacks(x)

    def fill_slacks(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=np.float64, copy=True)
        x[self.slack] = 0.0
        partial = self.lp.matrix.matvec(x) - self.lp.b
        need = -partial[self.slack_row] / self.slack_sign
        x[self.slack] = np.clip(need, 0.0, None)
        return x

    def violation(self, x: np.ndarray) -> float:
        """Largest inequality-row violation of the structural part of ``x``."""
        full = self.fill_slacks(x)
        r = self.lp.matrix.matvec(full) - self.lp.b
        return float(np.max(np.abs(r))) if r.size else 0.0

    _graph_edges: np.ndarray | None = field(default=None, repr=False)


def _assemble(rows, cols, vals, n_struct, row_rhs, slack_sign, cost_struct, lo, hi, sense="minimize"):
    # the first len(slack_sign) rows are inequalities and get a slack column
    m = len(row_rhs)
    ms = len(slack_sign)
    slack = n_struct + np.arange(ms, dtype=np.int64)
    rows = np.concatenate([np.asarray(rows, dtype=np.int64), np.arange(ms, dtype=np.int64)])
    cols = np.concatenate([np.asarray(cols, dtype=np.int64), slack])
    vals = np.concatenate([np.asarray(vals, dtype=np.float64), np.asarray(slack_sign, dtype=np.float64)])
    mat = SparseMatrix.from_triplets(rows, cols, vals, (m, n_struct + ms))
    c = np.concatenate([cost_struct, np.zeros(ms)])
    lower = np.concatenate([lo, np.zeros(ms)])
    upper = np.concatenate([hi, np.full(ms, np.inf)])
    lp = StandardFormLp.create(mat, np.asarray(row_rhs, dtype=np.float64), c, lower, upper, sense)
    return lp, slack


def encode_vertex_cover(g: Graph) -> EncodedProblem:
    """``min c^T x  s.t.  x_u + x_v - s_e = 1,  x in [0,1]^V,  s >= 0``."""
    m = g.m
    rows = np.repeat(np.arange(m), 2)
    cols = g.edges.ravel()
    sign = -np.ones(m)
    lp, slack = _assemble(rows, cols, np.ones(2 * m), g.n, np.ones(m), sign, g.vertex_costs, np.zeros(g.n), np.ones(g.n))
    return EncodedProblem("vertex_cover", lp, np.arange(g.n), slack, np.arange(m), sign)


def encode_set_cover(ss: SetSystem) -> EncodedProblem:
    """One row per element: ``sum_{s containing a} x_s - t_a = 1``."""
    inc = ss.incidence().to_scipy().tocoo()
    covered = np.zeros(ss.n_elements, dtype=bool)
    covered[inc.row] = True
    if not covered.all():
        raise ValueError(f"elements {np.flatnonzero(~covered).tolist()} belong to no set")
    m = ss.n_elements
    sign = -np.ones(m)
    lp, slack = _assemble(inc.row, inc.col, np.ones(inc.nnz), ss.n_sets, np.ones(m), sign, ss.costs, np.zeros(ss.n_sets), np.ones(ss.n_sets))
    return EncodedProblem("set_cover", lp, np.arange(ss.n_sets), slack, np.arange(m), sign)


def encode_set_packing_strong(ss: SetSystem, k: int | None = None) -> EncodedProblem:
    """Weighted packing rows plus, per element, ``sum_{s: w_as > 1/2} x_s <= 1``.

    Duplicate rows are dropped, as are strengthening rows with a single member
    (they restate the variable bound). ``k`` defaults to the column sparsity.
    """
    per_element: list[list[tuple[int, float]]] = [[] for _ in range(ss.n_elements)]
    for j, (s, w) in enumerate(zip(ss.sets, ss.weights)):
        for a, wa in zip(s.tolist(), w.tolist()):
            per_element[a].append((j, wa))
    seen: set = set()
    row_data: list[list[tuple[int, float]]] = []
    for entries in per_element:
        if not entries:
            continue
        key = tuple(sorted(entries))
        if key not in seen:
            seen.add(key)
            row_data.append(list(key))
    n_weight = len(row_data)
    for entries in per_element:
        big = sorted((j, 1.0) for j, wa in entries if wa > 0.5)
        if len(big) < 2:
            continue
        key = tuple(big)
        if key not in seen:
            seen.add(key)
            row_data.append(list(key))
    rows, cols, vals = [], [], []
    for r, entries in enumerate(row_data):
        for j, wa in entries:
            rows.append(r)
            cols.append(j)
            vals.append(wa)
    m = len(row_data)
    sign = np.ones(m)
    lp, slack = _assemble(rows, cols, vals, ss.n_sets, np.ones(m), sign, ss.costs, np.zeros(ss.n_sets), np.ones(ss.n_sets), "maximize")
    k = ss.column_sparsity() if k is None else int(k)
    return EncodedProblem("set_packing", lp, np.arange(ss.n_sets), slack, np.arange(m), sign,
                          strong_rows=m - n_weight, column_sparsity=k)


def encode_multiway_cut(mi: MultiwayInstance) -> EncodedProblem:
    """Linearized multiway-cut relaxation with simplex blocks per vertex.

    Columns: ``x_v^i`` at ``v*k + i``; ``x_uv^i`` at ``k|V| + e*k + i``; then
    two slacks per (edge, label). Rows: the two edge inequalities per (edge,
    label), then one simplex row per non-terminal vertex. Terminal ``j`` is
    pinned to corner ``e_j`` through its bounds.
    """
    g, k = mi.graph, mi.k
    nv, ne = g.n, g.m
    base_e = k * nv
    n_struct = k * (nv + ne)
    rows, cols, vals = [], [], []
    r = 0
    for e, (u, v) in enumerate(g.edges.tolist()):
        for i in range(k):
            xe = base_e + e * k + i
            # x_uv^i - x_v^i + x_u^i - s = 0   and   x_uv^i - x_u^i + x_v^i - s' = 0
            rows += [r, r, r, r + 1, r + 1, r + 1]
            cols += [xe, v * k + i, u * k + i, xe, u * k + i, v * k + i]
            vals += [1.0, -1.0, 1.0, 1.0, -1.0, 1.0]
            r += 2
    m_ineq = r
    term = set(mi.terminals)
    rhs = [0.0] * m_ineq
    for v in range(nv):
        if v in term:
            continue
        # sum_i x_v^i = 1, also kept exact by block projection during SCD
        rows += [r] * k
        cols += list(range(v * k, v * k + k))
        vals += [1.0] * k
        rhs.append(1.0)
        r += 1
    lo = np.zeros(n_struct)
    hi = np.ones(n_struct)
    for j, t in enumerate(mi.terminals):
        corner = np.zeros(k)
        corner[j] = 1.0
        lo[t * k : t * k + k] = corner
        hi[t * k : t * k + k] = corner
    cost = np.zeros(n_struct)
    cost[base_e:] = 0.5 * np.repeat(g.edge_costs, k)
    sign = -np.ones(m_ineq)
    lp, slack = _assemble(rows, cols, vals, n_struct, np.array(rhs), sign, cost, lo, hi)
    blocks = [Block(np.arange(v * k, v * k + k), simplex=True) for v in range(nv) if v not in term]
    decision = np.arange(k * nv).reshape(nv, k)
    edge_vars = base_e + np.arange(k * ne)
    enc = EncodedProblem("multiway_cut", lp, decision, slack, np.arange(m_ineq), sign, blocks, edge_vars)
    enc._graph_edges = g.edges
    return enc


# --- file loaders ----------------------------------------------------------


def _content_lines(path):
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_edge_list(path) -> Graph:
    """Read ``u v [cost]`` lines. Vertex labels are relabeled densely in order of appearance."""
    labels: dict[str, int] = {}
    edges, costs = [], []
    for lineno, line in _content_lines(path):
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(f"{path}:{lineno}: expected 'u v [cost]', got {line!r}")
        try:
            cost = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad cost {parts[2]!r}") from None
        ids = []
        for tok in parts[:2]:
            if tok not in labels:
                labels[tok] = len(labels)
            ids.append(labels[tok])
        edges.append(ids)
        costs.append(cost)
    names = [_label(t) for t in labels]
    g = Graph.from_edges(len(labels), np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(costs), labels=names)
    if g.self_loops_dropped:
        log.warning("%s: dropped %d self-loop(s)", path, g.self_loops_dropped)
    return g


def _label(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def load_terminals(path, graph: Graph) -> list[int]:
    """Read whitespace-separated terminal labels and map them to graph indices."""
    out = []
    for lineno, line in _content_lines(path):
        for tok in line.split():
            try:
                out.append(graph.index_of(_label(tok)))
            except KeyError:
                raise ParseError(f"{path}:{lineno}: terminal {tok!r} is not in the graph") from None
    return out


def load_set_system(path) -> SetSystem:
    """Read one set per line: ``[cost:] e1 e2 ...`` (unit cost when omitted)."""
    labels: dict[str, int] = {}
    sets, costs = [], []
    for lineno, line in _content_lines(path):
        cost = 1.0
        if ":" in line:
            head, line = line.split(":", 1)
            try:
                cost = float(head)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad cost {head!r}") from None
        members = []
        for tok in line.split():
            if tok not in labels:
                labels[tok] = len(labels)
            members.append(labels[tok])
        if not members:
            raise ParseError(f"{path}:{lineno}: empty set")
        sets.append(sorted(set(members)))
        costs.append(cost)
    return SetSystem.create(len(labels), sets, costs=costs)


def random_graph(n: int, p: float, seed) -> Graph:
    """Erdos-Renyi ``G(n, p)`` with unit costs."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Graph.from_edges(n, np.column_stack([iu[keep], ju[keep]]))


def random_feasible_lp(m: int, n: int, seed, density: float = 0.3, upper: float = 1.0) -> StandardFormLp:
    """Sparse ``m x n`` LP that is feasible (``b = A x0`` for an interior ``x0``) and bounded (``c > 0``)."""
    rng = np.random.default_rng(seed)
    mask = rng.random((m, n)) < density
    # every row and column gets at least one entry
    mask[np.arange(m), rng.integers(0, n, m)] = True
    mask[rng.integers(0, m, n), np.arange(n)] = True
    a = np.where(mask, rng.uniform(0.1, 1.0, (m, n)), 0.0)
    x0 = rng.uniform(0.2, 0.8, n) * min(upper, 1.0)
    c = rng.uniform(0.5, 1.5, n)
    return StandardFormLp.create(SparseMatrix.from_dense(a), a @ x0, c, np.zeros(n), np.full(n, upper))
