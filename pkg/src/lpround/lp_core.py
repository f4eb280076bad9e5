"""Sparse standard-form LPs, residuals and (eps, delta) certificates.

An LP here is ``min c^T x  s.t.  Ax = b,  lo <= x <= hi``. Box bounds live on
the variables, not as rows of ``A``. Maximization problems are stored with a
negated cost and a flag so every solver in the package only ever minimizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.sparse as sp

BOUND_TOL = 1e-12

ReferenceKind = Literal["exact-oracle", "dual-bound", "user-supplied"]


class DimensionError(ValueError):
    pass


class CertificationError(ValueError):
    """The point or reference cannot be certified (bounds violated, zero reference)."""


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Column-major sparse matrix with cached squared column norms.

    ``indptr``, ``indices`` and ``data`` follow the CSC convention and are kept
    as contiguous arrays so the coordinate-descent kernels can walk one column
    per step.
    """

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    col_sq_norms: np.ndarray = field(repr=False)

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        csc = sp.csc_matrix(mat, dtype=np.float64)
        csc.sum_duplicates()
        csc.sort_indices()
        indptr = np.ascontiguousarray(csc.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(csc.indices, dtype=np.int64)
        data = np.ascontiguousarray(csc.data, dtype=np.float64)
        norms = np.asarray(csc.multiply(csc).sum(axis=0)).ravel().astype(np.float64)
        return cls(tuple(int(s) for s in csc.shape), indptr, indices, data, norms)

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape: tuple[int, int]) -> "SparseMatrix":
        """Build from (row, col, value) triplets; repeated pairs are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        m, n = shape
        if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
            raise IndexError("triplet index out of range")
        return cls.from_scipy(sp.coo_matrix((vals, (rows, cols)), shape=shape))

    @classmethod
    def from_dense(cls, arr) -> "SparseMatrix":
        arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
        return cls.from_scipy(sp.csc_matrix(arr))

    @property
    def m(self) -> int:
        return self.shape[0]

    @property
    def n(self) -> int:
        return self.shape[1]

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def column(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def to_scipy(self) -> sp.csc_matrix:
        return sp.csc_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_scipy() @ x

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.to_scipy().T @ y

    def frobenius_norm(self) -> float:
        return float(np.sqrt(np.sum(self.data**2)))

    def check(self) -> None:
        """Raise if the stored structure breaks an invariant."""
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.m):
            raise IndexError("row index out of range")
        for i in range(self.n):
            rows, _ = self.column(i)
            if np.unique(rows).size != rows.size:
                raise ValueError(f"duplicate row index in column {i}")
        recomputed = np.array([np.dot(self.column(i)[1], self.column(i)[1]) for i in range(self.n)])
        if not np.allclose(recomputed, self.col_sq_norms, rtol=1e-12, atol=0.0):
            raise ValueError("cached column norms are stale")


def _vector(v, size: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size != size:
        raise DimensionError(f"{name} has length {v.size}, expected {size}")
    return v


@dataclass(frozen=True, eq=False)
class StandardFormLp:
    """``min cost^T x  s.t.  Ax = b,  lower <= x <= upper``.

    ``cost`` is always the minimization cost. When ``maximize`` is set the user
    objective is ``-cost^T x``; use :meth:`objective` to get it back in the
    user's sense.
    """

    matrix: SparseMatrix
    b: np.ndarray
    cost: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    maximize: bool = False

    def __post_init__(self):
        m, n = self.matrix.shape
        if self.b.shape != (m,) or self.cost.shape != (n,):
            raise DimensionError(f"expected b of length {m} and c of length {n}")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise DimensionError("bounds must have one entry per variable")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(np.isneginf(self.lower)):
            raise ValueError("variables must have a finite lower bound")

    @classmethod
    def create(cls, matrix, b, c, lower=None, upper=None, sense: str = "minimize") -> "StandardFormLp":
        """Build an LP from user-sense data.

        ``c`` is the objective in the given ``sense``; it is negated internally
        for ``sense="maximize"``.
        """
        if not isinstance(matrix, SparseMatrix):
            matrix = SparseMatrix.from_scipy(matrix) if sp.issparse(matrix) else SparseMatrix.from_dense(matrix)
        m, n = matrix.shape
        b = _vector(b, m, "b")
        c = _vector(c, n, "c")
        lower = np.zeros(n) if lower is None else _vector(lower, n, "lower")
        upper = np.full(n, np.inf) if upper is None else _vector(upper, n, "upper")
        sense = _parse_sense(sense)
        maximize = sense == "maximize"
        return cls(matrix, b, -c if maximize else c, lower, upper, maximize)

    @property
    def m(self) -> int:
        return self.matrix.m

    @property
    def n(self) -> int:
        return self.matrix.n

    @property
    def sense(self) -> str:
        return "maximize" if self.maximize else "minimize"

    @property
    def user_cost(self) -> np.ndarray:
        return -self.cost if self.maximize else self.cost

    def objective(self, x: np.ndarray) -> float:
        """Objective value in the user's sense."""
        return float(self.user_cost @ x)

    def flipped(self) -> "StandardFormLp":
        """Same feasible set, user cost negated and sense flipped.

        The internal minimization cost is unchanged, so the optimal set is too.
        """
        return StandardFormLp(self.matrix, self.b, self.cost, self.lower, self.upper, not self.maximize)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class ApproxCertificate:
    """Measured feasibility and objective gap of a candidate point.

    ``delta_measured`` is ``None`` unless a reference objective was supplied.
    """

    eps_measured: float
    delta_measured: float | None = None
    reference_kind: ReferenceKind | None = None
    reference_objective: float | None = None
    objective: float | None = None

    def satisfies(self, eps: float, delta: float | None = None) -> bool:
        if self.eps_measured > eps:
            return False
        if delta is None:
            return True
        return self.delta_measured is not None and self.delta_measured <= delta


def residual(lp: StandardFormLp, x: np.ndarray) -> np.ndarray:
    """``Ax - b`` as a dense vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (lp.n,):
        raise DimensionError(f"x has shape {x.shape}, expected ({lp.n},)")
    return lp.matrix.matvec(x) - lp.b


def certify(
    lp: StandardFormLp,
    x: np.ndarray,
    reference_objective: float | None = None,
    reference_kind: ReferenceKind = "user-supplied",
) -> ApproxCertificate:
    """Measure ``||Ax - b||_inf`` and, given a reference, the relative objective gap."""
    x = np.asarray(x, dtype=np.float64)
    r = residual(lp, x)
    if np.any(x < lp.lower - BOUND_TOL) or np.any(x > lp.upper + BOUND_TOL):
        raise CertificationError("x violates its box bounds")
    eps = float(np.max(np.abs(r))) if r.size else 0.0
    obj = lp.objective(x)
    if reference_objective is None:
        return ApproxCertificate(eps, None, None, None, obj)
    ref = float(reference_objective)
    if ref == 0.0:
        raise CertificationError("reference objective is zero; relative gap is undefined")
    delta = abs(obj - ref) / abs(ref)
    return ApproxCertificate(eps, delta, reference_kind, ref, obj)


def dual_bound(lp: StandardFormLp, u: np.ndarray) -> float:
    """Lagrangian lower bound on the (internal, minimization) optimum.

    ``b^T u + sum_i min_{lo_i <= x_i <= hi_i} (c - A^T u)_i x_i``. Rows whose
    only unbounded column is a pure slack have ``u`` clipped first so that the
    bound stays finite; any ``u`` yields a valid bound. Returns ``-inf`` when
    some unbounded column still has a negative reduced cost.
    """
    u = np.array(u, dtype=np.float64, copy=True)
    A = lp.matrix
    unbounded = np.isposinf(lp.upper)
    counts = np.diff(A.indptr)
    for i in np.flatnonzero(unbounded & (counts == 1)):
        row, val = A.column(i)
        row, val = int(row[0]), float(val[0])
        # need c_i - val * u_row >= 0
        limit = lp.cost[i] / val
        u[row] = min(u[row], limit) if val > 0 else max(u[row], limit)
    d = lp.cost - A.rmatvec(u)
    if np.any((d < 0) & unbounded):
        return -math.inf
    at = np.where(d >= 0, lp.lower, lp.upper)
    return float(lp.b @ u + d @ at)


def with_explicit_bounds(lp: StandardFormLp) -> StandardFormLp:
    """Materialize finite upper bounds as rows ``x_i + t_i = hi_i`` with slacks.

    The result has bounds ``[0, inf)`` on every variable, i.e. it is a pure
    ``Ax = b, x >= 0`` LP. Original variables keep their column positions;
    the new slack columns are appended.
    """
    if np.any(lp.lower != 0.0):
        raise ValueError("explicit-row export requires zero lower bounds")
    boxed = np.flatnonzero(np.isfinite(lp.upper))
    k = boxed.size
    m, n = lp.m, lp.n
    A = lp.matrix.to_scipy().tocoo()
    rows = np.concatenate([A.row, m + np.arange(k), m + np.arange(k)])
    cols = np.concatenate([A.col, boxed, n + np.arange(k)])
    vals = np.concatenate([A.data, np.ones(k), np.ones(k)])
    mat = SparseMatrix.from_triplets(rows, cols, vals, (m + k, n + k))
    b = np.concatenate([lp.b, lp.upper[boxed]])
    cost = np.concatenate([lp.cost, np.zeros(k)])
    return StandardFormLp(mat, b, cost, np.zeros(n + k), np.full(n + k, np.inf), lp.maximize)


# --- text format -----------------------------------------------------------


def _parse_sense(token: str) -> str:
    t = token.strip().lower()
    if t in ("min", "minimize"):
        return "minimize"
    if t in ("max", "maximize"):
        return "maximize"
    raise ValueError(f"unknown sense {token!r}")


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def format_lp(lp: StandardFormLp) -> str:
    """Serialize to the whitespace text format (round-trips exactly)."""
    A = lp.matrix.to_scipy().tocoo()
    lines = [f"{lp.m} {lp.n} {A.nnz} {lp.sense}"]
    lines.append(" ".join(_fmt(v) for v in lp.b))
    lines.append(" ".join(_fmt(v) for v in lp.user_cost))
    order = np.lexsort((A.row, A.col))
    for k in order:
        lines.append(f"{A.row[k]} {A.col[k]} {_fmt(A.data[k])}")
    for lo, hi in zip(lp.lower, lp.upper):
        lines.append(f"{_fmt(lo)} {_fmt(hi)}")
    return "\n".join(lines) + "\n"


def parse_lp(text: str) -> StandardFormLp:
    """Parse the text LP format.

    Header ``m n nnz sense``, then ``m`` rhs values, ``n`` cost values, ``nnz``
    triplets ``row col value`` (0-indexed) and ``n`` pairs ``lo hi``. Tokens are
    whitespace separated; ``#`` starts a comment.
    """
    tokens: list[str] = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if len(tokens) < 4:
        raise ValueError("LP header must be 'm n nnz sense'")
    try:
        m, n, nnz = int(tokens[0]), int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise ValueError(f"bad LP header: {tokens[:4]}") from exc
    sense = _parse_sense(tokens[3])
    expected = 4 + m + n + 3 * nnz + 2 * n
    if len(tokens) != expected:
        raise ValueError(f"LP body has {len(tokens)} tokens, expected {expected}")
    pos = 4
    vals = np.array([float(t) for t in tokens[pos:]], dtype=np.float64)
    b = vals[:m]
    c = vals[m : m + n]
    trip = vals[m + n : m + n + 3 * nnz].reshape(nnz, 3) if nnz else np.zeros((0, 3))
    bounds = vals[m + n + 3 * nnz :].reshape(n, 2) if n else np.zeros((0, 2))
    rows, cols = trip[:, 0], trip[:, 1]
    if np.any(rows != np.round(rows)) or np.any(cols != np.round(cols)):
        raise ValueError("triplet indices must be integers")
    pairs = set(zip(rows.astype(np.int64).tolist(), cols.astype(np.int64).tolist()))
    if len(pairs) != nnz:
        raise ValueError("duplicate (row, col) entry")
    mat = SparseMatrix.from_triplets(rows.astype(np.int64), cols.astype(np.int64), trip[:, 2], (m, n))
    return StandardFormLp.create(mat, b, c, bounds[:, 0], bounds[:, 1], sense)


def read_lp(path) -> StandardFormLp:
    return parse_lp(Path(path).read_text(encoding="utf-8"))


def write_lp(lp: StandardFormLp, path) -> None:
    Path(path).write_text(format_lp(lp), encoding="utf-8")
