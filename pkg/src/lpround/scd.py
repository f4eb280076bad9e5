"""Stochastic coordinate descent on the penalty objective.

Coordinates (or blocks of coordinates) are sampled uniformly with replacement
and updated with a projected step of length ``1/L_max``. The residual
``r = Ax - b`` is carried along incrementally so each step only touches the
nonzeros of the sampled column(s); it is recomputed exactly once per epoch.

:func:`solve_parallel` runs the same update rule from several threads on shared
``x`` and ``r`` without a global lock.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .lp_core import ApproxCertificate, certify
from .penalty import PenaltyProblem, grad_component, lipschitz, objective
from .simplex import project_simplex

DRIFT_TOL = 1e-8
MAX_HALVINGS = 20


class DivergedError(RuntimeError):
    """The objective became non-finite (or blew up in parallel mode)."""


class ConfigurationError(ValueError):
    pass


class TimeLimitExceeded(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class Block:
    indices: np.ndarray
    simplex: bool = False


@dataclass
class SolveOptions:
    max_steps: int = 1_000_000
    # stop once beta * ||gradient mapping||^2 / 2 drops below this; 0 disables
    target_qp_gap: float = 0.0
    check_interval: int | None = None
    threads: int = 1
    blocks: list[Block] | None = None
    step_safety: float = 1.0
    seed: int = 0
    x0: np.ndarray | None = None
    deadline: float | None = None

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if not 0 < self.step_safety <= 1:
            raise ConfigurationError("step_safety must lie in (0, 1]")


@dataclass
class SolverState:
    x: np.ndarray
    r: np.ndarray
    epoch: int = 0
    steps: int = 0
    rng_seed: int = 0
    f_current: float = math.nan

    @classmethod
    def initial(cls, p: PenaltyProblem, x0=None, seed: int = 0) -> "SolverState":
        lp = p.lp
        x = np.zeros(lp.n) if x0 is None else np.array(x0, dtype=np.float64)
        x = np.ascontiguousarray(lp.clip(x))
        r = np.ascontiguousarray(lp.matrix.matvec(x) - lp.b)
        return cls(x, r, rng_seed=int(seed), f_current=objective(p, x))

    def refresh(self, p: PenaltyProblem) -> float:
        """Recompute ``r`` from ``x``; returns the drift that was removed."""
        exact = p.lp.matrix.matvec(self.x) - p.lp.b
        drift = float(np.max(np.abs(exact - self.r))) if exact.size else 0.0
        self.r[:] = exact
        return drift


@dataclass
class SolveStats:
    steps: int
    epochs: int
    wall_time: float
    f_final: float
    qp_gap_surrogate: float
    threads: int
    step_safety: float
    converged: bool
    max_drift: float = 0.0
    halvings: int = 0


class SolveResult(NamedTuple):
    x: np.ndarray
    certificate: ApproxCertificate
    stats: SolveStats


# --- single steps (reference implementations) ------------------------------


def scd_step(p: PenaltyProblem, s: SolverState, i: int, l_max: float | None = None) -> SolverState:
    """One projected coordinate step on ``x_i``; updates ``s`` in place."""
    if l_max is None:
        l_max = lipschitz(p).l_max
    lp = p.lp
    g = grad_component(p, s.r, s.x[i], i)
    new = min(max(s.x[i] - g / l_max, lp.lower[i]), lp.upper[i])
    dx = new - s.x[i]
    if dx != 0.0:
        s.x[i] = new
        rows, vals = lp.matrix.column(i)
        s.r[rows] += vals * dx
    s.steps += 1
    return s


def block_step(p: PenaltyProblem, s: SolverState, block, simplex: bool = False, step: float | None = None) -> SolverState:
    """Gradient step on every coordinate of ``block``, then project.

    With ``simplex`` set the block is projected onto the probability simplex,
    otherwise each coordinate is clamped to its bounds.
    """
    idx = np.asarray(block, dtype=np.int64)
    lp = p.lp
    if simplex:
        _check_simplex_bounds(lp, idx)
    if step is None:
        step = 1.0 / max(lipschitz(p).l_max, _block_lipschitz(p, idx))
    g = np.array([grad_component(p, s.r, s.x[j], j) for j in idx])
    y = s.x[idx] - step * g
    y = project_simplex(y) if simplex else np.clip(y, lp.lower[idx], lp.upper[idx])
    for j, val in zip(idx, y):
        dx = val - s.x[j]
        if dx != 0.0:
            s.x[j] = val
            rows, vals = lp.matrix.column(j)
            s.r[rows] += vals * dx
    s.steps += 1
    return s


# --- layout ----------------------------------------------------------------


def _check_simplex_bounds(lp, idx):
    if np.any(lp.lower[idx] != 0.0) or np.any(lp.upper[idx] != 1.0):
        raise ConfigurationError("simplex blocks require [0, 1] bounds on every member")


def _block_lipschitz(p: PenaltyProblem, idx: np.ndarray) -> float:
    cols = p.lp.matrix.to_scipy()[:, idx].toarray()
    gram = cols.T @ cols
    lam = float(np.linalg.eigvalsh(gram)[-1]) if gram.size else 0.0
    return p.beta * lam + 1.0 / p.beta


@dataclass
class _Layout:
    unit_ptr: np.ndarray
    unit_idx: np.ndarray
    unit_simplex: np.ndarray
    blocked: bool
    l_eff: float
    l_max: float
    max_block: int = 1
    locks: np.ndarray = field(default=None, repr=False)

    @property
    def n_units(self) -> int:
        return self.unit_ptr.size - 1


def _layout(p: PenaltyProblem, blocks) -> _Layout:
    lp = p.lp
    n = lp.n
    l_max = lipschitz(p).l_max
    if not blocks:
        ptr = np.arange(n + 1, dtype=np.int64)
        return _Layout(ptr, np.arange(n, dtype=np.int64), np.zeros(n, dtype=np.bool_), False, l_max, l_max)
    owner = np.full(n, -1, dtype=np.int64)
    l_eff = l_max
    groups: list[tuple[np.ndarray, bool]] = []
    for b, blk in enumerate(blocks):
        idx = np.asarray(blk.indices, dtype=np.int64)
        if idx.size == 0:
            raise ConfigurationError("empty block")
        if np.any(owner[idx] >= 0) or np.unique(idx).size != idx.size:
            raise ConfigurationError("blocks must be disjoint")
        owner[idx] = b
        if blk.simplex:
            _check_simplex_bounds(lp, idx)
        if idx.size > 1:
            l_eff = max(l_eff, _block_lipschitz(p, idx))
        groups.append((idx, bool(blk.simplex)))
    for j in np.flatnonzero(owner < 0):
        groups.append((np.array([j], dtype=np.int64), False))
    sizes = np.array([g[0].size for g in groups], dtype=np.int64)
    ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    idx = np.concatenate([g[0] for g in groups]).astype(np.int64)
    simplex = np.array([g[1] for g in groups], dtype=np.bool_)
    return _Layout(ptr, idx, simplex, True, l_eff, l_max, int(sizes.max()))


def _streams(seed: int, threads: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(threads)]


def qp_gap_surrogate(p: PenaltyProblem, x: np.ndarray, r: np.ndarray | None = None, blocks=None) -> float:
    """Strong-convexity bound ``beta * ||G||^2 / 2`` on ``f(x) - f*``.

    ``G`` is the gradient mapping with step ``1/L_max`` (projections respect
    simplex blocks).
    """
    lay = _layout(p, blocks)
    return _surrogate(p, lay, np.ascontiguousarray(x, dtype=np.float64), r)


def _surrogate(p, lay: _Layout, x, r=None) -> float:
    lp = p.lp
    if r is None:
        r = lp.matrix.matvec(x) - lp.b
    A = lp.matrix
    buf = np.empty(lay.max_block)
    sq = K.gradient_mapping_sq(
        lay.unit_ptr, lay.unit_idx, lay.unit_simplex, A.indptr, A.indices, A.data,
        p.reduced_cost, p.x_bar, lp.lower, lp.upper, p.beta, lay.l_eff, x, np.ascontiguousarray(r), buf,
    )
    return 0.5 * p.beta * sq


# --- solvers ---------------------------------------------------------------


def _sweep(p, lay: _Layout, state: SolverState, seq: np.ndarray, step: float, atomic: bool, buf=None):
    lp = p.lp
    A = lp.matrix
    common = (A.indptr, A.indices, A.data, p.reduced_cost, p.x_bar, lp.lower, lp.upper, p.beta, step, state.x, state.r)
    if not lay.blocked:
        kern = K.coord_sweep_atomic if atomic else K.coord_sweep
        kern(seq, *common)
        return
    if buf is None:
        buf = np.empty(lay.max_block)
    head = (seq, lay.unit_ptr, lay.unit_idx, lay.unit_simplex)
    if atomic:
        K.unit_sweep_atomic(*head, *common, buf, lay.locks)
    else:
        K.unit_sweep(*head, *common, buf)


def solve(p: PenaltyProblem, opts: SolveOptions | None = None) -> SolveResult:
    """Serial SCD. Stops at ``max_steps`` or when the QP-gap surrogate reaches the target."""
    opts = opts or SolveOptions()
    return _run(p, opts, threads=1, parallel=False)


def solve_parallel(p: PenaltyProblem, opts: SolveOptions) -> SolveResult:
    """Asynchronous SCD from ``opts.threads`` workers on shared ``x`` and ``r``.

    Each worker draws from its own RNG stream (spawned from ``opts.seed``) and
    publishes updates atomically per component. Workers meet at a barrier after
    every ``check_interval`` steps, where ``r`` is recomputed at epoch
    boundaries and the stopping test runs. With one thread the trajectory is
    bitwise identical to :func:`solve`.
    """
    return _run(p, opts, threads=opts.threads, parallel=True)


def _feasible_start(p: PenaltyProblem, lay: _Layout, x0) -> np.ndarray:
    """Clip to the box and project every simplex block onto the simplex."""
    x = p.lp.clip(np.zeros(p.lp.n) if x0 is None else np.array(x0, dtype=np.float64))
    for u in np.flatnonzero(lay.unit_simplex):
        idx = lay.unit_idx[lay.unit_ptr[u] : lay.unit_ptr[u + 1]]
        x[idx] = project_simplex(x[idx])
    return x


def _run(p: PenaltyProblem, opts: SolveOptions, threads: int, parallel: bool) -> SolveResult:
    t0 = time.perf_counter()
    lp = p.lp
    step_safety = opts.step_safety
    lay = _layout(p, opts.blocks)
    state = SolverState.initial(p, _feasible_start(p, lay, opts.x0), opts.seed)
    gens = _streams(opts.seed, threads)
    if parallel and lay.blocked:
        lay.locks = np.zeros(lay.n_units, dtype=np.int64)
    epoch_len = max(lay.n_units, 1)
    interval = opts.check_interval or epoch_len
    target = opts.target_qp_gap
    gap = _surrogate(p, lay, state.x, state.r) if lay.n_units else 0.0
    converged = target > 0 and gap <= target
    max_drift = 0.0
    halvings = 0
    bufs = [np.empty(lay.max_block) for _ in range(threads)]
    pool = ThreadPoolExecutor(max_workers=threads) if parallel else None

    try:
        while not converged and state.steps < opts.max_steps and lay.n_units:
            chunk = min(interval, opts.max_steps - state.steps)
            step = step_safety / lay.l_eff
            if not parallel:
                seq = gens[0].integers(0, lay.n_units, size=chunk)
                _sweep(p, lay, state, seq, step, False)
            else:
                x_snap = state.x.copy()
                f_snap = state.f_current
                shares = np.full(threads, chunk // threads)
                shares[: chunk % threads] += 1
                seqs = [g.integers(0, lay.n_units, size=int(s)) for g, s in zip(gens, shares)]
                futs = [pool.submit(_sweep, p, lay, state, seq, step, True, buf) for seq, buf in zip(seqs, bufs)]
                for f in futs:
                    f.result()
            state.steps += chunk
            new_epoch = state.steps // epoch_len
            if new_epoch > state.epoch or state.steps >= opts.max_steps:
                max_drift = max(max_drift, state.refresh(p))
                state.epoch = new_epoch
            f_val = objective(p, state.x)
            if parallel and (not math.isfinite(f_val) or f_val > f_snap + max(1.0, abs(f_snap))):
                if halvings >= MAX_HALVINGS:
                    raise DivergedError("parallel SCD diverged even after shrinking the step")
                halvings += 1
                step_safety *= 0.5
                state.x[:] = x_snap
                state.refresh(p)
                state.f_current = f_snap
                continue
            if not math.isfinite(f_val):
                raise DivergedError("non-finite penalty objective; check beta and the LP data")
            state.f_current = f_val
            if target > 0:
                gap = _surrogate(p, lay, state.x, state.r)
                converged = gap <= target
            if opts.deadline is not None and time.monotonic() > opts.deadline and not converged:
                stats = SolveStats(state.steps, state.epoch, time.perf_counter() - t0, f_val, gap, threads, step_safety, False, max_drift, halvings)
                raise TimeLimitExceeded("time limit reached during SCD", SolveResult(state.x.copy(), certify(lp, state.x), stats))
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    state.refresh(p)
    if target <= 0:
        gap = _surrogate(p, lay, state.x, state.r) if lay.n_units else 0.0
    stats = SolveStats(
        steps=state.steps,
        epochs=state.epoch,
        wall_time=time.perf_counter() - t0,
        f_final=objective(p, state.x),
        qp_gap_surrogate=gap,
        threads=threads,
        step_safety=step_safety,
        converged=converged,
        max_drift=max_drift,
        halvings=halvings,
    )
    return SolveResult(state.x, certify(lp, state.x), stats)
