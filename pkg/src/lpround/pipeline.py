"""End-to-end runs: encode, solve with ALM/SCD, repair, round."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .alm import AlmOptions, AlmResult, alm_solve
from .conditioning import choose_beta, estimate_vc_condition
from .lp_core import ApproxCertificate, StandardFormLp
from .problems import (
    EncodedProblem,
    Graph,
    MultiwayInstance,
    SetSystem,
    encode_multiway_cut,
    encode_set_cover,
    encode_set_packing_strong,
    encode_vertex_cover,
)
from .rounding import (
    IntegralSolution,
    best_of,
    check_independent_set,
    repair_covering,
    repair_packing,
    repair_vertex_cover,
    round_multiway_cut,
    round_set_cover_randomized,
    round_set_cover_threshold,
    round_set_packing,
    round_vertex_cover,
)
from .scd import SolveOptions, TimeLimitExceeded


class PipelineTimeout(RuntimeError):
    def __init__(self, message: str, partial: dict):
        super().__init__(message)
        self.partial = partial


@dataclass
class PipelineConfig:
    eps: float = 0.1
    delta: float | None = None
    beta: float | None = None
    threads: int = 1
    seed: int = 0
    reps: int = 10
    time_limit: float | None = 3600.0
    set_cover_rounding: str = "threshold"
    max_outer: int = 30
    inner_epochs: int = 200
    inner_qp_gap: float = 1e-6


@dataclass
class PipelineResult:
    problem: str
    lp_objective: float
    rounded_objective: float | None
    eps: float
    delta_ref: float | None
    steps: int
    threads: int
    wall_ms: float
    seed: int
    certificate: ApproxCertificate
    fractional: np.ndarray
    solution: IntegralSolution | None = None
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "problem": self.problem,
            "lp_objective": self.lp_objective,
            "rounded_objective": self.rounded_objective,
            "eps": self.eps,
            "delta_ref": self.delta_ref,
            "steps": self.steps,
            "threads": self.threads,
            "wall_ms": self.wall_ms,
            "seed": self.seed,
        }
        if self.solution is not None:
            out["feasible"] = self.solution.feasible
            out["selected"] = self.solution.selected.tolist()
        out.update(self.extras)
        return out


def _alm(lp: StandardFormLp, cfg: PipelineConfig, blocks=None, x0=None) -> AlmResult:
    opts = AlmOptions(
        beta0=cfg.beta if cfg.beta is not None else AlmOptions.beta0,
        max_outer=cfg.max_outer,
        inner=SolveOptions(max_steps=0, target_qp_gap=cfg.inner_qp_gap, threads=cfg.threads, blocks=blocks, seed=cfg.seed),
        inner_epochs=cfg.inner_epochs,
        target_eps=cfg.eps,
        target_delta=cfg.delta,
        x0=x0,
        time_limit=cfg.time_limit,
    )
    return alm_solve(lp, opts)


def row_violation(enc: EncodedProblem, x: np.ndarray) -> float:
    """Largest violation of the inequality rows by the structural part of ``x`` (slacks ignored)."""
    z = np.array(x, dtype=np.float64, copy=True)
    z[enc.slack] = 0.0
    load = (enc.lp.matrix.matvec(z) - enc.lp.b)[enc.slack_row]
    return max(0.0, float(np.max(load * enc.slack_sign))) if load.size else 0.0


def _base(problem, enc: EncodedProblem, res: AlmResult, cfg: PipelineConfig) -> PipelineResult:
    cert = res.certificate
    extras = {
        "reference_kind": cert.reference_kind,
        "rows": enc.lp.m,
        "cols": enc.lp.n,
        "nnz": enc.lp.matrix.nnz,
        "beta0": res.rounds[0].beta if res.rounds else None,
        "beta_final": res.rounds[-1].beta if res.rounds else None,
        "rounds": len(res.rounds),
    }
    return PipelineResult(
        problem, enc.lp.objective(res.x), None, cert.eps_measured, cert.delta_measured,
        int(sum(r.steps for r in res.rounds)), cfg.threads, 0.0, cfg.seed, cert, enc.decode(res.x), extras=extras,
    )


def _finish(out: PipelineResult, t0: float) -> PipelineResult:
    out.wall_ms = (time.perf_counter() - t0) * 1e3
    return out


def _timeout(problem: str, cfg: PipelineConfig, lp: StandardFormLp, exc: TimeLimitExceeded, t0: float):
    part = exc.partial
    cert = part.certificate
    rounds = getattr(part, "rounds", [])
    partial = {
        "problem": problem,
        "lp_objective": lp.objective(part.x),
        "rounded_objective": None,
        "eps": cert.eps_measured,
        "delta_ref": cert.delta_measured,
        "steps": int(sum(r.steps for r in rounds)),
        "threads": cfg.threads,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
        "seed": cfg.seed,
        "timed_out": True,
    }
    return PipelineTimeout(str(exc), partial)


def _theory_beta(out: PipelineResult, est, cfg: PipelineConfig, x_bar_norm: float) -> None:
    delta = cfg.delta if cfg.delta is not None else cfg.eps
    mag = abs(out.lp_objective) or None
    try:
        choice = choose_beta(est, cfg.eps, delta if mag else None, mag, x_bar_norm)
    except ValueError:
        return
    out.extras["beta_theory"] = choice.beta
    out.extras["beta_binding"] = choice.binding
    out.extras["c_star_heuristic"] = est.c_star_heuristic


def solve_vertex_cover(g: Graph, cfg: PipelineConfig | None = None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    t0 = time.perf_counter()
    enc = encode_vertex_cover(g)
    try:
        res = _alm(enc.lp, cfg)
    except TimeLimitExceeded as exc:
        raise _timeout("vc", cfg, enc.lp, exc, t0) from None
    out = _base("vc", enc, res, cfg)
    shortfall = row_violation(enc, res.x)
    fs = repair_vertex_cover(g, out.fractional, shortfall)
    sol = round_vertex_cover(g, fs)
    out.solution, out.rounded_objective = sol, sol.cost
    out.extras["repair_alpha"] = fs.alpha
    if g.m:
        # the theory anchors x_bar = 1 give the closed-form estimate
        _theory_beta(out, estimate_vc_condition(g), cfg, math.sqrt(g.n))
    return _finish(out, t0)


def solve_set_cover(ss: SetSystem, cfg: PipelineConfig | None = None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    t0 = time.perf_counter()
    enc = encode_set_cover(ss)
    try:
        res = _alm(enc.lp, cfg)
    except TimeLimitExceeded as exc:
        raise _timeout("setcover", cfg, enc.lp, exc, t0) from None
    out = _base("setcover", enc, res, cfg)
    struct = enc.lp.matrix.to_scipy().tocsc()[:, enc.decision]
    fs = repair_covering(struct, enc.lp.b, out.fractional, row_violation(enc, res.x))
    if cfg.set_cover_rounding == "threshold":
        sol = round_set_cover_threshold(ss, fs)
    elif cfg.set_cover_rounding == "randomized":
        sol = best_of(lambda s: round_set_cover_randomized(ss, fs, s), seeds=range(cfg.seed, cfg.seed + cfg.reps))
    else:
        raise ValueError(f"unknown set-cover rounding {cfg.set_cover_rounding!r}")
    out.solution, out.rounded_objective = sol, sol.cost
    out.extras["repair_alpha"] = fs.alpha
    return _finish(out, t0)


def solve_independent_set(g: Graph, cfg: PipelineConfig | None = None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    t0 = time.perf_counter()
    ss = SetSystem.independent_set(g)
    enc = encode_set_packing_strong(ss)
    try:
        res = _alm(enc.lp, cfg)
    except TimeLimitExceeded as exc:
        raise _timeout("mis", cfg, enc.lp, exc, t0) from None
    out = _base("mis", enc, res, cfg)
    struct = enc.lp.matrix.to_scipy().tocsc()[:, enc.decision]
    fs = repair_packing(struct, out.fractional, enc.lp.b)
    k = max(enc.column_sparsity, 1)
    sol = best_of(lambda s: round_set_packing(ss, fs, k, seed=s), seeds=range(cfg.seed, cfg.seed + cfg.reps), maximize=True)
    ok, clashes = check_independent_set(g, np.isin(np.arange(g.n), sol.selected))
    assert ok, clashes
    out.solution, out.rounded_objective = sol, sol.cost
    out.extras.update(repair_alpha=fs.alpha, k=k)
    return _finish(out, t0)


def solve_multiway_cut(mi: MultiwayInstance, cfg: PipelineConfig | None = None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    t0 = time.perf_counter()
    enc = encode_multiway_cut(mi)
    x0 = np.zeros(enc.lp.n)
    x0[enc.decision.ravel()] = 1.0 / mi.k
    try:
        res = _alm(enc.lp, cfg, blocks=enc.blocks, x0=enc.full_solution(x0[enc.decision]))
    except TimeLimitExceeded as exc:
        raise _timeout("mwc", cfg, enc.lp, exc, t0) from None
    out = _base("mwc", enc, res, cfg)
    xv = out.fractional
    sol = best_of(lambda s: round_multiway_cut(mi, xv, s), seeds=range(cfg.seed, cfg.seed + cfg.reps))
    out.solution, out.rounded_objective = sol, sol.cost
    out.extras["k"] = mi.k
    return _finish(out, t0)


def solve_lp(lp: StandardFormLp, cfg: PipelineConfig | None = None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    t0 = time.perf_counter()
    try:
        res = _alm(lp, cfg)
    except TimeLimitExceeded as exc:
        raise _timeout("lp", cfg, lp, exc, t0) from None
    cert = res.certificate
    out = PipelineResult(
        "lp", lp.objective(res.x), None, cert.eps_measured, cert.delta_measured,
        int(sum(r.steps for r in res.rounds)), cfg.threads, 0.0, cfg.seed, cert, res.x,
        extras={"reference_kind": cert.reference_kind, "rows": lp.m, "cols": lp.n, "nnz": lp.matrix.nnz,
                "rounds": len(res.rounds), "x": res.x.tolist()},
    )
    return _finish(out, t0)


def sample_terminals(g: Graph, k: int, seed) -> list[int]:
    """``k`` distinct terminals drawn uniformly from the largest connected component."""
    adj = sp.coo_matrix((np.ones(g.m), (g.edges[:, 0], g.edges[:, 1])), shape=(g.n, g.n))
    _, labels = connected_components(adj, directed=False)
    big = np.flatnonzero(labels == np.bincount(labels).argmax())
    if big.size < k:
        raise ValueError(f"largest component has {big.size} vertices, fewer than k={k}")
    rng = np.random.default_rng(seed)
    return sorted(rng.choice(big, size=k, replace=False).tolist())
