"""Command-line front end: ``lpround solve`` and ``lpround bench``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .alm import AlmOptions, StalledError
from .lp_core import CertificationError, DimensionError, read_lp
from .oracle import InfeasibleLpError
from .penalty import PenaltyProblem
from .pipeline import (
    PipelineConfig,
    PipelineTimeout,
    sample_terminals,
    solve_independent_set,
    solve_lp,
    solve_multiway_cut,
    solve_set_cover,
    solve_vertex_cover,
)
from .problems import MultiwayInstance, ParseError, encode_vertex_cover, load_edge_list, load_set_system, load_terminals
from .rounding import InfeasibleInputError, RepairError, RoundingFailure
from .scd import DivergedError, SolveOptions, solve, solve_parallel

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_TIMEOUT = 0, 1, 2, 3
BENCH_COLUMNS = ["instance", "threads", "steps", "wall_ms", "eps", "lp_objective", "rounded_objective", "seed"]

log = logging.getLogger("lpround")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, default=0.1, help="max-norm residual target (default 0.1)")
    p.add_argument("--delta", type=float, default=None, help="optional relative gap target against the dual bound")
    p.add_argument("--beta", type=float, default=None, help="initial penalty parameter (default 5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=10, help="repetitions for randomized rounders")
    p.add_argument("--time-limit", type=float, default=3600.0, help="seconds (default 3600)")
    p.add_argument("--out", choices=["json", "csv"], default="json")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpround", description="Approximate LP solving with coordinate descent and LP rounding.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve and round one instance")
    s.add_argument("problem", choices=["vc", "mis", "mwc", "setcover", "lp"])
    s.add_argument("--graph", type=Path, help="edge list: 'u v [cost]' per line")
    s.add_argument("--terminals", type=Path, help="terminal labels for mwc")
    s.add_argument("--k", type=int, help="number of terminals to sample when --terminals is absent")
    s.add_argument("--sets", type=Path, help="set system: '[cost:] e1 e2 ...' per line")
    s.add_argument("--lp", type=Path, help="LP in the package text format")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--rounding", choices=["threshold", "randomized"], default="threshold", help="set-cover rounder")
    _common(s)

    b = sub.add_parser("bench", help="thread sweep over instances, CSV to stdout")
    b.add_argument("problem", choices=["vc", "mis", "mwc", "setcover", "lp"])
    b.add_argument("instances", nargs="*", type=Path, help="graph / set / LP files")
    b.add_argument("--threads", default="1", help="comma-separated thread counts, e.g. 1,2,4")
    b.add_argument("--k", type=int, default=3, help="terminals sampled per mwc instance")
    b.add_argument("--steps", type=int, default=None,
                   help="fixed SCD step budget on one penalty subproblem instead of the full pipeline")
    _common(b)
    b.set_defaults(reps=1, out="csv")
    return parser


def _config(args, threads: int, seed: int) -> PipelineConfig:
    for name in ("eps", "time_limit"):
        if not getattr(args, name) > 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    if args.delta is not None and not args.delta > 0:
        raise UsageError("--delta must be positive")
    if args.beta is not None and not args.beta > 0:
        raise UsageError("--beta must be positive")
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    return PipelineConfig(eps=args.eps, delta=args.delta, beta=args.beta, threads=threads, seed=seed, reps=args.reps,
                          time_limit=args.time_limit, set_cover_rounding=getattr(args, "rounding", "threshold"))


def _require(path, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required for this problem")
    if not Path(path).exists():
        raise UsageError(f"{path}: no such file")
    return Path(path)


def _load(problem: str, source: Path, seed: int, terminals=None, k=None):
    """Read the instance; any malformed input surfaces as ``ParseError``."""
    try:
        if problem == "lp":
            return read_lp(source)
        if problem == "setcover":
            return load_set_system(source)
        g = load_edge_list(source)
        if g.self_loops_dropped:
            print(f"warning: dropped {g.self_loops_dropped} self-loop(s)", file=sys.stderr)
        if problem != "mwc":
            return g
        if terminals is not None:
            ts = load_terminals(terminals, g)
        elif k is not None:
            ts = sample_terminals(g, k, seed)
        else:
            raise UsageError("mwc needs --terminals or --k")
        if k is not None and len(ts) != k:
            raise UsageError(f"--k={k} but {len(ts)} terminals were given")
        return MultiwayInstance(g, ts)
    except (ParseError, UsageError):
        raise
    except (ValueError, IndexError, DimensionError) as exc:
        raise ParseError(f"{source}: {exc}") from exc


_SOLVERS = {
    "lp": solve_lp,
    "setcover": solve_set_cover,
    "vc": solve_vertex_cover,
    "mis": solve_independent_set,
    "mwc": solve_multiway_cut,
}


def _run_problem(problem: str, source: Path, cfg: PipelineConfig, terminals=None, k=None):
    return _SOLVERS[problem](_load(problem, source, cfg.seed, terminals, k), cfg)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _emit(record: dict, fmt: str, out) -> None:
    if fmt == "json":
        json.dump(record, out, default=_json_default, allow_nan=True)
        out.write("\n")
    else:
        w = csv.DictWriter(out, fieldnames=list(record), extrasaction="ignore")
        w.writeheader()
        w.writerow({k: (json.dumps(v, default=_json_default) if isinstance(v, (list, dict)) else v) for k, v in record.items()})


def cmd_solve(args, out=None) -> int:
    out = out or sys.stdout
    cfg = _config(args, args.threads, args.seed)
    source = {
        "lp": ("--lp", args.lp),
        "setcover": ("--sets", args.sets),
    }.get(args.problem, ("--graph", args.graph))
    path = _require(source[1], source[0])
    terminals = _require(args.terminals, "--terminals") if args.terminals is not None else None
    try:
        res = _run_problem(args.problem, path, cfg, terminals, args.k)
    except PipelineTimeout as exc:
        print(f"time limit reached: {exc}", file=sys.stderr)
        _emit(exc.partial, args.out, out)
        return EXIT_TIMEOUT
    _emit(res.as_dict(), args.out, out)
    return EXIT_OK


def _fixed_budget(problem: str, source: Path, threads: int, steps: int, seed: int, beta: float) -> dict:
    """Run exactly ``steps`` SCD steps on the first penalty subproblem (zero anchors)."""
    if problem == "lp":
        lp = read_lp(source)
    elif problem == "vc":
        lp = encode_vertex_cover(load_edge_list(source)).lp
    else:
        raise UsageError("--steps supports the vc and lp problems")
    p = PenaltyProblem(lp, beta)
    opts = SolveOptions(max_steps=steps, target_qp_gap=0.0, threads=threads, seed=seed)
    t0 = time.perf_counter()
    res = solve_parallel(p, opts) if threads > 1 else solve(p, opts)
    wall = (time.perf_counter() - t0) * 1e3
    return {"steps": res.stats.steps, "wall_ms": wall, "eps": res.certificate.eps_measured,
            "lp_objective": lp.objective(res.x), "rounded_objective": None}


def cmd_bench(args, out=None) -> int:
    out = out or sys.stdout
    try:
        threads = [int(t) for t in str(args.threads).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad --threads list {args.threads!r}") from None
    if not threads or min(threads) < 1:
        raise UsageError("--threads needs positive integers")
    if args.steps is not None and args.steps < 1:
        raise UsageError("--steps must be positive")
    paths = [_require(p, "instance") for p in args.instances]
    writer = csv.DictWriter(out, fieldnames=BENCH_COLUMNS)
    writer.writeheader()
    status = EXIT_OK
    for path in paths:
        for t in threads:
            for rep in range(args.reps):
                seed = args.seed + rep
                if args.steps is not None:
                    row = _fixed_budget(args.problem, path, t, args.steps, seed, args.beta or AlmOptions.beta0)
                else:
                    cfg = _config(args, t, seed)
                    try:
                        res = _run_problem(args.problem, path, cfg, k=args.k if args.problem == "mwc" else None)
                        row = res.as_dict()
                    except PipelineTimeout as exc:
                        row, status = exc.partial, EXIT_TIMEOUT
                row.update(instance=str(path), threads=t, seed=seed)
                writer.writerow({c: row.get(c) for c in BENCH_COLUMNS})
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        return cmd_solve(args) if args.command == "solve" else cmd_bench(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, DimensionError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleLpError, InfeasibleInputError, RepairError, RoundingFailure, DivergedError, StalledError,
            CertificationError, ValueError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
