"""Vertex cover end to end: encode, solve, repair, round, and compare with exact references.

Run: python3 demos/vertex_cover_walkthrough.py [n] [p] [seed]
"""

import sys

import numpy as np

from lpround.alm import AlmOptions, alm_solve
from lpround.conditioning import choose_beta, estimate_vc_condition
from lpround.oracle import exact_integral, exact_lp
from lpround.pipeline import row_violation
from lpround.problems import encode_vertex_cover, random_graph
from lpround.rounding import repair_vertex_cover, round_vertex_cover
from lpround.scd import SolveOptions


def main(n=20, p=0.25, seed=1):
    g = random_graph(n, p, seed)
    enc = encode_vertex_cover(g)
    print(f"graph: n={g.n}, m={g.m}; LP has {enc.lp.m} rows, {enc.lp.n} columns, {enc.lp.matrix.nnz} nonzeros")

    # What the worst-case analysis asks for, next to what we actually use.
    est = estimate_vc_condition(g)
    ref = exact_lp(enc.lp)
    choice = choose_beta(est, eps=0.1, delta=0.1, objective_magnitude=ref.objective, x_bar_norm=np.sqrt(g.n))
    print(f"condition estimate: ||d||={est.d_norm:.2f}, delta_P >= {est.delta_p_lb:.2e}, delta_D >= {est.delta_d_lb:.2e}")
    print(f"worst-case beta: {choice.beta:.3g} (binding: {choice.binding}); the solver starts at beta=5 and grows it\n")

    res = alm_solve(enc.lp, AlmOptions(target_eps=0.1, inner=SolveOptions(max_steps=0, target_qp_gap=1e-6, seed=seed)))
    print(f"{'round':>5} {'beta':>6} {'eps':>8} {'objective':>10} {'dual bound':>11} {'steps':>7}")
    for r in res.rounds:
        print(f"{r.round:>5} {r.beta:>6.1f} {r.eps:>8.4f} {r.objective:>10.4f} {r.dual_bound:>11.4f} {r.steps:>7}")

    x_hat = enc.decode(res.x)
    shortfall = row_violation(enc, res.x)
    fs = repair_vertex_cover(g, x_hat, shortfall)
    sol = round_vertex_cover(g, fs)
    ip = exact_integral(g, "vertex_cover") if g.n <= 25 else None

    print(f"\nLP optimum (exact):       {ref.objective:.4f}")
    print(f"approximate LP objective: {enc.lp.objective(res.x):.4f}  (eps={res.certificate.eps_measured:.4f})")
    print(f"after repair (x / (1 - {shortfall:.3f})): {g.vertex_costs @ fs.x:.4f}")
    print(f"rounded cover:            {sol.cost:.0f} vertices, valid={sol.feasible}")
    if ip is not None:
        print(f"optimal cover (exhaustive): {ip.cost:.0f}")
    print(f"ratio rounded / LP optimum: {sol.cost / ref.objective:.3f} (guarantee: at most 2 after repair)")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(int(args[0]) if args else 20, float(args[1]) if len(args) > 1 else 0.25, int(args[2]) if len(args) > 2 else 1)
