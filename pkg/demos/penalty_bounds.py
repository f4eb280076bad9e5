"""How the penalty minimizer x(beta) approaches the LP optimum as beta grows.

For each beta the residual ||A x(beta) - b|| is printed next to its bound
(1 + sqrt 2) C / beta, where C is the larger of the anchor distances to the
optimal primal and dual solutions.

Run: python3 demos/penalty_bounds.py
"""

import math

import numpy as np

from lpround.conditioning import penalty_minimizer, verify_perturbation_bounds
from lpround.lp_core import with_explicit_bounds
from lpround.oracle import exact_lp
from lpround.penalty import PenaltyProblem
from lpround.problems import encode_vertex_cover, random_graph


def main():
    g = random_graph(6, 0.5, 4)
    lp = with_explicit_bounds(encode_vertex_cover(g).lp)
    ref = exact_lp(lp, max_rows=0)
    print(f"vertex cover LP on n={g.n}, m={g.m}; optimum {ref.objective:.4f}\n")
    print(f"{'beta':>8} {'residual':>10} {'bound':>10} {'|obj gap|':>10} {'all bounds':>10}")
    for beta in [0.1, 1, 10, 100, 1000, 10000]:
        x = penalty_minimizer(PenaltyProblem(lp, beta))
        rep = verify_perturbation_bounds(lp, beta, x, ref.x, ref.u)
        res = float(np.linalg.norm(lp.matrix.matvec(x) - lp.b))
        bound = (1 + math.sqrt(2)) * rep.c_star / beta
        gap = abs(lp.objective(x) - ref.objective)
        print(f"{beta:>8g} {res:>10.2e} {bound:>10.2e} {gap:>10.2e} {str(rep.passed):>10}")


if __name__ == "__main__":
    main()
