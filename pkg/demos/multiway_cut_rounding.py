"""Multiway cut: the simplex relaxation, its block-projected solve, and threshold rounding.

Run: python3 demos/multiway_cut_rounding.py [seed]
"""

import sys

import numpy as np

from lpround.oracle import exact_integral, exact_lp
from lpround.pipeline import PipelineConfig, sample_terminals, solve_multiway_cut
from lpround.problems import MultiwayInstance, encode_multiway_cut, random_graph
from lpround.rounding import round_multiway_cut


def main(seed=3):
    g = random_graph(11, 0.35, seed)
    mi = MultiwayInstance(g, sample_terminals(g, 3, seed))
    enc = encode_multiway_cut(mi)
    print(f"graph: n={g.n}, m={g.m}, terminals={mi.terminals}")
    print(f"relaxation: {enc.lp.n} columns ({len(enc.blocks)} simplex blocks of size {mi.k}), {enc.lp.m} rows")

    res = solve_multiway_cut(mi, PipelineConfig(seed=seed))
    np.set_printoptions(precision=3, suppress=True)
    print("\nfractional labels per vertex (each row lies on the simplex):")
    for v, row in enumerate(res.fractional):
        tag = " terminal" if v in mi.terminals else ""
        print(f"  v{v:<2} {row}{tag}")

    print("\nfive single draws of (theta, terminal order):")
    for s in range(5):
        one = round_multiway_cut(mi, res.fractional, s)
        print(f"  theta={one.stats['theta']:.3f} order={one.stats['order']} cost={one.cost:.0f}")

    lp_opt = exact_lp(enc.lp).objective
    ip = exact_integral(mi, "multiway_cut")
    print(f"\nLP optimum {lp_opt:.3f}; approximate LP objective {res.lp_objective:.3f} (eps={res.eps:.3f})")
    print(f"best of 10 draws: {res.rounded_objective:.0f}; exhaustive optimum: {ip.cost:.0f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
