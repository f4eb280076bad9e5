import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpround.oracle import exact_lp
from lpround.problems import Graph, MultiwayInstance, SetSystem, encode_multiway_cut, encode_vertex_cover, random_graph
from lpround.rounding import (
    FractionalSolution,
    InfeasibleInputError,
    IntegralSolution,
    RepairError,
    RoundingFailure,
    best_of,
    check_independent_set,
    check_multiway,
    check_packing,
    cover_inclusion_probability,
    covering_q,
    repair_covering,
    repair_packing,
    repair_vertex_cover,
    round_multiway_cut,
    round_set_cover_randomized,
    round_set_cover_threshold,
    round_set_packing,
    round_vertex_cover,
)

N_SEEDS = 100_000


def test_fractional_solution_bounds():
    with pytest.raises(ValueError):
        FractionalSolution(np.array([1.5]))
    with pytest.raises(ValueError):
        FractionalSolution(np.array([-0.1]))


# --- repair_vertex_cover ---------------------------------------------------


def test_repair_vc_scales(edge_graph):
    fs = repair_vertex_cover(edge_graph, [0.45, 0.45], 0.1)
    np.testing.assert_allclose(fs.x, [0.5, 0.5], atol=1e-15)
    assert fs.x.sum() >= 1 - 1e-12


def test_repair_vc_identity(edge_graph):
    fs = repair_vertex_cover(edge_graph, [0.3, 0.7], 0.0)
    np.testing.assert_array_equal(fs.x, [0.3, 0.7])


def test_repair_vc_clips(edge_graph):
    fs = repair_vertex_cover(edge_graph, [0.95, 0.0], 0.05)
    np.testing.assert_allclose(fs.x, [1.0, 0.0], atol=1e-15)


def test_repair_vc_rejects_large_eps(edge_graph):
    with pytest.raises(RepairError):
        repair_vertex_cover(edge_graph, [0.5, 0.5], 1.0)


def test_repair_vc_detects_understated_eps(edge_graph):
    with pytest.raises(RepairError):
        repair_vertex_cover(edge_graph, [0.2, 0.2], 0.1)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), eps=st.floats(0.0, 0.5))
def test_repair_vc_feasible_and_bounded_inflation(seed, eps):
    g = random_graph(12, 0.3, seed)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, g.n)
    # raise endpoints until every edge has residual >= -eps
    for u, v in g.edges.tolist():
        short = (1 - eps) - (x[u] + x[v])
        if short > 0:
            x[u] = min(1.0, x[u] + short)
            x[v] = min(1.0, x[v] + max(0.0, (1 - eps) - x[u] - x[v]))
    fs = repair_vertex_cover(g, x, eps)
    if g.m:
        assert np.all(fs.x[g.edges[:, 0]] + fs.x[g.edges[:, 1]] >= 1 - 1e-9)
    assert fs.x.sum() <= x.sum() / (1 - eps) + 1e-9


# --- repair_covering / covering_q -----------------------------------------


def test_repair_covering_matches_vertex_cover(k3):
    a = encode_vertex_cover(k3).lp.matrix.toarray()[:, :3]
    x = np.array([0.45, 0.5, 0.5])
    np.testing.assert_array_equal(repair_covering(a, np.ones(3), x, 0.1).x, repair_vertex_cover(k3, x, 0.1).x)


def test_repair_covering_worked_example():
    a, b = np.array([[2.0, 1.0]]), np.array([2.0])
    assert covering_q(a, b) == 1.0
    fs = repair_covering(a, b, [0.7, 0.4], 0.2, q=covering_q(a, b))
    assert fs.alpha == pytest.approx(0.2)
    np.testing.assert_allclose(fs.x, [0.875, 0.5])
    assert (a @ fs.x)[0] == pytest.approx(2.25)


def test_repair_covering_identity():
    fs = repair_covering(np.array([[1.0, 1.0]]), [1.0], [0.5, 0.5], 0.0)
    np.testing.assert_array_equal(fs.x, [0.5, 0.5])


def test_repair_covering_eps_too_large():
    with pytest.raises(RepairError):
        repair_covering(np.array([[1.0]]), [1.0], [0.5], 1.0, q=1.0)


def test_covering_q_fractional_coefficients():
    # binary points on support {0,1}: shortfalls 3, 1.5, 2, 0.5 -> q = 0.5
    assert covering_q(np.array([[1.5, 1.0]]), np.array([3.0])) == pytest.approx(0.5)


# --- repair_packing --------------------------------------------------------


def test_repair_packing_feasible_identity():
    fs = repair_packing(np.array([[1.0, 1.0]]), [0.3, 0.4])
    assert fs.alpha == 0.0
    np.testing.assert_array_equal(fs.x, [0.3, 0.4])


def test_repair_packing_tight_alpha():
    m = np.array([[1.0, 1.0], [0.5, 0.0]])
    fs = repair_packing(m, [0.6, 0.6])
    assert fs.alpha == pytest.approx(0.2)
    np.testing.assert_allclose(fs.x, [0.5, 0.5])
    assert float(m[0] @ fs.x) == pytest.approx(1.0)


def test_repair_packing_zero():
    fs = repair_packing(np.array([[1.0, 1.0]]), [0.0, 0.0])
    assert fs.alpha == 0.0 and not fs.x.any()


# --- round_vertex_cover ----------------------------------------------------


def test_round_vc_boundary(edge_graph):
    sol = round_vertex_cover(edge_graph, FractionalSolution(np.array([0.5, 0.5])))
    assert sol.selected.tolist() == [0, 1] and sol.cost == 2.0 and sol.feasible


def test_round_vc_k3(k3):
    lp_val = exact_lp(encode_vertex_cover(k3).lp).objective
    sol = round_vertex_cover(k3, FractionalSolution(np.full(3, 0.5)))
    assert sol.cost == 3.0 and sol.cost <= 2 * lp_val


def test_round_vc_star():
    g = Graph.from_edges(5, [(0, i) for i in range(1, 5)])
    sol = round_vertex_cover(g, FractionalSolution(np.array([1.0, 0, 0, 0, 0])))
    assert sol.selected.tolist() == [0] and sol.cost == 1.0


def test_round_vc_rejects_infeasible(edge_graph):
    with pytest.raises(InfeasibleInputError):
        round_vertex_cover(edge_graph, FractionalSolution(np.array([0.4, 0.4])))


# --- set cover -------------------------------------------------------------


def test_threshold_f2_is_vertex_cover_rule(k3):
    ss = SetSystem.edge_cover_of(k3)
    x = np.array([0.5, 0.7, 0.5])
    a = round_set_cover_threshold(ss, FractionalSolution(x))
    b = round_vertex_cover(k3, FractionalSolution(x))
    assert a.stats["f"] == 2
    assert a.selected.tolist() == b.selected.tolist()


def test_threshold_boundary_thirds():
    ss = SetSystem.create(1, [[0], [0], [0]])
    sol = round_set_cover_threshold(ss, FractionalSolution(np.full(3, 1 / 3)), f=3)
    assert sol.selected.tolist() == [0, 1, 2] and sol.feasible


def test_threshold_single_set_suffices():
    ss = SetSystem.create(2, [[0, 1], [0, 1], [0, 1]])
    sol = round_set_cover_threshold(ss, FractionalSolution(np.array([0.6, 0.4, 0.0])), f=2)
    assert sol.selected.tolist() == [0] and sol.feasible


def test_threshold_rejects_infeasible():
    ss = SetSystem.create(1, [[0], [0]])
    with pytest.raises(InfeasibleInputError):
        round_set_cover_threshold(ss, FractionalSolution(np.array([0.3, 0.3])))


def test_randomized_cover_certain_set():
    ss = SetSystem.create(2, [[0, 1], [0]])
    for s in range(50):
        sol = round_set_cover_randomized(ss, FractionalSolution(np.array([1.0, 0.0])), s)
        assert 0 in sol.selected.tolist() and sol.feasible


def test_randomized_cover_zero_always_fails():
    ss = SetSystem.create(2, [[0, 1], [0]])
    for s in range(50):
        assert not round_set_cover_randomized(ss, FractionalSolution(np.zeros(2)), s).feasible


def test_inclusion_probability_amplification():
    # N = 10 elements: d = ceil(ln 20) = 3 trials
    np.testing.assert_allclose(cover_inclusion_probability(np.array([0.5]), 10), [1 - 0.5**3])
    np.testing.assert_allclose(cover_inclusion_probability(np.array([0.0, 1.0]), 10), [0.0, 1.0])


def test_randomized_cover_rate_matches_closed_form():
    ss = SetSystem.create(1, [[0], [0]])
    fs = FractionalSolution(np.array([0.5, 0.5]))
    p = cover_inclusion_probability(fs.x, 1)[0]
    expected = 1 - (1 - p) ** 2
    hits = sum(round_set_cover_randomized(ss, fs, s).feasible for s in range(N_SEEDS))
    assert abs(hits / N_SEEDS - expected) <= 0.02


# --- set packing -----------------------------------------------------------


def test_packing_always_sampled_at_k_theta():
    ss = SetSystem.create(3, [[0, 1], [2]])
    k, theta = 2, 0.25
    fs = FractionalSolution(np.array([k * theta, k * theta]))
    for s in range(20):
        assert round_set_packing(ss, fs, k, theta, seed=s).stats["sampled"] == 2


def test_packing_disjoint_sets_kept():
    ss = SetSystem.create(2, [[0], [1]])
    for s in range(20):
        sol = round_set_packing(ss, FractionalSolution(np.ones(2)), k=1, seed=s)
        assert sol.selected.tolist() == [0, 1] and sol.stats["deleted"] == 0


def _brute_force_kept(ss: SetSystem, probs):
    """Exact distribution of the kept-set count by enumerating every sampling outcome."""
    dist: dict[int, float] = {}
    for bits in itertools.product((0, 1), repeat=len(probs)):
        pr = math.prod(p if b else 1 - p for p, b in zip(probs, bits))
        sampled = [j for j, b in enumerate(bits) if b]
        marked = set()
        for a in range(ss.n_elements):
            here = [(float(ss.weights[j][list(ss.sets[j]).index(a)]), j) for j in sampled if a in ss.sets[j]]
            for w, j in here:
                if sum(w2 for w2, _ in here if w2 >= w) > 1:
                    marked.add(j)
        kept = len(sampled) - len(marked)
        dist[kept] = dist.get(kept, 0.0) + pr
    return dist


def test_packing_distribution_matches_enumeration():
    ss = SetSystem.create(1, [[0], [0]])
    fs = FractionalSolution(np.array([0.5, 0.5]))
    k = ss.column_sparsity()
    exact = _brute_force_kept(ss, fs.x)  # theta = 1/k gives probability x
    counts = np.bincount([len(round_set_packing(ss, fs, k, seed=s).selected) for s in range(N_SEEDS)], minlength=3)
    for kept, pr in exact.items():
        assert abs(counts[kept] / N_SEEDS - pr) <= 0.02
    assert exact == {0: 0.5, 1: 0.5}


def test_packing_weighted_distribution_matches_enumeration():
    ss = SetSystem.create(2, [[0], [0, 1], [1]], weights=[[0.6], [0.5, 0.7], [0.4]])
    fs = FractionalSolution(np.array([0.6, 0.5, 0.8]))
    k = ss.column_sparsity()
    exact = _brute_force_kept(ss, fs.x)  # theta = 1/k gives probability x
    counts = np.bincount([len(round_set_packing(ss, fs, k, seed=s).selected) for s in range(20_000)], minlength=4)
    for kept, pr in exact.items():
        assert abs(counts[kept] / 20_000 - pr) <= 0.02


@pytest.mark.parametrize("seed", range(10))
def test_packing_never_exceeds_capacity(seed):
    rng = np.random.default_rng(seed)
    sets = [rng.choice(8, size=rng.integers(1, 4), replace=False) for _ in range(10)]
    weights = [rng.uniform(0.2, 1.0, len(s)) for s in sets]
    ss = SetSystem.create(8, sets, weights)
    fs = FractionalSolution(rng.uniform(0, 1, 10))
    for s in range(30):
        sol = round_set_packing(ss, fs, ss.column_sparsity(), seed=s)
        chosen = np.zeros(10, dtype=bool)
        chosen[sol.selected] = True
        assert check_packing(ss, chosen)[0]


def test_packing_records_capped_probabilities():
    ss = SetSystem.create(1, [[0]])
    sol = round_set_packing(ss, FractionalSolution(np.array([1.0])), k=1, theta=0.5, seed=0)
    assert sol.stats["capped"] == 1


def test_packing_independent_set_on_graph():
    g = random_graph(15, 0.3, 1)
    ss = SetSystem.independent_set(g)
    fs = FractionalSolution(np.full(g.n, 0.5))
    for s in range(20):
        sol = round_set_packing(ss, fs, ss.column_sparsity(), seed=s)
        chosen = np.isin(np.arange(g.n), sol.selected)
        assert check_independent_set(g, chosen)[0]


# --- multiway cut ----------------------------------------------------------


def test_mwc_corner_vertex_follows_terminal():
    g = Graph.from_edges(4, [(0, 2), (1, 3), (2, 3)])
    mi = MultiwayInstance(g, [0, 1])
    xv = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.3, 0.7]])
    for s in range(200):
        sol = round_multiway_cut(mi, xv, s)
        assert sol.selected[2] == 0
        assert sol.selected[0] == 0 and sol.selected[1] == 1


def test_mwc_path_cost_is_one_for_every_draw(path_mwc):
    xv = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    orders = set()
    for s in range(500):
        sol = round_multiway_cut(path_mwc, xv, s)
        assert sol.cost == 1.0 and sol.feasible
        orders.add((tuple(sol.stats["order"]), sol.stats["theta"] <= 0.5))
    assert len(orders) == 4  # both permutations on both sides of 1/2


@pytest.mark.parametrize("seed", range(5))
def test_mwc_terminals_kept_and_cost_above_lp(seed):
    g = random_graph(9, 0.4, seed)
    mi = MultiwayInstance(g, [0, 1, 2])
    enc = encode_multiway_cut(mi)
    sol = exact_lp(enc.lp)
    xv = np.clip(enc.decode(sol.x), 0, 1)
    xv /= xv.sum(axis=1, keepdims=True)
    for s in range(50):
        r = round_multiway_cut(mi, xv, s)
        assert check_multiway(mi, r.selected)[0]
        assert r.cost >= sol.objective - 1e-9


def test_mwc_rejects_off_simplex(path_mwc):
    with pytest.raises(InfeasibleInputError):
        round_multiway_cut(path_mwc, np.array([[1.0, 0.0], [0.5, 0.4], [0.0, 1.0]]), 0)
    with pytest.raises(InfeasibleInputError):
        round_multiway_cut(path_mwc, np.array([[0.0, 1.0], [0.5, 0.5], [0.0, 1.0]]), 0)
    with pytest.raises(ValueError):
        round_multiway_cut(path_mwc, np.ones((2, 2)) / 2, 0)


# --- best_of ---------------------------------------------------------------


def test_best_of_deterministic_equals_single(k3):
    fs = FractionalSolution(np.full(3, 0.5))
    single = round_vertex_cover(k3, fs)
    best = best_of(lambda s: round_vertex_cover(k3, fs))
    assert best.cost == single.cost and best.selected.tolist() == single.selected.tolist()


def test_best_of_minimum_property():
    g = random_graph(10, 0.4, 2)
    mi = MultiwayInstance(g, [0, 1, 2])
    xv = np.full((g.n, 3), 1 / 3)
    xv[mi.terminals] = np.eye(3)
    seeds = range(7, 17)
    costs = [round_multiway_cut(mi, xv, s).cost for s in seeds]
    best = best_of(lambda s: round_multiway_cut(mi, xv, s), seeds=seeds)
    assert best.cost == min(costs)
    assert best.stats["repetition_costs"] == costs


def test_best_of_maximize():
    sols = {s: IntegralSolution(np.array([s]), float(s % 4), True) for s in range(10)}
    assert best_of(lambda s: sols[s], maximize=True).cost == 3.0


def test_best_of_all_fail():
    with pytest.raises(RoundingFailure):
        best_of(lambda s: IntegralSolution(np.array([]), 0.0, False))


def test_best_of_failure_rate_binomial():
    # each trial fails with probability 1/2; a batch of 10 fails with probability 2^-10
    batches = 20_000
    fails = 0
    for b in range(batches):
        rng = np.random.default_rng(b)
        draws = rng.random(10) < 0.5
        try:
            best_of(lambda s: IntegralSolution(np.array([]), 0.0, bool(draws[s])))
        except RoundingFailure:
            fails += 1
    mean = batches / 1024
    assert fails <= mean + 5 * math.sqrt(mean)
