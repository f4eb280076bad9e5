import math
import time

import numpy as np
import pytest

from lpround.conditioning import penalty_minimizer
from lpround.lp_core import SparseMatrix, StandardFormLp
from lpround.oracle import exact_lp
from lpround.penalty import PenaltyProblem, lipschitz, objective
from lpround.problems import Graph, MultiwayInstance, encode_multiway_cut, random_feasible_lp, random_graph
from lpround.scd import (
    Block,
    ConfigurationError,
    DivergedError,
    SolveOptions,
    SolverState,
    TimeLimitExceeded,
    _streams,
    block_step,
    qp_gap_surrogate,
    scd_step,
    solve,
    solve_parallel,
)
from tests.conftest import scalar_lp


def _closed_form(a, b, c, beta, x_bar=0.0, lo=0.0, hi=math.inf):
    x = (beta * a * b - c + x_bar / beta) / (beta * a * a + 1 / beta)
    return min(max(x, lo), hi)


class TestScdStep:
    def test_clamped_at_lower_bound(self):
        p = PenaltyProblem(scalar_lp(b=0.0), 1.0)
        s = SolverState.initial(p)
        r0 = s.r.copy()
        scd_step(p, s, 0)
        assert s.x[0] == 0.0 and np.array_equal(s.r, r0)

    def test_scalar_example(self):
        p = PenaltyProblem(scalar_lp(), 2.0)
        assert lipschitz(p).l_max == pytest.approx(2.5)
        s = scd_step(p, SolverState.initial(p), 0)
        assert s.x[0] == pytest.approx(0.4)
        assert s.r[0] == pytest.approx(-0.6)

    def test_repeated_steps_reach_closed_form(self):
        p = PenaltyProblem(scalar_lp(a=2.0, b=3.0, c=0.5), 0.7, x_bar=np.array([0.2]))
        s = SolverState.initial(p)
        for _ in range(200):
            scd_step(p, s, 0)
        assert s.x[0] == pytest.approx(_closed_form(2.0, 3.0, 0.5, 0.7, 0.2), abs=1e-8)

    def test_touches_only_one_coordinate(self):
        lp = random_feasible_lp(4, 7, 1)
        p = PenaltyProblem(lp, 1.0)
        s = SolverState.initial(p, np.full(7, 0.5))
        before = s.x.copy()
        scd_step(p, s, 3)
        changed = np.flatnonzero(s.x != before)
        assert set(changed.tolist()) <= {3}
        np.testing.assert_allclose(s.r, lp.matrix.matvec(s.x) - lp.b, atol=1e-14)

    def test_serial_trajectory_is_monotone(self):
        for seed in range(5):
            lp = random_feasible_lp(6, 12, seed)
            p = PenaltyProblem(lp, 3.0, np.random.default_rng(seed).normal(size=6))
            s = SolverState.initial(p)
            rng = np.random.default_rng(seed)
            f_prev = objective(p, s.x)
            for i in rng.integers(0, 12, 600):
                scd_step(p, s, int(i))
                f = objective(p, s.x)
                assert f <= f_prev + 1e-12 * max(1.0, abs(f_prev))
                f_prev = f


class TestBlockStep:
    def _problem(self):
        lp = StandardFormLp.create(SparseMatrix.from_triplets([], [], [], (0, 3)), np.zeros(0), np.zeros(3), upper=np.ones(3))
        return PenaltyProblem(lp, 1.0)

    @pytest.mark.parametrize(
        "x0, expected",
        [
            ([0.5, 0.5, 0.5], [1 / 3, 1 / 3, 1 / 3]),
            ([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            ([0.7, 0.2, 0.0], [0.7 + 1 / 30, 0.2 + 1 / 30, 1 / 30]),
        ],
    )
    def test_zero_gradient_projection(self, x0, expected):
        p = self._problem()
        s = SolverState(np.array(x0), np.zeros(0))
        block_step(p, s, [0, 1, 2], simplex=True, step=0.0)
        np.testing.assert_allclose(s.x, expected, atol=1e-15)

    def test_simplex_needs_unit_box(self):
        lp = random_feasible_lp(2, 3, 0, upper=np.inf)
        p = PenaltyProblem(lp, 1.0)
        with pytest.raises(ConfigurationError):
            block_step(p, SolverState.initial(p), [0, 1], simplex=True)

    def test_sums_stay_on_simplex(self):
        g = random_graph(7, 0.5, 3)
        enc = encode_multiway_cut(MultiwayInstance(g, [0, 3, 6]))
        p = PenaltyProblem(enc.lp, 2.0)
        x0 = np.zeros(enc.lp.n)
        x0[enc.decision.ravel()] = 1 / 3
        x0 = enc.full_solution(x0[enc.decision])
        s = SolverState.initial(p, x0)
        rng = np.random.default_rng(0)
        for _ in range(300):
            blk = enc.blocks[rng.integers(len(enc.blocks))]
            block_step(p, s, blk.indices, simplex=True)
            vals = s.x[blk.indices]
            assert abs(vals.sum() - 1.0) <= 1e-12 and vals.min() >= 0.0
        np.testing.assert_allclose(s.r, enc.lp.matrix.matvec(s.x) - enc.lp.b, atol=1e-12)


class TestSolve:
    def test_scalar(self):
        p = PenaltyProblem(scalar_lp(c=0.5), 2.0)
        res = solve(p, SolveOptions(max_steps=10_000, target_qp_gap=1e-14))
        assert res.x[0] == pytest.approx(_closed_form(1.0, 1.0, 0.5, 2.0), abs=1e-6)
        assert res.stats.converged

    def test_compiled_matches_reference_steps(self):
        lp = random_feasible_lp(8, 15, 2)
        p = PenaltyProblem(lp, 1.5, np.linspace(-1, 1, 8), np.full(15, 0.3))
        n_steps = 15 * 10
        res = solve(p, SolveOptions(max_steps=n_steps, check_interval=n_steps, x0=np.full(15, 0.3), seed=11))
        s = SolverState.initial(p, np.full(15, 0.3))
        l_max = lipschitz(p).l_max
        for i in _streams(11, 1)[0].integers(0, 15, size=n_steps):
            scd_step(p, s, int(i), l_max)
        np.testing.assert_allclose(res.x, s.x, atol=1e-12)

    def test_compiled_trajectory_is_monotone(self):
        lp = random_feasible_lp(6, 10, 4)
        p = PenaltyProblem(lp, 2.0)
        values = [objective(p, solve(p, SolveOptions(max_steps=k, check_interval=200, seed=3)).x) for k in range(1, 200)]
        assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(values, values[1:]))

    def test_fixed_point_at_optimal_anchors(self):
        lp = random_feasible_lp(5, 10, 6)
        sol = exact_lp(lp)
        p = PenaltyProblem(lp, 1.0, sol.u, sol.x)
        res = solve(p, SolveOptions(max_steps=2000, x0=sol.x))
        assert res.certificate.eps_measured <= 1e-9
        np.testing.assert_allclose(res.x, sol.x, atol=1e-9)

    def test_random_lp_reaches_qp_gap(self):
        lp = random_feasible_lp(20, 40, 0)
        p = PenaltyProblem(lp, 5.0)
        f_star = objective(p, penalty_minimizer(p))
        res = solve(p, SolveOptions(max_steps=2_000_000, target_qp_gap=1e-7))
        assert res.stats.converged
        assert objective(p, res.x) - f_star <= 1e-7

    def test_surrogate_vanishes_at_minimizer(self):
        lp = random_feasible_lp(5, 8, 1)
        p = PenaltyProblem(lp, 2.0)
        x_star = penalty_minimizer(p)
        assert qp_gap_surrogate(p, x_star) <= 1e-16
        assert qp_gap_surrogate(p, np.zeros(8)) > 1e-6

    def test_residual_drift_after_refresh(self):
        lp = random_feasible_lp(30, 60, 5)
        res = solve(PenaltyProblem(lp, 10.0), SolveOptions(max_steps=60 * 50))
        assert res.stats.max_drift <= 1e-8
        assert res.stats.epochs == 50

    def test_blocks_stay_on_simplex(self):
        g = random_graph(8, 0.5, 1)
        enc = encode_multiway_cut(MultiwayInstance(g, [0, 4]))
        res = solve(PenaltyProblem(enc.lp, 1.0), SolveOptions(max_steps=5000, blocks=enc.blocks))
        xv = res.x[enc.decision]
        np.testing.assert_allclose(xv.sum(axis=1), 1.0, atol=1e-12)
        assert xv.min() >= 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_diverged(self):
        lp = StandardFormLp.create(SparseMatrix.from_triplets([], [], [], (0, 1)), np.zeros(0), [-1e308])
        with pytest.raises(DivergedError):
            solve(PenaltyProblem(lp, 1e10), SolveOptions(max_steps=10))

    def test_time_limit_returns_partial(self):
        lp = random_feasible_lp(10, 20, 0)
        with pytest.raises(TimeLimitExceeded) as info:
            solve(PenaltyProblem(lp, 1.0), SolveOptions(max_steps=10**6, target_qp_gap=1e-30, deadline=time.monotonic() - 1))
        assert info.value.partial.x.shape == (20,)

    @pytest.mark.parametrize(
        "kwargs",
        [{"threads": 0}, {"step_safety": 0.0}, {"step_safety": 1.5}],
    )
    def test_bad_options(self, kwargs):
        with pytest.raises(ConfigurationError):
            SolveOptions(**kwargs)

    def test_overlapping_blocks(self):
        lp = random_feasible_lp(2, 4, 0)
        with pytest.raises(ConfigurationError):
            solve(PenaltyProblem(lp, 1.0), SolveOptions(max_steps=5, blocks=[Block([0, 1]), Block([1, 2])]))


class TestParallel:
    def test_one_thread_is_bitwise_serial(self):
        lp = random_feasible_lp(20, 40, 1)
        p = PenaltyProblem(lp, 3.0)
        opts = SolveOptions(max_steps=4000, seed=9, threads=1)
        a, b = solve(p, opts), solve_parallel(p, opts)
        assert np.array_equal(a.x, b.x)

    def test_one_thread_blocks_bitwise_serial(self):
        enc = encode_multiway_cut(MultiwayInstance(random_graph(8, 0.5, 2), [0, 7]))
        p = PenaltyProblem(enc.lp, 1.0)
        opts = SolveOptions(max_steps=3000, seed=2, blocks=enc.blocks)
        assert np.array_equal(solve(p, opts).x, solve_parallel(p, opts).x)

    def test_four_threads_certificate_close_to_serial(self):
        lp = random_feasible_lp(20, 40, 3)
        p = PenaltyProblem(lp, 3.0)
        serial = solve(p, SolveOptions(max_steps=20_000, seed=1))
        par = solve_parallel(p, SolveOptions(max_steps=20_000, seed=1, threads=4))
        assert par.stats.threads == 4 and par.stats.steps == serial.stats.steps
        assert par.certificate.eps_measured <= 2 * serial.certificate.eps_measured
        assert par.stats.max_drift <= 1e-8

    def test_four_threads_blocks(self):
        enc = encode_multiway_cut(MultiwayInstance(random_graph(10, 0.4, 4), [0, 5, 9]))
        res = solve_parallel(PenaltyProblem(enc.lp, 1.0), SolveOptions(max_steps=20_000, blocks=enc.blocks, threads=4))
        np.testing.assert_allclose(res.x[enc.decision].sum(axis=1), 1.0, atol=1e-12)

    def test_atomic_add_under_contention(self):
        from concurrent.futures import ThreadPoolExecutor

        from lpround._kernels import atomic_add_many

        arr = np.zeros(4)
        idx = np.tile(np.arange(4), 50_000)
        vals = np.ones(idx.size)
        with ThreadPoolExecutor(4) as pool:
            for f in [pool.submit(atomic_add_many, arr, idx, vals) for _ in range(4)]:
                f.result()
        np.testing.assert_array_equal(arr, np.full(4, 200_000.0))
