import csv
import io
import json

import pytest

from lpround.cli import BENCH_COLUMNS, EXIT_FAILED, EXIT_OK, EXIT_TIMEOUT, EXIT_USAGE, main
from lpround.lp_core import SparseMatrix, StandardFormLp, write_lp
from lpround.problems import random_feasible_lp


@pytest.fixture
def files(tmp_path, edge_lp):
    k3 = tmp_path / "k3.txt"
    k3.write_text("0 1\n1 2\n2 0\n")
    path = tmp_path / "path.txt"
    path.write_text("s v\nv t\n")
    terms = tmp_path / "t.txt"
    terms.write_text("s t\n")
    tiny = tmp_path / "tiny.lp"
    write_lp(edge_lp, tiny)
    sets = tmp_path / "sets.txt"
    sets.write_text("a b\nb c\n2: a c\nc\n")
    return {"k3": k3, "path": path, "terms": terms, "lp": tiny, "sets": sets, "dir": tmp_path}


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _json(out):
    return json.loads(out.strip().splitlines()[-1])


def test_solve_vc(capsys, files):
    code, out, _ = _run(capsys, "solve", "vc", "--graph", files["k3"], "--seed", 7)
    assert code == EXIT_OK
    rec = _json(out)
    assert rec["rounded_objective"] <= 2 * rec["lp_objective"] / (1 - rec["eps"]) + 1e-9
    assert rec["feasible"] and rec["seed"] == 7
    for key in ("lp_objective", "rounded_objective", "eps", "delta_ref", "steps", "threads", "wall_ms", "seed"):
        assert key in rec


def test_solve_lp(capsys, files):
    code, out, _ = _run(capsys, "solve", "lp", "--lp", files["lp"], "--eps", 0.1)
    assert code == EXIT_OK
    rec = _json(out)
    assert rec["eps"] <= 0.1 and rec["rounded_objective"] is None


def test_solve_mwc_with_terminals(capsys, files):
    code, out, _ = _run(capsys, "solve", "mwc", "--graph", files["path"], "--terminals", files["terms"], "--k", 2)
    assert code == EXIT_OK
    rec = _json(out)
    assert rec["feasible"] and rec["rounded_objective"] == 1.0
    assert rec["rounded_objective"] >= rec["lp_objective"] - 0.1
    assert rec["selected"][0] == 0 and rec["selected"][2] == 1


def test_solve_mwc_sampled_terminals(capsys, files):
    code, out, _ = _run(capsys, "solve", "mwc", "--graph", files["k3"], "--k", 2, "--seed", 1)
    assert code == EXIT_OK and _json(out)["k"] == 2


def test_solve_mis_and_setcover(capsys, files):
    code, out, _ = _run(capsys, "solve", "mis", "--graph", files["k3"])
    assert code == EXIT_OK and _json(out)["rounded_objective"] >= 1
    for rounding in ("threshold", "randomized"):
        code, out, _ = _run(capsys, "solve", "setcover", "--sets", files["sets"], "--rounding", rounding)
        assert code == EXIT_OK and _json(out)["feasible"]


def test_solve_csv_output(capsys, files):
    code, out, _ = _run(capsys, "solve", "vc", "--graph", files["k3"], "--out", "csv")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and float(rows[0]["lp_objective"]) > 0


def test_usage_errors(capsys, files):
    assert _run(capsys, "solve", "vc")[0] == EXIT_USAGE
    assert _run(capsys, "solve", "vc", "--graph", files["dir"] / "missing.txt")[0] == EXIT_USAGE
    assert _run(capsys, "solve", "vc", "--graph", files["k3"], "--eps", 0)[0] == EXIT_USAGE
    assert _run(capsys, "solve", "vc", "--graph", files["k3"], "--beta", -1)[0] == EXIT_USAGE
    assert _run(capsys, "solve", "knapsack", "--graph", files["k3"])[0] == EXIT_USAGE
    assert _run(capsys, "solve", "mwc", "--graph", files["k3"])[0] == EXIT_USAGE
    code, _, err = _run(capsys, "solve", "mwc", "--graph", files["path"], "--terminals", files["terms"], "--k", 3)
    assert code == EXIT_USAGE and "--k=3" in err
    assert _run(capsys)[0] == EXIT_USAGE


def test_malformed_input(capsys, files):
    bad = files["dir"] / "bad.txt"
    bad.write_text("0 1\n2\n")
    code, out, err = _run(capsys, "solve", "vc", "--graph", bad)
    assert code == EXIT_USAGE and out == "" and ":2:" in err
    bad_lp = files["dir"] / "bad.lp"
    bad_lp.write_text("nonsense\n")
    assert _run(capsys, "solve", "lp", "--lp", bad_lp)[0] == EXIT_USAGE


def test_self_loop_warning(capsys, files):
    g = files["dir"] / "loop.txt"
    g.write_text("0 0\n0 1\n")
    code, _, err = _run(capsys, "solve", "vc", "--graph", g)
    assert code == EXIT_OK and "self-loop" in err


def test_infeasible_lp_exit_code(capsys, tmp_path):
    # x >= 0 with x = -1 stalls the multiplier loop
    lp = StandardFormLp.create(SparseMatrix.from_dense([[1.0]]), [-1.0], [1.0])
    f = tmp_path / "inf.lp"
    write_lp(lp, f)
    code, out, err = _run(capsys, "solve", "lp", "--lp", f, "--eps", 1e-3)
    assert code == EXIT_FAILED and "solve failed" in err and out == ""


def test_timeout_exit_code(capsys, tmp_path):
    f = tmp_path / "big.lp"
    write_lp(random_feasible_lp(60, 120, 0), f)
    code, out, err = _run(capsys, "solve", "lp", "--lp", f, "--eps", 1e-9, "--time-limit", 1e-6)
    assert code == EXIT_TIMEOUT and "time limit" in err
    assert _json(out)["timed_out"] is True


def test_help(capsys):
    assert _run(capsys, "--help")[0] == EXIT_OK


def test_bench_empty_instance_list(capsys):
    code, out, _ = _run(capsys, "bench", "vc")
    assert code == EXIT_OK
    assert out.strip() == ",".join(BENCH_COLUMNS)


def test_bench_deterministic_rows(capsys, files):
    code, out, _ = _run(capsys, "bench", "vc", files["k3"], files["k3"], "--threads", "1", "--seed", 4)
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 2
    assert rows[0]["steps"] == rows[1]["steps"]
    assert rows[0]["lp_objective"] == rows[1]["lp_objective"]
    assert rows[0]["rounded_objective"] == rows[1]["rounded_objective"]


def test_bench_thread_sweep_and_reps(capsys, files):
    code, out, _ = _run(capsys, "bench", "vc", files["k3"], "--threads", "1,2", "--reps", 2)
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [(r["threads"], r["seed"]) for r in rows] == [("1", "0"), ("1", "1"), ("2", "0"), ("2", "1")]


def test_bench_fixed_steps(capsys, files):
    code, out, _ = _run(capsys, "bench", "lp", files["lp"], "--steps", 500)
    assert code == EXIT_OK
    (row,) = csv.DictReader(io.StringIO(out))
    assert row["steps"] == "500" and row["rounded_objective"] == ""


def test_bench_bad_arguments(capsys, files):
    assert _run(capsys, "bench", "vc", files["k3"], "--threads", "a,b")[0] == EXIT_USAGE
    assert _run(capsys, "bench", "vc", files["k3"], "--threads", "0")[0] == EXIT_USAGE
    assert _run(capsys, "bench", "mis", files["k3"], "--steps", 10)[0] == EXIT_USAGE
