import csv

import numpy as np
import pytest

from chebmpc.cli import BENCH_COLUMNS, SCHEMA, TRAJ_COLUMNS, main
from chebmpc.chebyshev import ChebyshevBasis


def _rows(path):
    lines = path.read_text().splitlines()
    assert lines[0] == SCHEMA
    return list(csv.reader(lines[1:]))


def _yaml(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_sim_writes_trajectory(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["sim", "--out", str(out), "--seed", "3"]) == 0
    rows = _rows(out)
    assert rows[0] == TRAJ_COLUMNS and len(rows) > 2
    assert rows[-1][-1] == "DOCK"
    assert "status: docked" in capsys.readouterr().out


def test_sim_malformed_config_exits_1(tmp_path, capsys):
    cfg = _yaml(tmp_path, "plant:\n  mass: 1.0\n  bogus: 2\n")
    assert main(["sim", "--config", str(cfg), "--out", str(tmp_path / "t.csv")]) == 1
    assert "line 3" in capsys.readouterr().err
    assert not (tmp_path / "t.csv").exists()


def test_sim_missing_config_exits_1(tmp_path):
    assert main(["sim", "--config", str(tmp_path / "nope.yaml")]) == 1


def test_sim_timeout_exits_2_with_partial_csv(tmp_path):
    cfg = _yaml(tmp_path, "run:\n  timeout: 0.0\n")
    out = tmp_path / "t.csv"
    assert main(["sim", "--config", str(cfg), "--out", str(out)]) == 2
    assert len(_rows(out)) == 2


def test_bad_arguments_exit_1():
    assert main(["sim", "--seed", "-4"]) == 1
    assert main(["nosuchcommand"]) == 1


def test_bench_columns_and_constant_sizes(tmp_path):
    out = tmp_path / "b.csv"
    args = ["bench", "--out", str(out), "--q", "4", "--p", "5,20", "--repeats", "3"]
    assert main(args) == 0
    rows = _rows(out)
    assert rows[0] == BENCH_COLUMNS
    body = [dict(zip(BENCH_COLUMNS, r)) for r in rows[1:]]
    mpc3 = [r for r in body if r["method"] == "mpc3"]
    disc = [r for r in body if r["method"] == "discrete"]
    assert len({(r["dim"], r["n_eq"], r["n_in"], r["bytes"]) for r in mpc3}) == 1
    assert int(disc[1]["dim"]) > int(disc[0]["dim"])
    assert all(float(r["warm_us"]) > 0 for r in body)


def test_bench_rejects_unknown_method(tmp_path):
    assert main(["bench", "--methods", "magic", "--out", str(tmp_path / "b.csv")]) == 1


def test_mc_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["mc", "--runs", "4", "--seed", "11", "--out", str(a)]) == 0
    assert main(["mc", "--runs", "4", "--seed", "11", "--jobs", "2", "--out", str(b)]) == 0
    for name in ("runs.csv", "s_band.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len(_rows(a / "runs.csv")) == 5


def test_mc_single_noiseless_run_matches_sim(tmp_path, capsys):
    cfg = _yaml(tmp_path, "plant:\n  noise_std: 0.0\n")
    assert main(["sim", "--config", str(cfg), "--out", str(tmp_path / "t.csv")]) == 0
    sim_out = capsys.readouterr().out
    assert main(["mc", "--config", str(cfg), "--runs", "1", "--out", str(tmp_path / "mc")]) == 0
    mc_out = capsys.readouterr().out
    block = sim_out[sim_out.index("summary:"):].strip()
    assert block in mc_out


def test_selftest_clean_and_with_fault(capsys):
    assert main(["selftest"]) == 0
    clean = capsys.readouterr().out
    assert clean.count("PASS") == 4
    assert main(["selftest", "--inject-fault", "weights"]) == 1
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("quadrature: FAIL")
    assert all("PASS" in line for line in lines[1:])


def test_dump_basis_matches_operators(tmp_path):
    out = tmp_path / "basis.csv"
    assert main(["dump-basis", "--n", "4", "--out", str(out)]) == 0
    rows = _rows(out)
    b = ChebyshevBasis.build(4)
    assert rows[1][0] == "start" and len(rows) == 2 + b.size
    body = np.array([[float(x) for x in r[1:]] for r in rows[2:]])
    assert np.array_equal(body[:, 0], b.nodes) and np.array_equal(body[:, 1], b.weights)
    assert np.array_equal(body[:, 2 + 2 * b.size:2 + 3 * b.size], b.gamma_mat)
