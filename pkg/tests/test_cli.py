import csv
import io
import json
import subprocess
import sys

import pytest

from closedrag.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_pigou(capsys):
    code, out, _ = run(capsys, "solve", "--builtin", "pigou")
    assert code == 0
    rep = json.loads(out)
    t = rep["types"][0]
    assert t["reward"] == pytest.approx(2.0, abs=1e-8)
    assert t["delays"]["route1"] == pytest.approx(1.0, abs=1e-8)
    assert rep["tol"] == 1e-8 and rep["kkt_residual"] <= 1e-8


def test_solve_crowdsourcing(capsys):
    code, out, _ = run(capsys, "solve", "--builtin", "crowdsourcing", "--eps", "0.1")
    assert code == 0
    assert json.loads(out)["total_reward"] == pytest.approx(2 / 1.1, abs=1e-8)


def test_solve_missing_file(capsys):
    code, _, err = run(capsys, "solve", "nonexistent.json")
    assert code == 2 and "nonexistent.json" in err


def test_solve_file_and_csv(capsys, tmp_path):
    from closedrag.scenarios import pigou

    path = tmp_path / "pigou.json"
    path.write_text(pigou().to_json())
    code, out, _ = run(capsys, "solve", str(path), "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 2
    assert float(rows[0]["rate"]) == pytest.approx(1.0, abs=1e-8)


def candidate(tmp_path, data):
    path = tmp_path / "cand.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_verify(capsys, tmp_path):
    path = candidate(tmp_path, {"x": [[1, 0]], "w": [[1, 0]]})
    code, out, _ = run(capsys, "verify", "--builtin", "pigou", "--candidate", path)
    assert code == 0 and json.loads(out)["verdict"] is True
    path = candidate(tmp_path, {"x": [[1, 1]], "w": [[0, 0]]})
    code, out, _ = run(capsys, "verify", "--builtin", "pigou", "--candidate", path)
    rep = json.loads(out)
    assert code == 0 and rep["verdict"] is False
    assert list(rep["best_response_gaps"].values()) == [pytest.approx(1.0)]


@pytest.mark.parametrize("data", [{}, {"x": [], "w": []}, {"x": [[1, 0, 0]], "w": [[0, 0, 0]]}])
def test_verify_bad_candidate(capsys, tmp_path, data):
    code, _, _ = run(capsys, "verify", "--builtin", "pigou", "--candidate", candidate(tmp_path, data))
    assert code == 2


def test_poa(capsys):
    code, out, _ = run(capsys, "poa", "--builtin", "poa_family", "--eps", "0.25")
    assert code == 0 and json.loads(out)["ratio"] == pytest.approx(1.75, abs=1e-7)


@pytest.mark.parametrize("jobs", ["1", "4"])
def test_sweep(capsys, jobs):
    code, out, _ = run(capsys, "sweep", "--builtin", "ride_hailing", "--from", "1", "--to", "7",
                       "--steps", "7", "--jobs", jobs)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    waiting = [float(r["waiting_mass"]) for r in rows]
    assert waiting[:6] == pytest.approx([0, 0, 1, 2, 2, 2], abs=1e-6)
    assert waiting[6] > 2 + 1e-6


def test_sweep_order_independent_of_jobs(capsys):
    args = ["sweep", "--builtin", "ride_hailing", "--from", "1", "--to", "7", "--steps", "13"]
    _, one, _ = run(capsys, *args)
    _, many, _ = run(capsys, *args, "--jobs", "6")
    assert one == many


def test_sweep_bad_steps(capsys):
    code, _, _ = run(capsys, "sweep", "--builtin", "ride_hailing", "--from", "1", "--to", "7", "--steps", "1")
    assert code == 2


def test_smdp(capsys):
    code, out, _ = run(capsys, "smdp", "--builtin", "smdp_chain")
    rep = json.loads(out)
    assert code == 0 and rep["dp_residual"] <= 1e-6
    assert rep["gain"] == pytest.approx(2 / 3, abs=1e-7)


def test_simulate(capsys):
    code, out, err = run(capsys, "simulate", "--builtin", "pigou", "--horizon", "200")
    assert code == 0
    summary = json.loads(err)
    assert summary["delay_gap"] <= 1e-3
    header = out.splitlines()[0].split(",")
    assert header[0] == "time" and header[1].startswith("delta:")


def test_bad_tol(capsys):
    code, _, _ = run(capsys, "solve", "--builtin", "pigou", "--tol", "0")
    assert code == 2


def test_solver_failure_exit_code(capsys):
    code, _, err = run(capsys, "solve", "--builtin", "random", "--seed", "0", "--max-iter", "3", "--tol", "1e-30")
    assert code == 3 and "solver failure" in err


def test_help_lists_csv_columns(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "waiting_mass" in capsys.readouterr().out


def test_byte_identical_subprocess():
    cmd = [sys.executable, "-m", "closedrag", "solve", "--builtin", "random", "--seed", "5", "--sizes", "2,2,3"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a
