import csv
import io
import json

import pytest

from nondivfem import cli
from nondivfem.cli import CSV_COLUMNS, EXACT, RunConfig, build_config, eoc, evaluate_verdicts, main, run
from nondivfem.solver import SolverError


def test_eoc_examples():
    assert eoc([1, 0.25], [1, 0.5]) == [2.0]
    assert eoc([1, 0.5, 0.25], [1, 0.5, 0.25]) == [1.0, 1.0]
    assert eoc([1e-15, 1e-15], [1, 0.5]) == [EXACT]
    with pytest.raises(ValueError):
        eoc([1.0], [1.0])
    with pytest.raises(ValueError):
        eoc([1.0, 2.0], [1.0, 0.0])


def test_config_invariants():
    with pytest.raises(ValueError):
        RunConfig(levels=(8, 8))
    with pytest.raises(ValueError):
        RunConfig(levels=(16, 8))
    with pytest.raises(ValueError):
        RunConfig(method="dg")
    with pytest.raises(ValueError):
        RunConfig(epsilon=1, gamma0=10.0)
    with pytest.raises(ValueError):
        RunConfig(method="dg", epsilon=2, gamma0=10.0)
    cfg = build_config({"method": "dg", "levels": "4,8"})
    assert (cfg.epsilon, cfg.gamma0, cfg.levels) == (1, 10.0, (4, 8))


def test_single_level_report():
    report = run(RunConfig(problem="identity-sin", degree=1, levels=(8,)))
    assert report.exit_code == 0
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 2
    assert rows[1][6:9] == ["", "", ""]


def test_rates_and_verdicts_pure():
    report = run(RunConfig(problem="smooth-sin", degree=2, levels=(4, 8, 16), probe=True))
    assert report.exit_code == 0
    assert 1.8 <= report.eoc["h1"][-1] <= 2.3
    assert evaluate_verdicts(report.rows, report.eoc, report.expected) == report.verdicts
    doc = json.loads(report.to_json())
    assert doc["expected_orders"]["h1"] == 2
    assert doc["expected_orders"]["h1_literal_exponent"] == 3
    assert doc["rows"][0]["checks"]["sup_ok"]
    assert doc["rows"][0]["checks"]["adjoint_identity"] < 1e-13


def strip_time(text):
    return [row[:-1] for row in csv.reader(io.StringIO(text))]


def test_deterministic_output():
    cfg = RunConfig(problem="hoelder-sin", degree=2, levels=(4, 8), probe=True, seed=3)
    assert strip_time(run(cfg).to_csv()) == strip_time(run(cfg).to_csv())


def test_verdict_failure_exit_code():
    # linear elements cannot reach second order: force a failing verdict window
    report = run(RunConfig(problem="identity-sin", degree=1, levels=(4, 8)))
    report.expected["h1"] = 2
    verdicts = evaluate_verdicts(report.rows, report.eoc, report.expected)
    report.verdicts = verdicts
    assert not verdicts["eoc_h1"]["pass"]
    assert report.exit_code == cli.EXIT_VERDICT


def test_solver_failure_exit_code(monkeypatch, capsys):
    def boom(problem, space):
        raise SolverError("singular")

    monkeypatch.setattr(cli.solver, "solve", boom)
    assert main(["--problem", "identity-sin", "--levels", "4,8"]) == cli.EXIT_FAILURE
    out = capsys.readouterr().out
    assert out.splitlines()[0] == ",".join(CSV_COLUMNS)


def test_bad_config_exit_code(capsys):
    assert main(["--problem", "nope-sin"]) == cli.EXIT_CONFIG
    assert main(["--levels", "8,4"]) == cli.EXIT_CONFIG


def test_dg_run():
    report = run(build_config({"method": "dg", "epsilon": "-1", "degree": "2", "levels": "4,8,16"}))
    assert report.exit_code == 0
    assert report.eoc["h1"][-1] >= 1.8


def test_config_file_and_dumps(tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text(
        "# sweep\nproblem = constant-bubble\ndegree = 2\nlevels = 2,4\nformat = json\nmatrix = 3,0.5,0.5,1\n"
    )
    out, mesh_p, mat_p, sol_p = (tmp_path / name for name in ("r.json", "m.txt", "B.txt", "u.txt"))
    code = main(
        ["--config", str(conf), "--out", str(out), "--dump-mesh", str(mesh_p), "--dump-matrix", str(mat_p),
         "--dump-solution", str(sol_p), "--seed", "5"]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["matrix"] == [[3.0, 0.5], [0.5, 1.0]]
    assert doc["config"]["seed"] == 5
    assert mesh_p.read_text().startswith("vertices 25 cells 32")
    assert mat_p.read_text().startswith("% 49 49 ")
    lines = sol_p.read_text().splitlines()
    assert len(lines) == 81 and len(lines[0].split()) == 3


def test_unknown_config_key(tmp_path):
    conf = tmp_path / "bad.cfg"
    conf.write_text("colour = blue\n")
    with pytest.raises(ValueError):
        cli.read_config_file(conf)


def test_worker_pool_matches_serial():
    serial = run(RunConfig(problem="smooth-sin", degree=1, levels=(4, 8, 16)))
    pooled = run(RunConfig(problem="smooth-sin", degree=1, levels=(4, 8, 16), workers=2))
    assert strip_time(serial.to_csv()) == strip_time(pooled.to_csv())
