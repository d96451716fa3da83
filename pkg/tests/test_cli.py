import json

import pytest

import peerocp.workflows as wf
from peerocp.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_SOLVER, main
from peerocp.integrate import SolverError

HEAT = {"problem": "heat1d", "m": 20, "N": [7, 15], "optimizer": {"tol": 1e-9}}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_verify_all(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path), "--seed", "1"]) == EXIT_OK
    rep = json.loads((tmp_path / "verify_AP4o33vgi.json").read_text())
    assert rep["passed"] and rep["alpha_deg"] == 61.59
    assert abs(rep["contraction"]["start"]["rho_real"] - 0.064) < 0.005
    out = capsys.readouterr().out
    assert "grid_class=smooth" in out


def test_verify_corrupted_file(tmp_path, capsys):
    assert main(["dump-coeffs", "--triplet", "AP4o33vsi", "--out", str(tmp_path)]) == EXIT_OK
    path = tmp_path / "coeffs_AP4o33vsi.json"
    doc = json.loads(path.read_text())
    doc["A"][2][1] += 1e-3
    path.write_text(json.dumps(doc))
    assert main(["verify", "--triplet", str(path), "--out", str(tmp_path)]) == EXIT_FAIL
    assert "order condition 'forward'" in capsys.readouterr().out


def test_config_errors(tmp_path):
    assert main(["verify", "--triplet", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["solve", "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = write(tmp_path, {"problem": "heat1d", "colour": "red"})
    assert main(["solve", "--config", bad, "--out", str(tmp_path)]) == EXIT_CONFIG
    pca = write(tmp_path, {"problem": "pca2d"}, "p.json")
    assert main(["convergence", "--config", pca, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_convergence_table(tmp_path):
    cfg = write(tmp_path, dict(HEAT, grid="adapt"))
    assert main(["convergence", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    files = sorted(tmp_path.glob("errors_*.csv"))
    assert len(files) == 2
    lines = files[0].read_text().splitlines()
    assert lines[0].startswith("# peerocp problem=heat1d triplet=AP4o33vgi config=")
    assert lines[1].startswith("N,steps,err_u")
    assert len(lines) == 4


def test_solver_failure_aborts_row_only(tmp_path, monkeypatch):
    real = wf.run_optimizer

    def flaky(problem, triplet, grid, *a, **k):
        if grid.steps == 8:
            raise SolverError("forced failure", 0)
        return real(problem, triplet, grid, *a, **k)

    monkeypatch.setattr(wf, "run_optimizer", flaky)
    cfg = write(tmp_path, HEAT)
    assert main(["convergence", "--config", cfg, "--out", str(tmp_path)]) == EXIT_SOLVER
    text = next(tmp_path.glob("errors_*.csv")).read_text()
    assert "failed" in text and "\n15,16," in text


def test_solve_is_deterministic(tmp_path):
    doc = dict(HEAT, N=7, grid="adapt", outputs=["trace", "controls", "grid", "density", "trajectory"])
    cfg = write(tmp_path, doc)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--out", str(a), "--dump-limit", "2"]) == EXIT_OK
    assert main(["solve", "--config", cfg, "--out", str(b), "--dump-limit", "2"]) == EXIT_OK
    names = sorted(p.name for p in a.glob("*.csv"))
    assert any(n.startswith("density_") for n in names)
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n
        assert (a / n).read_text().startswith("# peerocp"), n
    traj = next(a.glob("trajectory_*uniform*.csv")).read_text().splitlines()
    assert traj[1] == "t_stage,stage_index,y1,y2"


def test_solve_on_grid_file(tmp_path):
    gfile = tmp_path / "grid.csv"
    gfile.write_text("# a grid\nt\n0\n0.1\n0.3\n0.55\n0.8\n1.0\n")
    cfg = write(tmp_path, dict(HEAT, N=4, grid="file", grid_file=str(gfile), outputs=["grid"]))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    bad = write(tmp_path, dict(HEAT, grid="file", grid_file=str(tmp_path / "none.csv")), "b.json")
    assert main(["solve", "--config", bad, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_adapt_demo(tmp_path, capsys):
    cfg = write(tmp_path, {"problem": "heat1d", "m": 20, "N": 15})
    assert main(["adapt-demo", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "sigma in" in out and "ratio=" in out
    assert list(tmp_path.glob("grid_*adapt*.csv"))
