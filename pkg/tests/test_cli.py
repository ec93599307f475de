import json
import subprocess
import sys

import pytest

from surfns.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, build_parser, geometry_verdict, main, resolve_config
from surfns.metrics import CSV_COLUMNS, read_csv


def test_usage_errors(tmp_path, capsys):
    assert main(["solve", "--h", "-1", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["solve", "--bdf", "4"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["convergence", "--levels", "1", "--out", str(tmp_path)]) == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"h": 0.25, "dt": 0.1, "T": 0.4, "bdf": 2}))
    args = build_parser().parse_args(["solve", "--config", str(cfg), "--dt", "0.05", "--no-advective-correction"])
    rc = resolve_config(args)
    assert (rc.h, rc.dt, rc.T, rc.bdf) == (0.25, 0.05, 0.4, 2)
    assert rc.advective_correction is False
    default = resolve_config(build_parser().parse_args(["solve"]))
    assert (default.h, default.dt, default.T, default.bdf, default.c_delta) == (0.5, 0.2, 2.0, 1, 2.5)


def test_single_step_solve(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["solve", "--h", "0.5", "--t-end", "0.2", "--dt", "0.2", "--bdf", "1", "--m", "1", "--q", "1",
                 "--out", str(out), "--surface-dump", "obj"])
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["n_steps"] == 1 and len(report["steps"]) == 1
    assert report["config"]["h"] == 0.5 and report["seed"] == 0
    diag = [json.loads(s) for s in (out / "diagnostics.jsonl").read_text().splitlines()]
    assert [d["step"] for d in diag] == [0, 1]
    assert (out / "surface.obj").read_text().startswith("v ")
    assert "N=1" in capsys.readouterr().out


def test_solve_abort_exit_code(tmp_path, capsys):
    code = main(["solve", "--t-end", "0.4", "--c-delta", "1e-6", "--out", str(tmp_path)])
    assert code == EXIT_FAIL
    assert "abort at step 1" in capsys.readouterr().err


def test_unsupported_geometry_degree(tmp_path):
    from surfns.levelset import UnsupportedConfigurationError

    with pytest.raises(UnsupportedConfigurationError):
        main(["solve", "--q", "2", "--t-end", "0.2", "--out", str(tmp_path)])


def test_convergence_two_levels(tmp_path, capsys):
    out = tmp_path / "conv"
    args = ["convergence", "--levels", "2", "--bdf", "1", "--t-end", "0.2", "--out", str(out)]
    assert main(args) == EXIT_OK
    rows = read_csv(out / "convergence.csv")
    assert [r["MeshSize"] for r in rows] == [0.5, 0.25]
    assert (out / "convergence.csv").read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert json.loads((out / "report_1.json").read_text())["dt"] == 0.05
    assert "order 0.5->0.25" in capsys.readouterr().out
    assert "convergence.csv" in (out / "convergence.gp").read_text()
    # rerun with identical flags gives identical CSV
    first = (out / "convergence.csv").read_text()
    assert main(args) == EXIT_OK
    assert (out / "convergence.csv").read_text() == first


def test_geometry_check_plane(capsys):
    assert main(["geometry-check", "--plane", "--levels", "2", "--json", "--strict"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert all(v == "exact" for v in data["orders"][0].values())


def test_geometry_check_sphere(capsys):
    assert main(["geometry-check", "--levels", "3", "--strict"]) == EXIT_OK
    text = capsys.readouterr().out
    assert text.count("order") == 2


def test_geometry_check_strict_failure(capsys):
    # the first refinement pair has an area order of about 1.70, just below the bound
    assert main(["geometry-check", "--levels", "2", "--json"]) == EXIT_OK
    assert main(["geometry-check", "--levels", "2", "--strict"]) == EXIT_FAIL
    assert "area" in capsys.readouterr().err


def test_geometry_verdict():
    assert geometry_verdict([]) == []
    assert geometry_verdict([{"distance": 2.0, "normal": 1.0, "area": "exact"}]) == []
    assert geometry_verdict([{"distance": 1.0, "normal": float("nan"), "area": 2.0}]) == ["distance", "normal"]


def test_dump(tmp_path):
    from surfns.solver import read_matrix

    assert main(["dump", "--t-end", "0.4", "--out", str(tmp_path)]) == EXIT_OK
    A = read_matrix(tmp_path / "step1_matrix.mtx")
    b = read_matrix(tmp_path / "step1_rhs.mtx")
    assert A.shape[0] == A.shape[1] == b.shape[0]
    assert (tmp_path / "step1_surface.obj").exists()
    assert main(["dump", "--t-end", "0.4", "--step", "9", "--out", str(tmp_path)]) == EXIT_USAGE


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "surfns.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "geometry-check" in res.stdout
