import json
import subprocess
import sys

import pytest

from todadisk.cli import main

SMALL = {"R": 0.95, "n_rho": 33, "n_theta": 16, "cluster": False}


def write_config(tmp_path, name="cfg.json", **over):
    cfg = {
        "kind": "cyclic",
        "rank": 3,
        "q": {"order": 3, "numerator": [[1, 0]], "denominator": [[1, 0]]},
        "grid": SMALL,
    }
    cfg.update(over)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_solve_writes_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["solve", str(cfg), "--out", str(out)]) == 0
    for name in ("fields/w_1.csv", "solution.json", "report.json", "report.txt", "config.json", "manifest.json", "run.log"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) == {"config_hash", "versions", "grids"}
    assert manifest["grids"] == [SMALL]
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "ok"
    assert report["equivalence"]["verdict"] == "all-witnessed"
    assert "converged" in capsys.readouterr().out


def test_zero_q_solve_needs_at_most_two_newton_iterations(tmp_path):
    cfg = write_config(tmp_path, rank=4, q={"order": 4, "numerator": [[0, 0]]})
    out = tmp_path / "run"
    assert main(["solve", str(cfg), "--out", str(out), "--quiet"]) == 0
    meta = json.loads((out / "solution.json").read_text())
    assert meta["newton_iterations"] <= 2


def test_identical_configs_give_identical_reports(tmp_path):
    cfg = write_config(tmp_path)
    for name in ("a", "b"):
        assert main(["solve", str(cfg), "--out", str(tmp_path / name), "--quiet"]) == 0
    for name in ("report.json", "solution.json", "manifest.json", "fields/w_1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    # the sidecar log carries timestamps; nothing else does
    assert (tmp_path / "a" / "run.log").read_text()[:2] == "20"


def test_verify_regenerates_report_bit_identically(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", str(write_config(tmp_path)), "--out", str(out), "--quiet"]) == 0
    assert main(["verify", str(out), "--quiet"]) == 0
    again = tmp_path / "again"
    assert main(["verify", str(out), "--out", str(again), "--quiet"]) == 0
    assert (again / "report.json").read_bytes() == (out / "report.json").read_bytes()


def test_verify_detects_tampering(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", str(write_config(tmp_path)), "--out", str(out), "--quiet"]) == 0
    rows = (out / "fields" / "w_1.csv").read_text().splitlines()
    head, first = rows[0], rows[1].split(",")
    first[-1] = repr(float(first[-1]) + 1e-3)
    (out / "fields" / "w_1.csv").write_text("\n".join([head, ",".join(first)] + rows[2:]) + "\n")
    assert main(["verify", str(out), "--quiet"]) == 3


@pytest.mark.parametrize(
    "over,names",
    [
        ({"kind": "maximal", "rank": None, "q": {"order": 4, "numerator": [[0.5, 0]]}}, ["u", "v"]),
        ({"kind": "g2", "rank": None, "q": {"order": 6, "numerator": [[0.8, 0]]}}, ["w_2", "w_3"]),
        (
            {"kind": "g2", "rank": None, "g2_mode": "unconstrained", "q": {"order": 6, "numerator": [[0.8, 0]]}},
            ["w_1", "w_2", "w_3"],
        ),
        (
            {"kind": "vortex", "rank": None, "vortex": {"a": 2, "b": 2, "c": 0.25, "kappa": -1}, "q": {"order": 2, "numerator": [[0.5, 0]]}},
            ["w"],
        ),
        ({"kind": "wang", "rank": None, "q": {"order": 3, "numerator": [[0.5, 0]]}}, ["w"]),
        ({"kind": "subcyclic", "rank": 5, "q": {"order": 4, "numerator": [[0.5, 0], [0.2, 0]]}}, ["w_1", "w_2"]),
    ],
)
def test_solve_and_verify_every_family(tmp_path, over, names):
    cfg = write_config(tmp_path, **over)
    out = tmp_path / "run"
    assert main(["solve", str(cfg), "--out", str(out), "--quiet"]) == 0
    assert json.loads((out / "solution.json").read_text())["fields"] == names
    assert main(["verify", str(out), "--quiet"]) == 0


def test_verify_mode_writes_refinement_check(tmp_path):
    cfg = write_config(tmp_path, mode="verify", grid={**SMALL, "n_rho": 17, "n_theta": 8})
    out = tmp_path / "run"
    assert main(["solve", str(cfg), "--out", str(out), "--quiet"]) == 0
    check = json.loads((out / "refinement_check.json").read_text())
    assert check["fine_grid"]["n_rho"] == 33 and check["consistency"]["consistent"]
    assert len(json.loads((out / "manifest.json").read_text())["grids"]) == 2


def test_refine_mode(tmp_path):
    cfg = write_config(tmp_path, mode="refine", grid={**SMALL, "n_rho": 17, "n_theta": 8}, sweep={"levels": 3})
    out = tmp_path / "run"
    assert main(["solve", str(cfg), "--out", str(out), "--quiet"]) == 0
    table = json.loads((out / "refine.json").read_text())
    assert [row["n_rho"] for row in table["levels"]] == [17, 33, 65]


def test_sweep_r_mode(tmp_path):
    cfg = write_config(tmp_path, mode="sweep-R", grid={**SMALL, "n_rho": 33, "n_theta": 16})
    out = tmp_path / "sweep"
    assert main(["sweep", str(cfg), "--out", str(out), "--quiet"]) == 0
    for R in ("0.9", "0.95", "0.99"):
        assert (out / f"R_{R}" / "report.json").exists()
    summary = json.loads((out / "sweep.json").read_text())
    assert summary["radii"] == [0.9, 0.95, 0.99]
    assert summary["verdict"] == "equivalent-TRUE"
    assert "equivalent-TRUE" in (out / "sweep.txt").read_text()


def test_sweep_threads_do_not_change_outputs(tmp_path):
    cfg = write_config(tmp_path, mode="sweep-amplitude", sweep={"amplitudes": [0.5, 1.0]}, grid={**SMALL, "n_rho": 17, "n_theta": 8})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", str(cfg), "--out", str(a), "--quiet"]) == 0
    assert main(["sweep", str(cfg), "--out", str(b), "--quiet", "--threads", "2"]) == 0
    assert (a / "sweep.json").read_bytes() == (b / "sweep.json").read_bytes()
    assert (a / "t_0.5" / "report.json").read_bytes() == (b / "t_0.5" / "report.json").read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, rank=2)
    assert main(["solve", str(cfg), "--out", str(tmp_path / "x")]) == 1
    assert "order must equal rank for cyclic" in capsys.readouterr().err
    cfg = write_config(tmp_path, mode="sweep-R")
    assert main(["solve", str(cfg), "--out", str(tmp_path / "x"), "--quiet"]) == 1


def test_solver_failure_exit_code(tmp_path):
    cfg = write_config(
        tmp_path,
        q={"order": 3, "numerator": [[50, 0]]},
        grid={**SMALL, "n_rho": 17, "n_theta": 8},
        solver={"max_iter": 1, "steps": 1},
    )
    assert main(["solve", str(cfg), "--out", str(tmp_path / "x"), "--quiet"]) == 2


def test_io_failure_exit_code(tmp_path):
    assert main(["verify", str(tmp_path / "missing"), "--out", str(tmp_path / "o"), "--quiet"]) == 4
    assert main(["solve", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o"), "--quiet"]) == 4


def test_quiet_suppresses_stdout(tmp_path, capsys):
    assert main(["solve", str(write_config(tmp_path)), "--out", str(tmp_path / "r"), "--quiet"]) == 0
    assert capsys.readouterr().out == ""


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, grid={**SMALL, "n_rho": 17, "n_theta": 8})
    res = subprocess.run(
        [sys.executable, "-m", "todadisk", "solve", str(cfg), "--out", str(tmp_path / "r"), "--quiet"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
