import os
import shutil
import signal
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from antiplane.cli import EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY, build_parser, main
from antiplane.mesh import load_mesh
from antiplane.output import StepRecord, read_csv

from conftest import TAGS, square

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def test_mesh_rect_round_trip(tmp_path, capsys):
    out = tmp_path / "m.txt"
    assert main(["mesh", "rect", "--nx", "8", "--ny", "8", "--tags", TAGS, "--out", str(out)]) == 0
    assert load_mesh(out) == square(8)


def test_mesh_missing_clamp(tmp_path, capsys):
    rc = main(["mesh", "rect", "--nx", "2", "--ny", "2", "--tags", "bottom=G3,top=G2:Ga,left=G2:Gb,right=G2:Gb",
               "--out", str(tmp_path / "m.txt")])
    assert rc == EXIT_CONFIG
    assert "measure(Γ1) = 0" in capsys.readouterr().err


def test_mesh_argument_error(capsys):
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["mesh", "rect", "--nx", "0", "--ny", "2", "--tags", TAGS])
    assert info.value.code == 2


def test_trace_constant(tmp_path, capsys):
    main(["mesh", "rect", "--nx", "4", "--ny", "4", "--tags", TAGS, "--out", str(tmp_path / "m.txt")])
    capsys.readouterr()
    assert main(["trace-constant", str(tmp_path / "m.txt")]) == 0
    line = capsys.readouterr().out.splitlines()[0]
    assert float(line.split("=")[1]) == pytest.approx(1.0, rel=1e-10)
    assert main(["trace-constant", str(tmp_path / "nope.txt")]) == EXIT_CONFIG


def test_solve_zero_config(tmp_path):
    csv = tmp_path / "z.csv"
    assert main(["solve", str(CONFIGS / "zero.toml"), "--csv", str(csv)]) == 0
    prov, header, rows = read_csv(csv)
    assert header == StepRecord.columns()
    assert rows.shape == (5, len(header))
    cols = dict(zip(header, rows.T))
    for k in ("residual", "norm_w", "norm_u", "norm_phi", "norm_theta", "slip_nodes", "max_traction"):
        assert np.all(cols[k] == 0.0)
    assert {"config_sha256", "mesh_sha256", "alpha_star", "trace_constant", "Z0"} <= set(prov)
    assert float(prov["Z0"]) == pytest.approx(float(prov["alpha_star"]) / float(prov["trace_constant"]) ** 2)


def test_solve_stick_config(tmp_path):
    csv = tmp_path / "s.csv"
    assert main(["solve", str(CONFIGS / "stick.toml"), "--csv", str(csv)]) == 0
    _, header, rows = read_csv(csv)
    cols = dict(zip(header, rows.T))
    assert np.all(cols["slip_nodes"] == 0) and np.all(cols["stick_nodes"] > 0)
    assert np.all(cols["norm_u"] > 0)


def test_solve_gate_abort(tmp_path, capsys):
    csv = tmp_path / "g.csv"
    assert main(["solve", str(CONFIGS / "gate_abort.toml"), "--csv", str(csv)]) == EXIT_SOLVER
    err = capsys.readouterr().err
    assert "Z0" in err and "0.99999" in err
    assert not csv.exists()


def test_solve_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[time]\nT = -1.0\n")
    assert main(["solve", str(bad)]) == EXIT_CONFIG
    assert main(["solve", str(tmp_path / "missing.toml")]) == EXIT_CONFIG


def test_solver_failure_keeps_partial_csv(tmp_path, capsys):
    cfg = tmp_path / "fail.toml"
    cfg.write_text("""
[mesh]
nx = 6
ny = 6
[friction]
family = "exponential"
r0 = 2.0
r_max = 0.1
b = 0.9
[time]
T = 1.0
N = 10
[solver]
max_outer = 2
[data]
f0 = { family = "ramp", rate = 40.0 }
""")
    csv = tmp_path / "fail.csv"
    assert main(["solve", str(cfg), "--csv", str(csv)]) == EXIT_SOLVER
    err = capsys.readouterr().err
    assert "step" in err and "partial CSV" in err
    _, header, rows = read_csv(csv)
    assert header == StepRecord.columns() and rows.shape[0] < 10


def test_vtk_snapshots(tmp_path):
    vtk = tmp_path / "vtk"
    assert main(["solve", str(CONFIGS / "slip_weakening.toml"), "--csv", str(tmp_path / "a.csv"),
                 "--vtk-dir", str(vtk)]) == 0
    files = sorted(p.name for p in vtk.iterdir())
    assert files == [f"step_{k:05d}.vtk" for k in (0, 5, 10, 15, 20)]
    text = (vtk / "step_00020.vtk").read_text()
    for name in ("u", "phi", "theta", "w"):
        assert f"SCALARS {name} double 1" in text
    assert "POINT_DATA 169" in text


def test_csv_byte_identical(tmp_path):
    cfg = tmp_path / "slip_weakening.toml"
    shutil.copy(CONFIGS / cfg.name, cfg)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["solve", str(cfg), "--csv", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_verify_invariants(capsys):
    assert main(["verify", "invariants"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_verify_oracles(capsys):
    assert main(["verify", "oracles"]) == 0
    out = capsys.readouterr().out
    assert "worst difference" in out and "PASS" in out


def test_verify_unknown_suite():
    with pytest.raises(SystemExit) as info:
        main(["verify", "everything"])
    assert info.value.code == 2


def test_verify_failure_exit_code(monkeypatch, capsys):
    import antiplane.cli as cli
    monkeypatch.setitem(cli._SUITE_RUNNERS, "lemma2", lambda args: False)
    assert main(["verify", "lemma2"]) == EXIT_VERIFY


def test_sigint_flushes_csv(tmp_path):
    cfg = tmp_path / "long.toml"
    cfg.write_text(CONFIGS.joinpath("slip_weakening.toml").read_text()
                   .replace("N = 20", "N = 100000").replace('vtk_dir = "slip_weakening_vtk"\n', ""))
    csv = tmp_path / "long.csv"
    env = dict(os.environ, PYTHONUNBUFFERED="1")
    proc = subprocess.Popen([sys.executable, "-m", "antiplane", "solve", str(cfg), "--csv", str(csv)],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, env=env)
    deadline = time.time() + 60
    while time.time() < deadline:
        if csv.exists() and csv.read_text().count("\n") > 14:
            break
        time.sleep(0.1)
    proc.send_signal(signal.SIGINT)
    _, err = proc.communicate(timeout=60)
    assert proc.returncode != 0
    assert b"interrupted" in err
    _, header, rows = read_csv(csv)
    assert rows.shape[0] >= 1 and np.all(np.diff(rows[:, 0]) == 1)
    assert csv.read_text().endswith("\n")
