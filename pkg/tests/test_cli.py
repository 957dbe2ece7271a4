import json

import numpy as np
import pytest
import scipy.sparse as sp

from hallfem import cli, scheme
from hallfem.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, build_parser, build_manifest, main
from hallfem.diagnostics import read_csv, validate_vtk
from hallfem.feec import complex_operator
from hallfem.sparse_la import SolverError


def test_orszag_tang_run_writes_outputs(tmp_path, capsys):
    rc = main(["run", "--experiment", "orszag-tang", "--n", "16", "--tau", "0.005", "--T", "0.05", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    rows = read_csv(tmp_path / "orszag-tang_diag.csv")
    assert len(rows) == 11
    e = [r.energy for r in rows]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(e, e[1:]))
    assert validate_vtk(tmp_path / "orszag-tang_step10.vtk")["cells"] == 512
    meta = json.loads((tmp_path / "orszag-tang_meta.json").read_text())
    assert meta["energy_monotone"] and meta["div_preserved"]
    assert meta["config"]["nu"] == 0.002 and meta["config"]["alpha1"] == 1e-8
    assert "10 steps" in capsys.readouterr().out


@pytest.mark.slow
@pytest.mark.parametrize(
    "experiment, T, params",
    [
        ("abc3d", "0.1", dict(nu=0.005, sigma=0.005, eta=0.1, alpha1=1e-5, alpha2=1e-5)),
        ("harris", "0.25", dict(nu=0.004, sigma=0.008, eta=0.15, alpha1=1e-5, alpha2=1e-5)),
    ],
)
def test_three_dimensional_runs_complete(tmp_path, experiment, T, params):
    rc = main(["run", "--experiment", experiment, "--n", "8", "--tau", "0.01", "--T", T, "--out", str(tmp_path)])
    assert rc == EXIT_OK
    meta = json.loads((tmp_path / f"{experiment}_meta.json").read_text())
    assert meta["steps"] == round(float(T) / 0.01)
    assert {k: meta["config"][k] for k in params} == params


def test_runs_are_reproducible(tmp_path):
    args = ["run", "--experiment", "orszag-tang", "--n", "4", "--tau", "0.01", "--T", "0.03"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "orszag-tang_diag.csv").read_bytes()
    assert a == (tmp_path / "b" / "orszag-tang_diag.csv").read_bytes()


def test_vtk_every(tmp_path):
    rc = main(["run", "--n", "2", "--tau", "0.01", "--T", "0.04", "--vtk-every", "2", "--out", str(tmp_path), "--name", "v"])
    assert rc == EXIT_OK
    assert sorted(p.name for p in tmp_path.glob("*.vtk")) == ["v_step0.vtk", "v_step2.vtk", "v_step4.vtk"]


def test_config_file_with_flag_override(tmp_path):
    conf = tmp_path / "ot.cfg"
    conf.write_text("# temporal study setup\nexperiment = orszag-tang\nn = 4\ntau = 1/40  # fraction\nT = 0.05\neta = 0.2\n")
    args = build_parser().parse_args(["run", "--config", str(conf), "--eta", "0.3"])
    m = build_manifest(args)
    assert m.cfg.tau == 0.025 and m.cfg.n == 4 and m.cfg.dim == 2
    assert m.cfg.eta == 0.3
    assert m.cfg.nu == 0.002


def test_custom_experiment_from_config(tmp_path):
    conf = tmp_path / "c.cfg"
    conf.write_text(
        "experiment = custom\ndim = 2\nnu = 0.01\nsigma = 0.01\neta = 0\nalpha1 = 0\nalpha2 = 1e-5\n"
        "n = 4\ntau = 0.01\nT = 0.02\nA0_z = sin(pi*x)*sin(pi*y)\n"
    )
    rc = main(["run", "--config", str(conf), "--out", str(tmp_path), "--name", "c"])
    assert rc == EXIT_OK
    rows = read_csv(tmp_path / "c_diag.csv")
    assert rows[0].kinetic == 0.0 and rows[0].magnetic > 0.0


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--n", "0"],
        ["run", "--nu", "0"],
        ["run", "--tau", "abc"],
        ["run", "--experiment", "nonexistent"],
        ["run", "--tol", "2"],
        ["converge-space", "--meshes", "8,4"],
        ["converge-space", "--meshes", "4,8", "--ref-n", "12"],
        ["converge-time", "--n", "2", "--T", "0.05", "--taus", "0.03"],
        ["frobnicate"],
    ],
)
def test_configuration_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "frobnicate" else argv) == EXIT_CONFIG


def test_unknown_config_key(tmp_path):
    conf = tmp_path / "bad.cfg"
    conf.write_text("viscosity = 0.1\n")
    assert main(["run", "--config", str(conf), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_solver_failure_exits_3(tmp_path, monkeypatch, capsys):
    real = scheme.solve
    calls = []

    def broken(*args, **kwargs):
        # the first solve is the Stokes projection of the initial data
        calls.append(1)
        if len(calls) > 1:
            raise SolverError("factorisation failed")
        return real(*args, **kwargs)

    monkeypatch.setattr(scheme, "solve", broken)
    rc = main(["run", "--n", "2", "--tau", "0.01", "--T", "0.02", "--out", str(tmp_path)])
    assert rc == EXIT_SOLVER
    assert "step 1" in capsys.readouterr().err


def test_check_passes(capsys):
    assert main(["check"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 5 and all(line.startswith("[PASS]") for line in out)
    assert any("10" in line for line in out if "energy" in line)


def test_check_detects_sign_flip(capsys):
    def flipped(source, target):
        M = complex_operator(source, target).tolil()
        rows, cols = M.nonzero()
        M[rows[0], cols[0]] = -M[rows[0], cols[0]]
        return sp.csr_matrix(M)

    assert cli.cmd_check(operator=flipped) == EXIT_CHECK
    out = capsys.readouterr().out
    assert "[FAIL] exact sequence" in out


def test_single_mesh_study_has_no_rates(tmp_path, capsys):
    rc = main(["converge-space", "--n", "2", "--tau", "0.01", "--T", "0.02", "--meshes", "2", "--ref-n", "4", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    lines = (tmp_path / "orszag-tang_rates_space.csv").read_text().splitlines()
    assert lines[0].startswith("# reference:")
    assert len(lines) == 3
    assert lines[2].endswith(",,,,")
    assert "rate E0u: \n" in capsys.readouterr().out


def test_temporal_study_rates(tmp_path):
    rc = main(["converge-time", "--n", "2", "--T", "0.04", "--taus", "0.02,0.01", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    lines = (tmp_path / "orszag-tang_rates_time.csv").read_text().splitlines()
    assert "tau=0.002" in lines[0]
    rate = lines[3].split(",")[-4]
    assert np.isfinite(float(rate))
