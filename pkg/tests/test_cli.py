import json
import textwrap

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from hdgstokes import assembly, cli, condense, mesh, spaces


def _ini(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


SMALL = """
    [mesh]
    nx = 2
    ny = 2

    [solver]
    tol = 1e-8
    maxiter = 400
"""


# -- configuration ----------------------------------------------------

def test_config_defaults():
    cfg = cli.RunConfig()
    assert cfg.shape == "triangle"
    assert (cfg.nx, cfg.ny) == (8, 8)
    assert cfg.degree == 2 and cfg.alpha == 24.0
    assert cfg.pc == "PM" and cfg.method == "minres"
    assert cfg.domain == (-1.0, -1.0, 1.0, 1.0)
    assert cfg.rbar == "exact"


def test_config_parses_ini(tmp_path):
    path = _ini(tmp_path, """
        [mesh]
        shape = triangle
        nx = 3
        ny = 4
        jitter = 0.1
        seed = 5
        domain = 0, 0, 1, 1

        [discretization]
        degree = 1
        alpha = 12.5

        [problem]
        kind = zero

        [solver]
        method = gmres
        tol = 1e-6
        restart = 30

        [preconditioner]
        kind = PC-SGS
        rbar = multigrid
        cycles = 2

        [verify]
        nx = 2
        levels = 2
    """)
    cfg = cli.RunConfig.from_file(path)
    assert (cfg.nx, cfg.ny, cfg.jitter, cfg.seed) == (3, 4, 0.1, 5)
    assert cfg.domain == (0.0, 0.0, 1.0, 1.0)
    assert (cfg.degree, cfg.alpha) == (1, 12.5)
    assert cfg.problem == "zero"
    assert (cfg.method, cfg.tol, cfg.restart) == ("gmres", 1e-6, 30)
    assert (cfg.pc, cfg.rbar, cfg.cycles) == ("PC-SGS", "multigrid", 2)
    assert (cfg.verify_nx, cfg.verify_levels) == (2, 2)


@pytest.mark.parametrize("kw", [
    {"degree": 4}, {"degree": 0}, {"pc": "ILU"}, {"shape": "hexagon"},
    {"method": "cg"}, {"rbar": "ilu"}, {"problem": "channel"},
    {"nx": 0}, {"maxiter": 0},
])
def test_config_rejects_bad_values(kw):
    with pytest.raises(cli.ConfigError):
        cli.RunConfig(**kw)


def test_config_rejects_unknown_option_and_missing_file(tmp_path):
    path = _ini(tmp_path, "[solver]\nweird = 3\n")
    with pytest.raises(cli.ConfigError):
        cli.RunConfig.from_file(path)
    with pytest.raises(cli.ConfigError):
        cli.RunConfig.from_file(str(tmp_path / "absent.ini"))
    path = _ini(tmp_path, "[mesh]\ndomain = 0 0 1\n", name="dom.ini")
    with pytest.raises(cli.ConfigError):
        cli.RunConfig.from_file(path)


# -- matrix digest ----------------------------------------------------

def test_csr_hash_normalizes_and_discriminates():
    A = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 2.0]]))
    dup = sp.coo_matrix(([0.5, 2.0, 0.5], ([0, 1, 0], [0, 1, 0])),
                        shape=(2, 2))
    assert cli.csr_hash(A) == cli.csr_hash(dup)
    B = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 2.0 + 1e-12]]))
    assert cli.csr_hash(A) != cli.csr_hash(B)
    C = sp.csr_matrix(np.array([[1.0, 1.0], [0.0, 2.0]]))
    assert cli.csr_hash(A) != cli.csr_hash(C)


# -- subcommands ------------------------------------------------------

def test_solve_writes_report_and_solution(tmp_path):
    cfg = cli.RunConfig(nx=2, ny=2)
    out = tmp_path / "solve"
    rc = cli.run_solve(cfg, str(out), save_solution=True)
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["solver"]["converged"] is True
    assert report["solver"]["preconditioner"] == "PM"
    assert report["mesh"]["cells"] == 8
    assert report["field_checks"]["max_divergence"] < 1e-4
    npz = np.load(out / "solution.npz")
    assert set(npz.files) == {"u", "ubar", "p", "pbar"}
    assert (out / "mesh.txt").exists()


def test_solve_reports_nonconvergence(tmp_path):
    cfg = cli.RunConfig(nx=2, ny=2, tol=1e-14, maxiter=2)
    rc = cli.run_solve(cfg, str(tmp_path / "bad"))
    assert rc == 1


def test_study_is_deterministic(tmp_path):
    cfg = cli.RunConfig(nx=2, ny=2, levels=1)
    texts = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.run_study(cfg, str(out)) == 0
        texts.append((out / "study.csv").read_text())
    assert texts[0] == texts[1]
    header = texts[0].splitlines()[0].split(",")
    assert header == ["level", "cells", "dofs", "PM", "PC", "PM-SGS",
                      "PC-SGS", "matrix_hash"]
    row = json.loads((tmp_path / "a" / "study.json").read_text())["rows"][0]
    assert all(row[k] > 0 for k in ("PM", "PC", "PM-SGS", "PC-SGS"))


def test_verify_passes_on_small_ladder(tmp_path, capsys):
    cfg = cli.RunConfig(nx=2, ny=2, verify_nx=2, verify_levels=2)
    out = tmp_path / "verify"
    rc = cli.run_verify(cfg, str(out))
    assert rc == 0
    report = json.loads((out / "verify.json").read_text())
    assert report["passed"] is True
    names = [c["name"] for c in report["checks"]]
    assert "schur_identity_2cell" in names
    assert "element_block_spectrum_drift" in names
    assert "coercivity_failure_detected" in names
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(names)
    assert all(line.endswith("pass") for line in lines)


def test_export_round_trips_matrices(tmp_path):
    cfg = cli.RunConfig(nx=1, ny=1)
    out = tmp_path / "export"
    assert cli.run_export(cfg, str(out)) == 0

    m = mesh.generate(1, 1)
    sp_ = spaces.build_spaces(m, 2)
    bs = assembly.build_block_system(sp_, spaces.lid_driven_cavity())
    cs = condense.condense(bs)
    pairs = {"A": bs.velocity_matrix(), "B": bs.divergence_matrix(),
             "M": bs.pressure_mass(), "saddle": bs.saddle_matrix(),
             "condensed": cs.K}
    for name, ref in pairs.items():
        got = scipy.io.mmread(str(out / (name + ".mtx")))
        assert np.abs((got - ref.tocoo()).toarray()).max() == 0.0
    rhs = scipy.io.mmread(str(out / "rhs_condensed.mtx"))
    assert np.array_equal(np.asarray(rhs).ravel(), cs.rhs)
    sizes = json.loads((out / "sizes.json").read_text())
    assert sizes["condensed"] == [cs.size, cs.size]


# -- entry point ------------------------------------------------------

def test_main_accepts_config_before_or_after_subcommand(tmp_path):
    path = _ini(tmp_path, SMALL)
    assert cli.main(["solve", "--config", path,
                     "--out", str(tmp_path / "o1")]) == 0
    assert cli.main(["--config", path, "solve",
                     "--out", str(tmp_path / "o2")]) == 0


def test_main_exit_codes(tmp_path, capsys):
    bad = _ini(tmp_path, "[discretization]\ndegree = 7\n", name="bad.ini")
    rc = cli.main(["solve", "--config", bad, "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "configuration error" in capsys.readouterr().err

    slow = _ini(tmp_path, """
        [mesh]
        nx = 2
        ny = 2

        [solver]
        maxiter = 2
        tol = 1e-14
    """, name="slow.ini")
    rc = cli.main(["study", "--config", slow, "--out", str(tmp_path / "y")])
    assert rc == 1

    with pytest.raises(SystemExit):
        cli.main([])
