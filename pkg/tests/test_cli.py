import subprocess
import sys

import pytest

from wgcdr.cli import main
from wgcdr.mesh import MeshFamily, generate_mesh, write_mesh

from conftest import DATA


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "study.cfg"
    path.write_text("family = square\nlevels = 1, 2\nk = 1\nrho = 1\ntimings = false\n")
    return str(path)


def test_study(config, tmp_path, capsys):
    assert main(["study", "--config", config, "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "convergence.csv").exists()
    assert "| G2" in capsys.readouterr().out


def test_solve_with_overrides(config, capsys):
    assert main(["solve", "--config", config, "--set", "k=2", "--r-override", "4"]) == 0
    out = capsys.readouterr().out
    assert "k=2" in out and "l2 0." in out


def test_sample(config, tmp_path):
    assert main(["sample", "--config", config, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "solution.dat").read_text().startswith("# interior")


def test_mesh_generate_and_validate(config, tmp_path, capsys):
    assert main(["mesh", "--config", config, "--out", str(tmp_path)]) == 0
    assert main(["mesh", str(tmp_path / "square_G2.mesh")]) == 0
    assert main(["mesh", str(DATA / "mixed5.mesh")]) == 0
    assert "valid" in capsys.readouterr().out


def test_mesh_validation_failure(tmp_path, capsys):
    bad = tmp_path / "bad.mesh"
    bad.write_text("wgmesh 1\nnv 3\n0 0\n1 0\n0 1\nne 1\n3 0 2 1\n")
    assert main(["mesh", str(bad)]) == 2
    assert "negative signed area, element 0" in capsys.readouterr().out
    broken = tmp_path / "broken.mesh"
    broken.write_text("wgmesh 1\nnv 1\n0 0\nne 1\n3 0 1 2\n")
    assert main(["mesh", str(broken)]) == 2
    assert "line 5" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("levels = 3, 1\n")
    assert main(["study", "--config", str(path)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert "error" in capsys.readouterr().err


def test_numerical_failure_exit_code(config, monkeypatch, capsys):
    import wgcdr.experiments as ex
    from wgcdr.wg_system import SolverError

    def broken(*args, **kwargs):
        raise SolverError("zero pivot at position 3")

    monkeypatch.setattr(ex, "solve_case", broken)
    assert main(["solve", "--config", config]) == 1
    assert "zero pivot" in capsys.readouterr().err
    # a study records the failed rows and reports them through the exit code
    assert main(["study", "--config", config, "--out", str(config + "_out")]) == 1


def test_check(capsys):
    assert main(["check", "--seed", "5", "--level", "1"]) == 0
    out = capsys.readouterr().out
    assert "PASS coercivity" in out and "FAIL" not in out


def test_console_entry(tmp_path):
    write_mesh(generate_mesh(MeshFamily("triangular", 1)), tmp_path / "t.mesh")
    proc = subprocess.run([sys.executable, "-m", "wgcdr.cli", "mesh", str(tmp_path / "t.mesh")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "8 elements" in proc.stdout
