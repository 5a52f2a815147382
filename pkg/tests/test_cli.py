import time

import numpy as np
import pytest

from biotfv import cli
from biotfv.mesh import build_grid, load_mesh


def _mesh(tmp_path, kind="A", n=4, perturb=0.0, seed=1):
    out = tmp_path / f"{kind}{n}.mesh"
    assert cli.main(["mesh", "--type", kind, "--n", str(n), "--perturb", str(perturb),
                     "--seed", str(seed), "--out", str(out)]) == cli.EXIT_OK
    return out


def test_parse_defaults():
    cfg = cli.parse_args(["convergence", "--grids", "A", "--levels", "3", "--out", "x"])
    assert cfg.command == "convergence"
    assert cfg.grids == ["A"] and cfg.levels == 3 and cfg.base == 4 and cfg.seed == 42
    assert 0.1 in cfg.tau_list and cfg.amplitude == 0.5
    assert cfg.threads >= 1


@pytest.mark.parametrize("argv", [
    ["solve", "--mesh", "m", "--out", "o", "--tau", "-1"],
    ["convergence", "--grids", "XYZ", "--out", "o"],
    ["convergence", "--levels", "2", "--out", "o"],
    ["mesh", "--type", "A", "--n", "4", "--perturb", "0.9", "--out", "o"],
    ["mesh", "--type", "A", "--n", "4", "--bogus", "--out", "o"],
    ["march", "--mesh", "m", "--out", "o", "--tau", "0"],
    ["--threads", "0", "mesh", "--type", "A", "--n", "2", "--out", "o"],
])
def test_invalid_arguments_exit_2(argv, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE


def test_invalid_grid_lists_choices(capsys):
    cli.main(["convergence", "--grids", "XYZ", "--out", "o"])
    assert "A, B, C" in capsys.readouterr().err


def test_mesh_round_trip(tmp_path):
    path = _mesh(tmp_path, "C", 3, 0.5, 7)
    m = load_mesh(path)
    ref = build_grid("C", 3, 0.5, 7)
    assert np.array_equal(m.vertices, ref.vertices)
    assert np.array_equal(m.face_cells, ref.face_cells)


@pytest.mark.parametrize("kind", ["A", "B", "C"])
def test_check_unperturbed_suite_grids(tmp_path, kind):
    path = _mesh(tmp_path, kind, 4)
    out = tmp_path / "chk"
    assert cli.main(["check", "--mesh", str(path), "--out", str(out)]) == cli.EXIT_OK
    rows = (out / "conditions.csv").read_text().splitlines()
    assert rows[0] == "vertex,theta_a,theta_c,theta_delta,theta1_lambda,theta2_lambda"
    assert rows[-1].startswith("min,")


def test_check_to_stdout(tmp_path, capsys):
    path = _mesh(tmp_path, "B", 3)
    assert cli.main(["check", "--mesh", str(path)]) == cli.EXIT_OK
    assert capsys.readouterr().out.startswith("vertex,")


def test_check_violation_exit_3(tmp_path):
    # the least-squares variant on a rough quadrilateral grid has indefinite local traction forms
    path = _mesh(tmp_path, "A", 6, 0.5, 1)
    assert cli.main(["check", "--mesh", str(path), "--out", str(tmp_path / "c")]) == cli.EXIT_CONDITIONS


def test_solve_outputs_are_deterministic(tmp_path):
    path = _mesh(tmp_path, "A", 4, 0.4, 3)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["solve", "--mesh", str(path), "--mms", "--vtk", "--out", str(out)]) == cli.EXIT_OK
        outs.append(out)
    for name in ("u.field", "p.field", "fluxes.csv", "tractions.csv", "balance.csv", "errors.csv", "solution.vtk"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_solve_with_files(tmp_path):
    path = _mesh(tmp_path, "B", 4, 0.3, 2)
    (tmp_path / "bc").write_text("biotfv-bc v1\nu top N 0 -0.5\np right N 0\n")
    (tmp_path / "mat").write_text("biotfv-mat v1\ntau 0.1\nuniform 2 1 1 0 1 0 1\n")
    out = tmp_path / "o"
    argv = ["solve", "--mesh", str(path), "--materials", str(tmp_path / "mat"), "--bc", str(tmp_path / "bc"),
            "--out", str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    assert (out / "balance.csv").exists()


def test_missing_mesh_file_exit_2(tmp_path):
    assert cli.main(["solve", "--mesh", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == cli.EXIT_USAGE


def test_singular_problem_exit_4(tmp_path):
    path = _mesh(tmp_path, "A", 6, 0.3, 1)
    # incompressible, no flow and displacement pinned everywhere: the constant pressure mode is
    # free and the midpoint-rule mass source is not orthogonal to it on a rough grid
    argv = ["solve", "--mesh", str(path), "--rho", "0", "--tau", "0", "--mms", "--out", str(tmp_path / "o")]
    assert cli.main(argv) == cli.EXIT_SOLVER


def test_march(tmp_path):
    path = _mesh(tmp_path, "A", 4)
    out = tmp_path / "m"
    assert cli.main(["march", "--mesh", str(path), "--tau", "0.01", "--rho", "0.01", "--steps", "4",
                     "--out", str(out)]) == cli.EXIT_OK
    rows = (out / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "step,norm_u,norm_p" and len(rows) == 6
    norms = [float(r.split(",")[2]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(norms, norms[1:]))


def test_convergence_smoke_run(tmp_path):
    out = tmp_path / "conv"
    t0 = time.perf_counter()
    code = cli.main(["--threads", "1", "convergence", "--grids", "A", "--levels", "3", "--rho-list", "1",
                     "--tau-list", "1", "--out", str(out)])
    assert code == cli.EXIT_OK
    assert time.perf_counter() - t0 < 10.0
    for name in ("table1.csv", "table2.csv", "table3.csv", "table4.csv", "raw.csv"):
        assert (out / name).exists()


def test_log_level_env(monkeypatch, tmp_path):
    monkeypatch.setenv("BIOTFV_LOG", "nonsense")
    assert cli.main(["mesh", "--type", "A", "--n", "2", "--out", str(tmp_path / "m")]) == cli.EXIT_OK
