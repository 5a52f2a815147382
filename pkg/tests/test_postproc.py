import csv
import dataclasses

import numpy as np
import pytest

from biotfv.assembly import Solution, discretize, solve_static
from biotfv.materials import MaterialField
from biotfv.mesh import BoundarySpec, build_grid
from biotfv.mms import manufactured_case
from biotfv.postproc import (
    ErrorReport,
    error_metrics,
    reconstruct,
    write_balance,
    write_errors,
    write_fluxes,
    write_tractions,
    write_vtk,
)

from conftest import make_problem


@pytest.fixture(scope="module")
def mms_state():
    mesh, mat, bc = make_problem("A", 8, 0.5, 5)
    s, _ = discretize(mesh, mat, bc)
    case = manufactured_case(1.0, 1.0)
    sol = solve_static(s, s.rhs(case.f_u, case.f_p, tau=1.0), rho=1.0, tau=1.0)
    rep = reconstruct(s, sol, f_u=case.f_u, f_p=case.f_p)
    return s, case, sol, rep


def _metrics(s, case, sol, rep):
    return error_metrics(sol, rep, case.u, case.p, case.stress, case.flux, s.geometry, 1.0, 1.0)


def test_uniform_pressure_has_no_interior_flux():
    mesh, mat, bc = make_problem("C", 3, 0.5, 2)
    s, _ = discretize(mesh, mat, bc)
    n = mesh.n_cells
    s.g_p[:] = 1.0
    sol = Solution(np.zeros((n, 2)), np.ones(n), None, 0.0, 1.0, 1.0)
    rep = reconstruct(s, sol)
    assert np.abs(rep.q[mesh.face_cells[:, 1] >= 0]).max() <= 1e-12


def test_patch_tractions_are_constant_stress(grid_kind):
    G = np.array([[1.0, 2.0], [3.0, -1.0]])
    mesh = build_grid(grid_kind, 4, 0.5, 31)
    mat = MaterialField.isotropic(mesh.n_cells)
    base = BoundarySpec.all_dirichlet(mesh)
    s, _ = discretize(mesh, mat, BoundarySpec(base.u_kind, base.p_kind, g_u_dirichlet=lambda x: np.asarray(x) @ G.T))
    rep = reconstruct(s, solve_static(s, s.rhs()))
    sigma = G + G.T + np.trace(G) * np.eye(2)
    assert np.abs(rep.T - rep.normal @ sigma.T).max() <= 1e-10


def test_exact_samples_give_zero_errors(mms_state):
    s, case, sol, rep = mms_state
    geo = s.geometry
    exact = Solution(case.u(geo.cell_center), case.p(geo.cell_center), sol.x, 0.0, 1.0, 1.0)
    xf = geo.face_center
    T = np.einsum("fij,fj->fi", case.stress(xf), rep.normal)
    q = np.einsum("fi,fi->f", case.flux(xf), rep.normal)
    err = _metrics(s, case, exact, dataclasses.replace(rep, T=T, q=q))
    for name in ("eps_u", "eps_p", "eps_p_quot", "eps_pi", "eps_q", "eps_sigma", "eps_up"):
        assert getattr(err, name) == 0.0


def test_pressure_shift_only_moves_eps_p(mms_state):
    s, case, sol, rep = mms_state
    base = _metrics(s, case, sol, rep)
    shifted = _metrics(s, case, dataclasses.replace(sol, p=sol.p + 0.3), rep)
    assert shifted.eps_p_quot == pytest.approx(base.eps_p_quot, rel=1e-12)
    assert shifted.eps_p > base.eps_p


def test_error_recombination(mms_state):
    s, case, sol, rep = mms_state
    e = _metrics(s, case, sol, rep)
    assert e.eps_sigma == pytest.approx(e.eps_u + e.eps_pi + 2 * e.eps_p + e.eps_q + e.eps_p_quot, rel=1e-14)
    assert e.eps_up == pytest.approx(e.eps_u + e.eps_p, rel=1e-14)
    assert e.eps_pi == pytest.approx(np.sqrt(e.eps_pi_sq)) and e.eps_q == pytest.approx(np.sqrt(e.eps_q_sq))


def test_flux_error_uses_squared_face_weights(mms_state):
    s, case, sol, rep = mms_state
    geo = s.geometry
    qn = np.einsum("fi,fi->f", case.flux(geo.face_center), rep.normal)
    w = geo.face_length**2
    ref = np.sum(w * (rep.q - qn) ** 2) / np.sum(w * qn**2)
    assert _metrics(s, case, sol, rep).eps_q_sq == pytest.approx(ref, rel=1e-12)


def test_orientation_flip_leaves_metrics_unchanged(mms_state):
    s, case, sol, rep = mms_state
    flipped = dataclasses.replace(rep, normal=-rep.normal, q=-rep.q, T=-rep.T)
    a, b = _metrics(s, case, sol, rep), _metrics(s, case, sol, flipped)
    assert a == b


def test_writers(tmp_path, mms_state):
    s, case, sol, rep = mms_state
    write_fluxes(tmp_path / "f.csv", rep)
    write_tractions(tmp_path / "t.csv", rep)
    write_balance(tmp_path / "b.csv", rep)
    write_errors(tmp_path / "e.csv", [_metrics(s, case, sol, rep)])
    write_vtk(tmp_path / "s.vtk", s.geometry.mesh, sol.u, sol.p)
    n_faces, n_cells = s.geometry.mesh.n_faces, s.geometry.mesh.n_cells
    with open(tmp_path / "f.csv") as fh:
        assert len(list(csv.reader(fh))) == n_faces + 1
    with open(tmp_path / "b.csv") as fh:
        assert len(list(csv.reader(fh))) == n_cells + 1
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0].startswith("#") and "square roots" in lines[0]
    assert lines[1].split(",") == ErrorReport.columns()
    assert "np.float64" not in lines[2]
    vtk = (tmp_path / "s.vtk").read_text()
    assert f"CELL_DATA {n_cells}" in vtk and "VECTORS u double" in vtk
