"""End-to-end acceptance checks, one per criterion.

Each test records a one-line verdict in ``RESULTS``; the conftest hook
prints them after the run (also printed directly when run with ``-s`` or
as ``python3 tests/test_acceptance.py``).
"""

import time

import numpy as np
import pytest

from biotfv import cli
from biotfv.assembly import balanced_initial_state, discretize, solve_static, time_march
from biotfv.conditions import check_conditions
from biotfv.dfield import norm_T0
from biotfv.localop import build_stencils, condense_all
from biotfv.materials import MaterialField
from biotfv.mesh import BoundarySpec, build_cartesian, build_grid, compute_geometry, save_mesh
from biotfv.mms import exact_p, level_mesh, manufactured_case, run_convergence, run_sweep, variant_for
from biotfv.postproc import reconstruct

RESULTS: dict[int, str] = {}

PATCH_TOL = 1e-9
BALANCE_TOL = 1e-10
TPFA_TOL = 1e-12
RATE_UP = (1.8, 2.2)
RATE_SIGMA_A = 1.1
RATE_SIGMA_A_SMALL_TAU = 0.9
SIGMA_BOUND = 0.25
CHECKER_TOL = 1e-12
RESIDUAL_TOL = 1e-10
SYM_TOL = 1e-12
FIXED_POINT_TOL = 1e-9
SEED = 42
ROBUST = (1.0, 1e-2, 1e-6)


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)


def _isotropic(mesh):
    return MaterialField.isotropic(mesh.n_cells)


# -------------------------------------------------------------------- 1


def test_criterion_01_patch_test():
    G = np.array([[1.0, 2.0], [3.0, -1.0]])
    sigma = G + G.T + np.trace(G) * np.eye(2)
    t0 = time.perf_counter()
    eu = et = ep = 0.0
    for grid in "ABC":
        for lev, n in enumerate((4, 8, 16), start=1):
            mesh = level_mesh(grid, n, 0.5, SEED, lev)
            base = BoundarySpec.all_dirichlet(mesh)
            bc = BoundarySpec(base.u_kind, base.p_kind, g_u_dirichlet=lambda x: np.asarray(x) @ G.T)
            s, _ = discretize(mesh, _isotropic(mesh), bc, variant_for(grid))
            sol = solve_static(s, s.rhs())
            rep = reconstruct(s, sol)
            eu = max(eu, np.abs(sol.u - s.geometry.cell_center @ G.T).max())
            et = max(et, np.abs(rep.T - rep.normal @ sigma.T).max())
            ep = max(ep, np.abs(sol.p).max())
    dt = time.perf_counter() - t0
    ok = eu <= PATCH_TOL and et <= PATCH_TOL and ep <= PATCH_TOL and dt < 5.0
    record(1, ok, f"max |u err| {eu:.1e}, max |T err| {et:.1e}, max |p| {ep:.1e} (tol {PATCH_TOL:g}), {dt:.1f}s (< 5s)")
    assert ok


# -------------------------------------------------------------------- 2


def test_criterion_02_conservation():
    worst_m = worst_u = 0.0
    structural = True
    for grid in "ABC":
        mesh = level_mesh(grid, 8, 0.5, SEED, 2)
        s, _ = discretize(mesh, _isotropic(mesh), BoundarySpec.all_dirichlet(mesh), variant_for(grid))
        st = s.stencils
        structural &= st.flux.shape[0] == mesh.n_faces and st.traction_u.shape[0] == 2 * mesh.n_faces
        for rho in ROBUST:
            for tau in ROBUST:
                case = manufactured_case(rho, tau)
                sol = solve_static(s, s.rhs(case.f_u, case.f_p, tau=tau), rho=rho, tau=tau)
                rep = reconstruct(s, sol, f_u=case.f_u, f_p=case.f_p)
                worst_m = max(worst_m, rep.max_relative_mass)
                worst_u = max(worst_u, rep.max_relative_momentum)
    ok = worst_m <= BALANCE_TOL and worst_u <= BALANCE_TOL and structural
    record(2, ok, f"max relative mass {worst_m:.1e}, momentum {worst_u:.1e} (tol {BALANCE_TOL:g}); "
                  f"one stencil per face: {structural}")
    assert ok


# -------------------------------------------------------------------- 3


def test_criterion_03_tpfa():
    err = 0.0
    for n in (2, 4, 8, 16):
        mesh = build_cartesian(n)
        geo = compute_geometry(mesh)
        mat = _isotropic(mesh)
        conds, bd = condense_all(geo, mat, BoundarySpec.all_dirichlet(mesh), "mpfa-o", mechanics=False)
        F = build_stencils(conds, geo, mat, bd).flux.tocsr()
        for f in np.flatnonzero(mesh.face_cells[:, 1] >= 0):
            K, L = mesh.face_cells[f]
            t = geo.face_length[f] / np.linalg.norm(geo.cell_center[K] - geo.cell_center[L])
            row = F.getrow(f).toarray().ravel()
            ref = np.zeros(mesh.n_cells)
            ref[K], ref[L] = t, -t
            err = max(err, np.abs(row - ref).max())
    ok = err <= TPFA_TOL
    record(3, ok, f"max stencil deviation from two-point coefficients {err:.1e} (tol {TPFA_TOL:g})")
    assert ok


# -------------------------------------------------------------- 4 to 6


@pytest.fixture(scope="module")
def sweeps():
    t0 = time.perf_counter()
    a11 = run_convergence("A", 6, 4, 1.0, 1.0, 0.5, SEED)
    ta = time.perf_counter() - t0
    t0 = time.perf_counter()
    b11 = run_convergence("B", 6, 4, 1.0, 1.0, 0.5, SEED)
    tb = time.perf_counter() - t0
    pairs = sorted({(r, t) for r in ROBUST for t in ROBUST} | {(1.0, 1e-6)})
    pairs.remove((1.0, 1.0))
    rest = run_sweep(["A"], pairs, 6, 4, 0.5, SEED)
    rest[("A", 1.0, 1.0)] = a11
    return rest, b11, ta, tb


@pytest.mark.slow
def test_criterion_04_primary_rate(sweeps):
    res, b11, ta, tb = sweeps
    ra, rb = res[("A", 1.0, 1.0)].rate_up, b11.rate_up
    lo, hi = RATE_UP
    ok = lo <= ra <= hi and lo <= rb <= hi and ta <= 120 and tb <= 120
    record(4, ok, f"eps_up rate A {ra:.3f}, B {rb:.3f} (range [{lo}, {hi}]); runtime A {ta:.0f}s, B {tb:.0f}s (<= 120s)")
    assert ok


@pytest.mark.slow
def test_criterion_05_stable_rate(sweeps):
    res = sweeps[0]
    r1 = res[("A", 1.0, 1.0)].rate_sigma
    r2 = res[("A", 1.0, 1e-6)].rate_sigma
    ok = r1 >= RATE_SIGMA_A and r2 >= RATE_SIGMA_A_SMALL_TAU
    record(5, ok, f"eps_sigma rate A rho=tau=1: {r1:.3f} (>= {RATE_SIGMA_A}); "
                  f"rho=1, tau=1e-6: {r2:.3f} (>= {RATE_SIGMA_A_SMALL_TAU})")
    assert ok


@pytest.mark.slow
def test_criterion_06_robustness(sweeps):
    res = sweeps[0]
    sig, rate, bad = 0.0, np.inf, []
    for rho in ROBUST:
        for tau in ROBUST:
            r = res[("A", rho, tau)]
            sig, rate = max(sig, r.final.eps_sigma), min(rate, r.rate_up)
            if r.final.eps_sigma > SIGMA_BOUND or r.rate_up < RATE_UP[0]:
                bad.append((rho, tau))
    ok = not bad
    record(6, ok, f"max finest eps_sigma {sig:.3f} (<= {SIGMA_BOUND}), min eps_up rate {rate:.3f} "
                  f"(>= {RATE_UP[0]}) over 9 (rho, tau) pairs; violations {bad}")
    assert ok


# -------------------------------------------------------------------- 7


def test_criterion_07_checkerboard():
    n = 8
    mesh = build_cartesian(n)
    bc = BoundarySpec.from_sides(mesh, u={"top": "N"}, p={})
    s, _ = discretize(mesh, _isotropic(mesh), bc, "general")
    geo = s.geometry
    c = (-1.0) ** np.floor(geo.cell_center * n).astype(int).sum(1)
    interior = np.all((geo.cell_center > 1 / n) & (geo.cell_center < 1 - 1 / n), axis=1)
    pairing = np.abs((s.B1.T @ c).reshape(-1, 2)[interior]).max()
    cdc = float(c @ (s.Delta @ c))
    sol = solve_static(s, s.rhs(lambda x: np.ones((len(x), 2)), lambda x: x[:, 0], tau=0.0), rho=0.0, tau=0.0)
    ok = pairing <= CHECKER_TOL and cdc < 0 and sol.residual <= RESIDUAL_TOL
    record(7, ok, f"(a) checkerboard pairing with interior displacements {pairing:.1e} (tol {CHECKER_TOL:g}); "
                  f"(b) p'Dp = {cdc:.3f} < 0; (c) rho=tau=0 residual {sol.residual:.1e}")
    assert ok


# -------------------------------------------------------------------- 8


def test_criterion_08_symmetric_variant():
    mesh = level_mesh("B", 8, 0.5, SEED, 2)
    s, _ = discretize(mesh, _isotropic(mesh), BoundarySpec.all_dirichlet(mesh), "simplex-symmetric")
    ra = abs(s.A - s.A.T).max() / abs(s.A).max()
    rc = abs(s.C - s.C.T).max() / abs(s.C).max()
    rl = abs(s.B2T - s.B1.T).max() / abs(s.B1).max()
    ok = ra <= SYM_TOL and rc <= SYM_TOL and rl <= SYM_TOL
    record(8, ok, f"|A-A'|/|A| {ra:.1e}, |C-C'|/|C| {rc:.1e}, |B2'-B1'|/|B1| {rl:.1e} (tol {SYM_TOL:g})")
    assert ok


# -------------------------------------------------------------------- 9


def test_criterion_09_condition_checker(tmp_path):
    worst = {}
    codes = []
    for grid in "ABC":
        for seed in (1, 2, 3):
            mesh = build_grid(grid, 6, 0.5, seed)
            bc = BoundarySpec.all_dirichlet(mesh)
            mat = _isotropic(mesh)
            s, conds = discretize(mesh, mat, bc, variant_for(grid))
            rep = check_conditions(conds, s.geometry, mat, bc)
            out = tmp_path / f"{grid}{seed}"
            out.mkdir()
            rep.write_csv(out / "conditions.csv")
            w = worst.setdefault(grid, [np.inf, np.inf, np.inf])
            w[:] = [min(w[0], rep.min_theta_a), min(w[1], rep.min_theta_c), min(w[2], rep.min_theta_delta)]
            path = tmp_path / f"{grid}{seed}.mesh"
            save_mesh(mesh, path)
            codes.append(cli.main(["check", "--mesh", str(path), "--out", str(tmp_path / f"cli{grid}{seed}")]))
    ok = all(min(v) > 0 for v in worst.values()) and all(c == 0 for c in codes)
    detail = "; ".join(f"{g}: min theta_a {v[0]:.3g}, theta_c {v[1]:.3g}, theta_delta {v[2]:.3g}"
                       for g, v in worst.items())
    record(9, ok, f"{detail}; exit codes {sorted(set(codes))}")
    assert ok


# ------------------------------------------------------------------- 10


def test_criterion_10_time_march():
    rho = tau = 1e-2
    mesh = level_mesh("A", 16, 0.5, SEED, 3)
    s, _ = discretize(mesh, _isotropic(mesh), BoundarySpec.all_dirichlet(mesh), "general")
    geo = s.geometry
    x0 = balanced_initial_state(s, exact_p(geo.cell_center))
    norms = [norm_T0(s.split(x)[1], geo) for x in time_march(s, x0, 20, rho, tau)]
    monotone = bool(np.all(np.diff(norms) <= 1e-14 * norms[0]))
    case = manufactured_case(rho, tau)
    xs = solve_static(s, s.rhs(case.f_u, case.f_p, tau=tau), rho=rho, tau=tau).x
    b = (s.matrix(rho, tau) - s.matrix(rho, 0.0)) @ xs
    drift = max(np.abs(x - xs).max() for x in time_march(s, xs, 5, rho, tau, forcing=b)) / np.abs(xs).max()
    ok = monotone and drift <= FIXED_POINT_TOL
    record(10, ok, f"pressure norm non-increasing over 20 steps: {monotone} ({norms[0]:.3g} -> {norms[-1]:.3g}); "
                   f"fixed-point drift {drift:.1e} over 5 steps (tol {FIXED_POINT_TOL:g})")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
