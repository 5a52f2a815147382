import math

import numpy as np
import pytest

from biotfv import mms


def test_point_value():
    assert np.allclose(mms.exact_u(np.array([0.5, 0.25])), [0.25, 0.0], atol=1e-15)


def test_fields_vanish_on_boundary():
    t = np.linspace(0, 1, 17)
    z, o = np.zeros_like(t), np.ones_like(t)
    for pts in (np.c_[t, z], np.c_[t, o], np.c_[z, t], np.c_[o, t]):
        assert np.abs(mms.exact_p(pts)).max() <= 1e-15
        assert np.abs(mms.exact_u(pts)).max() <= 1e-15


def _fd_div(fn, x, h=1e-5):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    return (fn(x + ex)[..., 0] - fn(x - ex)[..., 0] + fn(x + ey)[..., 1] - fn(x - ey)[..., 1]) / (2 * h)


def test_sources_match_finite_differences():
    x = np.random.default_rng(7).uniform(0.05, 0.95, (100, 2))
    h = 1e-5
    rho, tau = 0.3, 0.7
    case = mms.manufactured_case(rho, tau)
    div_u = _fd_div(case.u, x)
    div_q = _fd_div(case.flux, x)
    assert np.abs(case.f_p(x) - (div_u + rho * case.p(x) + tau * div_q)).max() <= 1e-6
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    S = case.stress
    div_s = ((S(x + ex)[:, :, 0] - S(x - ex)[:, :, 0]) + (S(x + ey)[:, :, 1] - S(x - ey)[:, :, 1])) / (2 * h)
    assert np.abs(case.f_u(x) - div_s).max() <= 1e-5
    # gradients too
    G = case.grad_u(x)
    fd = np.stack([(case.u(x + ex) - case.u(x - ex)), (case.u(x + ey) - case.u(x - ey))], -1) / (2 * h)
    assert np.abs(G - fd).max() <= 1e-6


def test_sources_match_symbolic_derivation():
    sp = pytest.importorskip("sympy")
    X, Y = sp.symbols("x y")
    u = sp.Matrix([X * (1 - X) * sp.sin(2 * sp.pi * Y), sp.sin(2 * sp.pi * X) * sp.sin(2 * sp.pi * Y)])
    p = u[0]
    grad = u.jacobian([X, Y])
    div = grad.trace()
    stress = grad + grad.T + (div - p) * sp.eye(2)
    f = [sp.diff(stress[i, 0], X) + sp.diff(stress[i, 1], Y) for i in range(2)]
    lap = sp.diff(p, X, 2) + sp.diff(p, Y, 2)
    fu = sp.lambdify((X, Y), f, "numpy")
    fq = sp.lambdify((X, Y), -lap, "numpy")
    pts = np.random.default_rng(3).uniform(0, 1, (50, 2))
    got = mms.force_u(pts)
    ref = np.array([fu(a, b) for a, b in pts], dtype=float)
    assert np.allclose(got, ref, atol=1e-12)
    assert np.allclose(mms.div_flux(pts), [fq(a, b) for a, b in pts], atol=1e-12)


def test_fit_rate_on_power_law():
    h = 1.0 / np.array([4, 8, 16, 32])
    assert mms.fit_rate(h, 3 * h**2) == pytest.approx(2.0)
    assert math.isnan(mms.fit_rate(h, np.zeros(4)))


def test_level_sizes():
    assert mms.level_sizes(6, 4) == [4, 8, 16, 32, 64, 128]


def test_sweep_consistency_and_determinism():
    one = mms.run_convergence("A", levels=3, base=2, rho=1.0, tau=1.0, seed=5)
    sweep = mms.run_sweep(["A"], [(1.0, 1.0)], levels=3, base=2, seed=5)
    again = mms.run_sweep(["A"], [(1.0, 1.0)], levels=3, base=2, seed=5)
    a, b, c = one, sweep[("A", 1.0, 1.0)], again[("A", 1.0, 1.0)]
    assert [r.as_row() for r in a.levels] == [r.as_row() for r in b.levels] == [r.as_row() for r in c.levels]
    assert not a.error and len(a.levels) == 3


def test_parallel_sweep_matches_serial():
    kw = dict(levels=3, base=2, seed=9)
    serial = mms.run_sweep(["A", "B"], [(1.0, 1e-2)], workers=1, **kw)
    parallel = mms.run_sweep(["A", "B"], [(1.0, 1e-2)], workers=2, **kw)
    for key in serial:
        assert [r.as_row() for r in serial[key].levels] == [r.as_row() for r in parallel[key].levels]


def test_sweep_rejects_too_few_levels():
    with pytest.raises(ValueError):
        mms.run_sweep(["A"], [(1.0, 1.0)], levels=2)


def test_tables(tmp_path):
    res = mms.run_sweep(["A"], [(1.0, 1.0), (1.0, 1e-2)], levels=3, base=2)
    mms.write_tables(res, tmp_path, ["A"], [1.0], [1.0, 1e-2])
    for name in ("table1.csv", "table2.csv", "table3.csv", "table4.csv", "raw.csv"):
        assert (tmp_path / name).exists()
    rows = (tmp_path / "table3.csv").read_text().splitlines()
    assert rows[1] == "rho,tau=1:A,tau=0.01:A"
    assert len((tmp_path / "raw.csv").read_text().splitlines()) == 1 + 2 * 3
