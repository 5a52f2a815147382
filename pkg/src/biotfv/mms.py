"""Manufactured solution, convergence runs and parameter sweeps.

The test problem on the unit square uses

    u = (x (1 - x) sin(2 pi y), sin(2 pi x) sin(2 pi y)),   p = u_1,

with unit Lamé parameters, Biot coefficient and permeability.  Both fields
vanish on the boundary, so the problem is driven by the sources alone.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .assembly import discretize, solve_static
from .materials import MaterialField
from .mesh import BoundarySpec, build_grid
from .postproc import ErrorReport, error_metrics, reconstruct

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_RHO = (1.0, 1e-1, 1e-2, 1e-4, 1e-6)
DEFAULT_TAU = (1.0, 1e-1, 1e-2, 1e-4, 1e-6)


def _xy(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1]


def exact_u(x):
    X, Y = _xy(x)
    return np.stack([X * (1 - X) * np.sin(TWO_PI * Y), np.sin(TWO_PI * X) * np.sin(TWO_PI * Y)], -1)


def exact_p(x):
    X, Y = _xy(x)
    return X * (1 - X) * np.sin(TWO_PI * Y)


def exact_grad_u(x):
    """``[..., i, j] = d u_i / d x_j``."""
    X, Y = _xy(x)
    sx, cx = np.sin(TWO_PI * X), np.cos(TWO_PI * X)
    sy, cy = np.sin(TWO_PI * Y), np.cos(TWO_PI * Y)
    g = np.empty(X.shape + (2, 2))
    g[..., 0, 0] = (1 - 2 * X) * sy
    g[..., 0, 1] = TWO_PI * X * (1 - X) * cy
    g[..., 1, 0] = TWO_PI * cx * sy
    g[..., 1, 1] = TWO_PI * sx * cy
    return g


def exact_grad_p(x):
    return exact_grad_u(x)[..., 0, :]


def exact_stress(x):
    """Total stress ``grad u + grad u^T + (div u) I - p I``."""
    g = exact_grad_u(x)
    tr = g[..., 0, 0] + g[..., 1, 1]
    eye = np.eye(2)
    return g + np.swapaxes(g, -1, -2) + ((tr - exact_p(x))[..., None, None]) * eye


def exact_flux(x):
    return -exact_grad_p(x)


def force_u(x):
    """Divergence of the total stress."""
    X, Y = _xy(x)
    pi2 = math.pi**2
    sx, cx = np.sin(TWO_PI * X), np.cos(TWO_PI * X)
    sy, cy = np.sin(TWO_PI * Y), np.cos(TWO_PI * Y)
    f1 = 4 * pi2 * (X**2 - X) * sy + 2 * X * sy - 7 * sy + 8 * pi2 * cx * cy
    f2 = 2 * math.pi * (X**2 - 5 * X + 2) * cy - 16 * pi2 * sx * sy
    return np.stack([f1, f2], -1)


def div_u(x):
    X, Y = _xy(x)
    return (1 - 2 * X) * np.sin(TWO_PI * Y) + TWO_PI * np.sin(TWO_PI * X) * np.cos(TWO_PI * Y)


def div_flux(x):
    """Divergence of the Darcy flux, ``-laplace(p)``."""
    X, Y = _xy(x)
    return (2 + 4 * math.pi**2 * (X - X**2)) * np.sin(TWO_PI * Y)


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact fields and sources for one ``(rho, tau)`` pair."""

    rho: float
    tau: float

    def u(self, x):
        return exact_u(x)

    def p(self, x):
        return exact_p(x)

    def grad_u(self, x):
        return exact_grad_u(x)

    def stress(self, x):
        return exact_stress(x)

    def flux(self, x):
        return exact_flux(x)

    def f_u(self, x):
        return force_u(x)

    def f_p(self, x):
        return div_u(x) + self.rho * exact_p(x) + self.tau * div_flux(x)


def manufactured_case(rho: float, tau: float) -> ManufacturedCase:
    return ManufacturedCase(float(rho), float(tau))


# ------------------------------------------------------------------ harness


def fit_rate(h: Sequence[float], err: Sequence[float], last: int = 3) -> float:
    """Least-squares slope of log(err) against log(h) over the last levels."""
    h = np.asarray(h, float)[-last:]
    e = np.asarray(err, float)[-last:]
    if len(h) < 2 or np.any(~np.isfinite(e)) or np.any(e <= 0):
        return math.nan
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


@dataclass
class ConvergenceReport:
    grid: str
    seed: int
    rho: float
    tau: float
    amplitude: float
    levels: list = field(default_factory=list)  # ErrorReport per level
    spacing: list = field(default_factory=list)  # nominal 1/n per level
    error: str = ""

    @property
    def h(self):
        """Nominal spacing per level; it halves exactly under refinement."""
        return self.spacing[: len(self.levels)]

    @property
    def rate_sigma(self) -> float:
        return fit_rate(self.h, [r.eps_sigma for r in self.levels])

    @property
    def rate_up(self) -> float:
        return fit_rate(self.h, [r.eps_up for r in self.levels])

    @property
    def final(self) -> ErrorReport | None:
        return self.levels[-1] if self.levels else None


def level_sizes(levels: int, base: int) -> list[int]:
    return [base * 2 ** (lev - 1) for lev in range(1, levels + 1)]


def level_mesh(grid: str, n: int, amplitude: float, seed: int, level: int):
    """Suite mesh of one refinement level; the perturbation stream depends on (seed, level)."""
    stream = int(np.random.SeedSequence([seed, level]).generate_state(1, np.uint64)[0])
    return build_grid(grid, n, amplitude, stream)


def _solve_level(system, rho, tau):
    case = manufactured_case(rho, tau)
    sol = solve_static(system, system.rhs(case.f_u, case.f_p, tau=tau), rho=rho, tau=tau)
    rep = reconstruct(system, sol, f_u=case.f_u, f_p=case.f_p)
    err = error_metrics(sol, rep, case.u, case.p, case.stress, case.flux, system.geometry, rho, tau)
    return sol, rep, err


def run_convergence(
    grid: str,
    levels: int = 6,
    base: int = 4,
    rho: float = 1.0,
    tau: float = 1.0,
    amplitude: float = 0.5,
    seed: int = 42,
    variant: str | None = None,
) -> ConvergenceReport:
    """Refinement study for one grid type and parameter pair."""
    return run_sweep([grid], [(rho, tau)], levels, base, amplitude, seed, variant)[(grid, rho, tau)]


def variant_for(grid: str) -> str:
    return "simplex-symmetric" if grid.upper() == "B" else "general"


def _sweep_grid(grid, pairs, levels, base, amplitude, seed, variant):
    reports = {(rho, tau): ConvergenceReport(grid, seed, rho, tau, amplitude) for rho, tau in pairs}
    var = variant or variant_for(grid)
    for lev, n in enumerate(level_sizes(levels, base), start=1):
        try:
            mesh = level_mesh(grid, n, amplitude, seed, lev)
            mat = MaterialField.isotropic(mesh.n_cells)
            system, _ = discretize(mesh, mat, BoundarySpec.all_dirichlet(mesh), var)
        except Exception as exc:  # abort the whole ladder for this grid
            logger.error("grid %s level %d: %s", grid, lev, exc)
            for r in reports.values():
                r.error = r.error or f"level {lev}: {exc}"
            break
        for rho, tau in pairs:
            rep = reports[(rho, tau)]
            if rep.error:
                continue
            try:
                rep.levels.append(_solve_level(system, rho, tau)[2])
                rep.spacing.append(1.0 / n)
            except Exception as exc:
                logger.error("grid %s level %d rho=%g tau=%g: %s", grid, lev, rho, tau, exc)
                rep.error = f"level {lev}: {exc}"
        logger.info("grid %s level %d (%d cells) done", grid, lev, mesh.n_cells)
    return reports


def run_sweep(
    grids: Sequence[str],
    pairs: Sequence[tuple[float, float]],
    levels: int = 6,
    base: int = 4,
    amplitude: float = 0.5,
    seed: int = 42,
    variant: str | None = None,
    workers: int = 1,
) -> dict:
    """All ``(grid, rho, tau)`` refinement studies.

    Each grid level is discretized once and reused for every parameter
    pair.  Grids run as independent jobs when ``workers > 1``; results are
    keyed by ``(grid, rho, tau)`` so the schedule does not affect output.
    """
    if levels < 3:
        raise ValueError("at least 3 levels are needed to fit a rate")
    grids = [g.upper() for g in grids]
    pairs = [(float(r), float(t)) for r, t in pairs]
    args = [(g, pairs, levels, base, amplitude, seed, variant) for g in grids]
    if workers > 1 and len(grids) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(grids))) as pool:
            results = list(pool.map(_sweep_grid, *zip(*args)))
    else:
        results = [_sweep_grid(*a) for a in args]
    out = {}
    for g, res in zip(grids, results):
        for (rho, tau), rep in res.items():
            out[(g, rho, tau)] = rep
    return out


# ------------------------------------------------------------------ tables


TABLES = {
    "table1.csv": ("rate of eps_sigma", lambda r: r.rate_sigma),
    "table2.csv": ("eps_sigma at the finest level", lambda r: r.final.eps_sigma if r.final else math.nan),
    "table3.csv": ("rate of eps_up", lambda r: r.rate_up),
    "table4.csv": ("eps_up at the finest level", lambda r: r.final.eps_up if r.final else math.nan),
}


def write_tables(results: dict, out_dir, grids, rhos, taus) -> None:
    """Write table1..table4 (rows rho, column groups tau, sub-columns grid) and raw.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grids = [g.upper() for g in grids]
    for name, (title, fn) in TABLES.items():
        with open(out / name, "w", newline="") as fh:
            fh.write(f"# {title}; eps_pi and eps_q enter as square roots of the face-weighted ratios\n")
            w = csv.writer(fh)
            w.writerow(["rho"] + [f"tau={t:g}:{g}" for t in taus for g in grids])
            for rho in rhos:
                row = [f"{rho:g}"]
                for t in taus:
                    for g in grids:
                        rep = results.get((g, float(rho), float(t)))
                        val = fn(rep) if rep is not None and not rep.error else math.nan
                        row.append(f"{val:.6g}")
                w.writerow(row)
    with open(out / "raw.csv", "w", newline="") as fh:
        cols = ["grid", "seed", "level", "spacing"] + ErrorReport.columns()
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for (g, rho, tau) in sorted(results, key=lambda k: (grids.index(k[0]), -k[1], -k[2])):
            rep = results[(g, rho, tau)]
            for lev, r in enumerate(rep.levels, start=1):
                row = {"grid": g, "seed": rep.seed, "level": lev, "spacing": repr(rep.spacing[lev - 1])}
                row.update({k: (repr(v) if isinstance(v, float) else v) for k, v in r.as_row().items()})
                w.writerow(row)
