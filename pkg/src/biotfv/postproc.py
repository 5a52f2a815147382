"""Face fluxes, tractions, conservation residuals and error metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .assembly import GlobalBiotSystem, Solution, assemble_rhs
from .dfield import norm_T0, quotient_seminorm
from .localop import FaceStencils


@dataclass
class FaceFieldReport:
    """Per-face flux and traction plus per-cell balance residuals.

    Flux ``q`` and traction ``T`` are per unit face length and refer to the
    outward normal ``normal[f]`` of cell ``orientation[f]``.
    """

    orientation: np.ndarray
    normal: np.ndarray
    q: np.ndarray
    T: np.ndarray
    mass_residual: np.ndarray
    momentum_residual: np.ndarray
    mass_scale: np.ndarray
    momentum_scale: np.ndarray

    @property
    def max_relative_mass(self) -> float:
        return float(np.max(np.abs(self.mass_residual) / self.mass_scale))

    @property
    def max_relative_momentum(self) -> float:
        return float(np.max(np.abs(self.momentum_residual) / self.momentum_scale))


def reconstruct(
    system: GlobalBiotSystem,
    solution: Solution,
    stencils: FaceStencils | None = None,
    f_u: Callable | None = None,
    f_p: Callable | None = None,
) -> FaceFieldReport:
    """Apply the face stencils to a solution and evaluate cell balances.

    The balances use the face quantities directly: the momentum residual
    of cell K is the sum of its outward face forces minus the source, the
    mass residual adds the flux divergence (times tau), the subcell
    displacement divergence and the storage term.
    """
    st = stencils if stencils is not None else system.stencils
    geo = system.geometry
    mesh = geo.mesh
    u, p, tau = solution.u, solution.p, solution.tau
    rho = np.broadcast_to(np.asarray(solution.rho, float), (mesh.n_cells,))
    Fq = st.fluxes(p, system.g_p)  # integrated, out of orientation cell
    FT = st.tractions(u, p, system.g_u)
    normal = geo.face_normal * st.face_sign[:, None]

    # outward sign of every face for every adjacent cell, relative to the stencil orientation
    rows, cols, sgn = [], [], []
    for side in range(2):
        K = mesh.face_cells[:, side]
        ok = K >= 0
        rows.append(K[ok]), cols.append(np.flatnonzero(ok))
        sgn.append(np.where(K[ok] == st.orientation[ok], 1.0, -1.0))
    rows, cols, sgn = map(np.concatenate, (rows, cols, sgn))
    src_u, src_p = assemble_rhs(f_u, f_p, geo)

    mom = np.zeros((mesh.n_cells, 2))
    mom_scale = np.zeros((mesh.n_cells, 2))
    np.add.at(mom, rows, sgn[:, None] * FT[cols])
    np.add.at(mom_scale, rows, np.abs(FT[cols]))
    mom -= src_u
    mom_scale += np.abs(src_u)

    flux_div = np.zeros(mesh.n_cells)
    flux_abs = np.zeros(mesh.n_cells)
    np.add.at(flux_div, rows, sgn * Fq[cols])
    np.add.at(flux_abs, rows, np.abs(Fq[cols]))
    divu = system.B1 @ u.ravel() - system.Delta @ p + system.mass_div_bnd @ system.g_u
    storage = rho * geo.cell_area * p
    mass = tau * flux_div + divu + storage - src_p
    mass_scale = tau * flux_abs + np.abs(system.B1) @ np.abs(u.ravel()) + np.abs(system.Delta) @ np.abs(p)
    mass_scale += np.abs(storage) + np.abs(src_p) + np.abs(system.mass_div_bnd) @ np.abs(system.g_u)

    tiny = np.finfo(float).tiny
    return FaceFieldReport(
        orientation=st.orientation,
        normal=normal,
        q=Fq / geo.face_length,
        T=FT / geo.face_length[:, None],
        mass_residual=mass,
        momentum_residual=mom,
        mass_scale=np.maximum(mass_scale, tiny),
        momentum_scale=np.maximum(mom_scale, tiny),
    )


@dataclass
class ErrorReport:
    """Relative errors of one solve.

    ``eps_pi`` and ``eps_q`` are square roots of the face-weighted squared
    ratios, which are kept in ``eps_pi_sq`` and ``eps_q_sq``.  The stable
    and primary errors combine the square-root versions.
    """

    eps_u: float
    eps_p: float
    eps_p_quot: float
    eps_pi: float
    eps_q: float
    eps_sigma: float
    eps_up: float
    eps_pi_sq: float
    eps_q_sq: float
    h: float
    n_cells: int
    rho: float
    tau: float
    flagged: str = ""

    @staticmethod
    def combine(eps_u, eps_p, eps_p_quot, eps_pi, eps_q, rho, tau):
        sigma = eps_u + eps_pi + (tau + rho) * eps_p + tau * eps_q + eps_p_quot
        return sigma, eps_u + tau * eps_p

    def as_row(self) -> dict:
        return asdict(self)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _ratio(num: float, den: float, name: str, flags: list) -> float:
    if den <= 0:
        flags.append(name)
        return math.nan
    return num / den


def error_metrics(
    solution: Solution,
    report: FaceFieldReport,
    exact_u: Callable,
    exact_p: Callable,
    exact_stress: Callable,
    exact_flux: Callable,
    geo,
    rho: float,
    tau: float,
) -> ErrorReport:
    """Relative errors against exact fields.

    Exact cell values are sampled at cell centers and face quantities at
    face midpoints.  ``exact_stress(x)`` returns (n, 2, 2) total stress and
    ``exact_flux(x)`` the (n, 2) Darcy flux vector.
    """
    flags: list[str] = []
    xc = geo.cell_center
    u_ex = np.asarray(exact_u(xc), float)
    p_ex = np.asarray(exact_p(xc), float)
    eps_u = _ratio(norm_T0(solution.u - u_ex, geo), norm_T0(u_ex, geo), "u", flags)
    p_norm = norm_T0(p_ex, geo)
    eps_p = _ratio(norm_T0(solution.p - p_ex, geo), p_norm, "p", flags)
    eps_pq = _ratio(quotient_seminorm(solution.p - p_ex, geo), p_norm, "p_quot", flags)

    xf = geo.face_center
    w = geo.face_length**2
    n = report.normal
    tn = np.einsum("fij,fj->fi", np.asarray(exact_stress(xf), float), n)
    qn = np.einsum("fi,fi->f", np.asarray(exact_flux(xf), float), n)
    pi_sq = _ratio(np.sum(w * ((report.T - tn) ** 2).sum(1)), np.sum(w * (tn**2).sum(1)), "pi", flags)
    q_sq = _ratio(np.sum(w * (report.q - qn) ** 2), np.sum(w * qn**2), "q", flags)
    eps_pi, eps_q = math.sqrt(pi_sq), math.sqrt(q_sq)
    sigma, up = ErrorReport.combine(eps_u, eps_p, eps_pq, eps_pi, eps_q, rho, tau)
    return ErrorReport(
        eps_u=eps_u, eps_p=eps_p, eps_p_quot=eps_pq, eps_pi=eps_pi, eps_q=eps_q,
        eps_sigma=sigma, eps_up=up, eps_pi_sq=float(pi_sq), eps_q_sq=float(q_sq),
        h=geo.h, n_cells=geo.mesh.n_cells, rho=float(rho), tau=float(tau),
        flagged=",".join(flags),
    )


# ------------------------------------------------------------------ writers


def write_fluxes(path, report: FaceFieldReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["face", "cell", "n_x", "n_y", "q"])
        for f in range(len(report.q)):
            w.writerow([f, int(report.orientation[f]), repr(float(report.normal[f, 0])),
                        repr(float(report.normal[f, 1])), repr(float(report.q[f]))])


def write_tractions(path, report: FaceFieldReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["face", "T_x", "T_y"])
        for f, (tx, ty) in enumerate(report.T.tolist()):
            w.writerow([f, repr(tx), repr(ty)])


def write_balance(path, report: FaceFieldReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "mass", "momentum_x", "momentum_y", "mass_rel", "momentum_rel"])
        rel_m = np.abs(report.mass_residual) / report.mass_scale
        rel_u = (np.abs(report.momentum_residual) / report.momentum_scale).max(axis=1)
        for K in range(len(report.mass_residual)):
            w.writerow([K, repr(float(report.mass_residual[K])),
                        repr(float(report.momentum_residual[K, 0])),
                        repr(float(report.momentum_residual[K, 1])),
                        repr(float(rel_m[K])), repr(float(rel_u[K]))])


def write_errors(path, reports) -> None:
    reports = [reports] if isinstance(reports, ErrorReport) else list(reports)
    with open(path, "w", newline="") as fh:
        fh.write("# eps_pi and eps_q are square roots of the face-weighted squared ratios eps_pi_sq and eps_q_sq\n")
        w = csv.DictWriter(fh, fieldnames=ErrorReport.columns())
        w.writeheader()
        for r in reports:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.as_row().items()})


def write_vtk(path, mesh, u, p) -> None:
    """Legacy ASCII VTK polygon mesh with cell data ``u`` (vectors) and ``p``."""
    u = np.asarray(u, float).reshape(-1, 2)
    p = np.asarray(p, float).ravel()
    lines = ["# vtk DataFile Version 3.0", "biotfv solution", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines.extend(f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist())
    size = sum(len(c) + 1 for c in mesh.cells)
    lines.append(f"CELLS {mesh.n_cells} {size}")
    lines.extend(" ".join(map(str, [len(c), *c.tolist()])) for c in mesh.cells)
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend(["7"] * mesh.n_cells)
    lines.append(f"CELL_DATA {mesh.n_cells}")
    lines.append("VECTORS u double")
    lines.extend(f"{a!r} {b!r} 0.0" for a, b in u.tolist())
    lines.append("SCALARS p double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(repr(v) for v in p.tolist())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
