"""Global cell-centered Biot system: assembly, static solve, time stepping.

Rows are written in conservation form.  For every cell ``K``

* momentum: ``sum_sigma m_sigma T_K^sigma = m_K f_u(x_K)``;
* mass: ``tau sum_sigma m_sigma q_K^sigma + alpha_K sum_s m_K^s tr(grad u)_K^s
  + rho_K m_K p_K = m_K f_p(x_K)``,

where the subcell displacement gradient includes the pressure response of
the local mechanics problem.  That response generates the pressure-pressure
block ``-Delta`` with ``Delta`` symmetric negative semidefinite on regular
grids.  Unknowns are interleaved ``(u1, u2, p)`` per cell.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .dfield import CellField
from .localop import BoundaryDofs, FaceStencils, VertexCondensation, build_stencils, condense_all
from .materials import MaterialField
from .mesh import BoundarySpec, Geometry, MeshTriplet

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Factorization failed or the residual exceeds the tolerance."""


@dataclass
class GlobalBiotSystem:
    """Assembled blocks of the coupled system (cell-major block layout).

    ``A`` (2n x 2n), ``B2T`` (2n x n) and ``momentum_bnd`` act in the
    momentum rows; ``B1`` (n x 2n), ``Delta`` (n x n), ``C`` (n x n) and the
    boundary maps act in the mass rows.  Displacement columns are
    interleaved ``(u1, u2)`` per cell.  ``matrix(rho, tau)`` forms the
    interleaved system for any parameter pair without recondensing.
    """

    geometry: Geometry
    materials: MaterialField
    boundary: BoundarySpec
    bdofs: BoundaryDofs
    stencils: FaceStencils
    variant: str
    A: sps.csr_matrix
    B2T: sps.csr_matrix
    B1: sps.csr_matrix
    C: sps.csr_matrix
    Delta: sps.csr_matrix
    div_faces: sps.csr_matrix
    momentum_bnd: sps.csr_matrix
    mass_div_bnd: sps.csr_matrix
    mass_flux_bnd: sps.csr_matrix
    g_u: np.ndarray
    g_p: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.geometry.mesh.n_cells

    @property
    def Lambda(self) -> sps.csr_matrix:
        """Asymmetric part ``B2T - B1^T`` (diagnostic)."""
        return (self.B2T - self.B1.T).tocsr()

    def mass_matrix(self, rho=None) -> sps.dia_matrix:
        r = self.materials.rho if rho is None else np.broadcast_to(np.asarray(rho, float), (self.n_cells,))
        return sps.diags(r * self.geometry.cell_area)

    def permutation(self) -> np.ndarray:
        """Interleaved position of every block-layout unknown."""
        n = self.n_cells
        return np.concatenate([
            (3 * np.arange(n)[:, None] + np.arange(2)).ravel(),
            3 * np.arange(n) + 2,
        ])

    def block_matrix(self, rho=None, tau=None) -> sps.csr_matrix:
        tau = self.materials.tau if tau is None else float(tau)
        pp = self.mass_matrix(rho) + tau * self.C - self.Delta
        return sps.bmat([[self.A, self.B2T], [self.B1, pp]], format="csr")

    def matrix(self, rho=None, tau=None) -> sps.csr_matrix:
        """Interleaved system matrix for compressibility ``rho`` and time step ``tau``."""
        M = self.block_matrix(rho, tau).tocoo()
        P = self.permutation()
        return sps.csr_matrix((M.data, (P[M.row], P[M.col])), shape=M.shape)

    def interleave(self, u, p) -> np.ndarray:
        x = np.empty(3 * self.n_cells)
        x[self.permutation()] = np.concatenate([np.ravel(u), np.ravel(p)])
        return x

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        xb = np.asarray(x)[self.permutation()]
        n = self.n_cells
        return xb[:2 * n].reshape(n, 2), xb[2 * n:]

    def rhs(self, f_u: Callable | None = None, f_p: Callable | None = None, tau=None) -> np.ndarray:
        """Sources plus boundary data, interleaved."""
        tau = self.materials.tau if tau is None else float(tau)
        src_u, src_p = assemble_rhs(f_u, f_p, self.geometry)
        ru = src_u.ravel() - self.momentum_bnd @ self.g_u
        rp = src_p - self.mass_div_bnd @ self.g_u - tau * (self.mass_flux_bnd @ self.g_p)
        return self.interleave(ru, rp)


def assemble_rhs(f_u: Callable | None, f_p: Callable | None, geo: Geometry):
    """Midpoint-rule source integrals ``m_K f(x_K)``.

    Returns
    -------
    src_u : ndarray, shape (n, 2)
    src_p : ndarray, shape (n,)
    """
    n = geo.mesh.n_cells
    x = geo.cell_center
    su = np.zeros((n, 2)) if f_u is None else np.asarray(f_u(x), float).reshape(n, 2) * geo.cell_area[:, None]
    sp = np.zeros(n) if f_p is None else np.asarray(f_p(x), float).reshape(n) * geo.cell_area
    return su, sp


def _divergence(geo: Geometry, stencils: FaceStencils) -> sps.csr_matrix:
    mesh = geo.mesh
    rows, cols, vals = [], [], []
    for side in range(2):
        K = mesh.face_cells[:, side]
        ok = K >= 0
        sign = np.where(K[ok] == stencils.orientation[ok], 1.0, -1.0)
        rows.append(K[ok]), cols.append(np.flatnonzero(ok)), vals.append(sign)
    return sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_cells, mesh.n_faces),
    )


def assemble(
    mesh: MeshTriplet,
    geo: Geometry,
    conds: Sequence[VertexCondensation],
    stencils: FaceStencils,
    materials: MaterialField,
    boundary: BoundarySpec,
    bdofs: BoundaryDofs,
) -> GlobalBiotSystem:
    """Assemble the block system from condensed interaction regions.

    Raises
    ------
    ValueError
        If the condensations mix variants or a Dirichlet set is empty.
    """
    boundary.validate(mesh)
    variants = {vc.variant for vc in conds}
    if len(variants) != 1:
        raise ValueError(f"inconsistent variant mix: {sorted(variants)}")
    if len(conds) != mesh.n_vertices:
        raise ValueError("every vertex must be condensed")
    n = mesh.n_cells
    Dv = _divergence(geo, stencils)
    Dv2 = sps.kron(Dv, sps.eye(2), format="csr")

    A = (Dv2 @ stencils.traction_u).tocsr()
    B2T = (Dv2 @ stencils.traction_p).tocsr()
    C = (Dv @ stencils.flux).tocsr()
    mom_bnd = (Dv2 @ stencils.traction_bnd).tocsr()
    flux_bnd = (Dv @ stencils.flux_bnd).tocsr()

    alpha = materials.alpha
    r1, c1, v1, rd, cd, vd, rb, cb, vb = [], [], [], [], [], [], [], [], []
    for vc in conds:
        ucols = np.column_stack([2 * vc.cells, 2 * vc.cells + 1]).ravel()
        for i, k in enumerate(vc.subcells):
            K = vc.cells[vc.local_cell[i]]
            w = alpha[K] * geo.sc_area[k]
            r1.append(np.full(len(ucols), K)), c1.append(ucols), v1.append(w * np.trace(vc.Guu[i]))
            rd.append(np.full(len(vc.cells), K)), cd.append(vc.cells), vd.append(w * np.trace(vc.Gup[i]))
            if vc.u_bnd.size:
                rb.append(np.full(len(vc.u_bnd), K)), cb.append(vc.u_bnd), vb.append(w * np.trace(vc.Gu_bnd[i]))

    def mat(r, c, v, shape):
        if not r:
            return sps.csr_matrix(shape)
        return sps.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=shape)

    B1 = mat(r1, c1, v1, (n, 2 * n))
    D = mat(rd, cd, vd, (n, n))
    div_bnd = mat(rb, cb, vb, (n, bdofs.n_u))
    g_u, g_p = bdofs.values(boundary)
    return GlobalBiotSystem(
        geometry=geo,
        materials=materials,
        boundary=boundary,
        bdofs=bdofs,
        stencils=stencils,
        variant=variants.pop(),
        A=A,
        B2T=B2T,
        B1=B1,
        C=C,
        Delta=(-D).tocsr(),
        div_faces=Dv,
        momentum_bnd=mom_bnd,
        mass_div_bnd=div_bnd,
        mass_flux_bnd=flux_bnd,
        g_u=g_u,
        g_p=g_p,
    )


def discretize(mesh: MeshTriplet, materials: MaterialField, boundary: BoundarySpec, variant: str | None = None):
    """Geometry, condensation, stencils and assembly in one call."""
    from .mesh import compute_geometry

    geo = compute_geometry(mesh)
    conds, bdofs = condense_all(geo, materials, boundary, variant)
    stencils = build_stencils(conds, geo, materials, bdofs)
    system = assemble(mesh, geo, conds, stencils, materials, boundary, bdofs)
    return system, conds


@dataclass
class Solution:
    u: np.ndarray  # (n, 2)
    p: np.ndarray  # (n,)
    x: np.ndarray  # interleaved
    residual: float
    rho: float | np.ndarray
    tau: float

    @property
    def u_field(self) -> CellField:
        return CellField(self.u)

    @property
    def p_field(self) -> CellField:
        return CellField(self.p)


def _relative_residual(M, x, b) -> float:
    r = np.linalg.norm(M @ x - b)
    nb = np.linalg.norm(b)
    scale = nb if nb > 0 else max(1.0, abs(M).max() * np.linalg.norm(x))
    return float(r / scale)


def solve_static(
    system: GlobalBiotSystem,
    rhs: np.ndarray | None = None,
    rho=None,
    tau=None,
    tol: float = RESIDUAL_TOL,
) -> Solution:
    """Direct sparse solve of the coupled system.

    Raises
    ------
    SolverError
        If the matrix is singular or the relative residual exceeds ``tol``.
    """
    tau_v = system.materials.tau if tau is None else float(tau)
    rho_v = system.materials.rho if rho is None else rho
    b = system.rhs(tau=tau_v) if rhs is None else np.asarray(rhs, float)
    M = system.matrix(rho_v, tau_v).tocsc()
    try:
        x = spla.spsolve(M, b)
    except RuntimeError as exc:  # singular factor
        raise SolverError(f"factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("singular system: non-finite solution")
    res = _relative_residual(M, x, b)
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    u, p = system.split(x)
    return Solution(u, p, x, res, rho_v, tau_v)


def balanced_initial_state(system: GlobalBiotSystem, p0) -> np.ndarray:
    """Interleaved state with pressure ``p0`` and displacement in momentum balance.

    Solves ``A u + B2T p0 = -momentum_bnd g_u`` (no body force).
    """
    p0 = np.asarray(p0, float)
    b = -system.B2T @ p0 - system.momentum_bnd @ system.g_u
    u = spla.spsolve(system.A.tocsc(), b)
    return system.interleave(u, p0)


def time_march(
    system: GlobalBiotSystem,
    x0,
    steps: int,
    rho=None,
    tau=None,
    forcing: Callable[[int], np.ndarray] | np.ndarray | None = None,
) -> list[np.ndarray]:
    """Backward-Euler steps ``M(rho, tau) x^j = M(rho, 0) x^{j-1} + b^j``.

    ``forcing`` gives the interleaved ``b^j`` (a fixed vector or a callable
    of the step index); ``None`` means zero.  Both matrices are formed once
    from the same stencils and the first one is factorized once.

    Returns
    -------
    list of ndarray
        States ``x^0, ..., x^steps``.
    """
    tau = system.materials.tau if tau is None else float(tau)
    if tau <= 0:
        raise ValueError("time marching needs tau > 0")
    M1 = system.matrix(rho, tau).tocsc()
    M0 = system.matrix(rho, 0.0).tocsr()
    try:
        lu = spla.splu(M1)
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    states = [np.asarray(x0, float).copy()]
    for j in range(1, steps + 1):
        b = M0 @ states[-1]
        if forcing is not None:
            b = b + (forcing(j) if callable(forcing) else np.asarray(forcing, float))
        x = lu.solve(b)
        res = _relative_residual(M1, x, b)
        if not np.all(np.isfinite(x)) or res > RESIDUAL_TOL:
            raise SolverError(f"step {j}: relative residual {res:.3e}")
        states.append(x)
    return states
