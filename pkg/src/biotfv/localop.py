"""Interaction-region machinery around each mesh vertex.

For every vertex ``s`` the subcells sharing ``s`` carry linear
reconstructions ``u_K + G (x - x_K)``.  The subcell gradients ``G`` are
fixed by a small local problem:

* normal fluxes (pressure) and tractions (displacement) are continuous
  across every interior subface and equal the prescribed data on Neumann
  subfaces;
* values are continuous across interior subfaces and match the data on
  Dirichlet subfaces, either in a weighted least-squares sense at two Gauss
  points per subface (``variant='general'``), or exactly at a single point
  (``'simplex-symmetric'`` and ``'mpfa-o'``).

The least-squares variant is solved through its KKT system.  Solving for
unit cell data and unit boundary data yields dense linear maps from cell
unknowns to subcell gradients, which in turn give the face flux and
traction stencils.

Because the gradient is an unknown of the local problem, the reconstruction
is exact for affine data by construction; :func:`gradient_basis` exposes
the equivalent explicit consistent-gradient vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .materials import MaterialField
from .mesh import DIRICHLET, NEUMANN, BoundarySpec, Geometry

logger = logging.getLogger(__name__)

COND_LIMIT = 1e8

# name -> (quadrature rule, point position from face midpoint toward vertex, strong continuity)
VARIANTS = {
    "general": ("gauss2", None, False),
    "simplex-symmetric": ("single", 1.0 / 3.0, True),
    "mpfa-o": ("single", 0.0, True),
}


class LocalSolveError(RuntimeError):
    """A local problem is singular or too ill-conditioned to trust."""

    def __init__(self, vertex: int, cond: float, physics: str):
        super().__init__(
            f"local {physics} problem at vertex {vertex} is degenerate "
            f"(condition estimate {cond:.3e} > {COND_LIMIT:.0e})"
        )
        self.vertex = vertex
        self.cond = cond
        self.physics = physics


def default_variant(mesh) -> str:
    """Single-point symmetric variant on triangulations, general otherwise."""
    return "simplex-symmetric" if mesh.is_simplex else "general"


# --------------------------------------------------------------- gradients


def gradient_basis(subcell: int, geo: Geometry, rule: str = "gauss2", eta: float | None = None) -> np.ndarray:
    """Consistent-gradient vectors of one subcell.

    Returns ``g`` of shape (2, 2), one row per adjacent subface (previous
    edge first), such that ``sum_a (xbar_a - x_K) (x) g_a = I`` where
    ``xbar_a`` is the quadrature-weighted mean point of subface ``a``.
    The consistent gradient of a field is then
    ``sum_a (ubar_a - u_K) (x) g_a``.

    Raises
    ------
    ValueError
        If the subface points and the cell center are (nearly) collinear.
    """
    pts, w = geo.subface_points(rule, eta)
    sfs = geo.sc_subfaces[subcell]
    xK = geo.cell_center[geo.sc_cell[subcell]]
    xbar = np.einsum("aq,aqd->ad", w[sfs], pts[sfs]) / w[sfs].sum(axis=1)[:, None]
    X = xbar - xK
    if np.linalg.cond(X) > COND_LIMIT:
        raise ValueError(f"degenerate subcell {subcell}: condition {np.linalg.cond(X):.3e}")
    return np.linalg.inv(X).T


def consistent_gradient(subcell: int, geo: Geometry, subface_values, cell_value, rule="gauss2", eta=None):
    """Apply :func:`gradient_basis` to mean subface values ``(2,)`` or ``(2, c)``."""
    g = gradient_basis(subcell, geo, rule, eta)
    diff = np.asarray(subface_values, dtype=float) - np.asarray(cell_value, dtype=float)
    if diff.ndim == 1:
        return diff @ g
    return np.einsum("ac,ad->cd", diff, g)


def fv_gradient(subcell: int, geo: Geometry, subface_values, cell_value) -> np.ndarray:
    """Finite-volume (divergence-theorem) gradient of one subcell.

    ``subface_values`` holds the values on the subcell's two subfaces in
    the order of ``geo.sc_subfaces[subcell]``; scalars give a vector,
    2-vectors a 2x2 matrix ``[i, j] = d u_i / d x_j``.
    """
    K = geo.sc_cell[subcell]
    out = 0.0
    for a in range(2):
        sf = geo.sc_subfaces[subcell, a]
        n = geo.cell_normal(K, geo.sf_face[sf])
        diff = np.asarray(subface_values[a], dtype=float) - np.asarray(cell_value, dtype=float)
        out = out + geo.sf_length[sf] * np.multiply.outer(diff, n)
    return out / geo.sc_area[subcell]


# ---------------------------------------------------------- boundary tables


@dataclass
class BoundaryDofs:
    """Numbering of boundary data entries.

    Displacement entries of a Dirichlet subface are ordered point-major
    then component; Neumann subfaces carry one traction vector.  Pressure
    entries: one per point on Dirichlet subfaces, one flux on Neumann ones.
    """

    u_start: np.ndarray
    u_count: np.ndarray
    u_point: np.ndarray
    u_comp: np.ndarray
    u_is_dirichlet: np.ndarray
    p_start: np.ndarray
    p_count: np.ndarray
    p_point: np.ndarray
    p_is_dirichlet: np.ndarray

    @property
    def n_u(self) -> int:
        return len(self.u_comp)

    @property
    def n_p(self) -> int:
        return len(self.p_point)

    def u_dofs(self, sf: int) -> np.ndarray:
        return np.arange(self.u_start[sf], self.u_start[sf] + self.u_count[sf])

    def p_dofs(self, sf: int) -> np.ndarray:
        return np.arange(self.p_start[sf], self.p_start[sf] + self.p_count[sf])

    def values(self, boundary: BoundarySpec) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate the boundary callables at the data points."""
        gu = np.zeros(self.n_u)
        for flag, fn in ((True, boundary.g_u_dirichlet), (False, boundary.g_u_neumann)):
            sel = np.flatnonzero(self.u_is_dirichlet == flag)
            if sel.size:
                vals = np.asarray(fn(self.u_point[sel]), dtype=float).reshape(len(sel), 2)
                gu[sel] = vals[np.arange(len(sel)), self.u_comp[sel]]
        gp = np.zeros(self.n_p)
        for flag, fn in ((True, boundary.g_p_dirichlet), (False, boundary.g_p_neumann)):
            sel = np.flatnonzero(self.p_is_dirichlet == flag)
            if sel.size:
                gp[sel] = np.asarray(fn(self.p_point[sel]), dtype=float).reshape(len(sel))
        return gu, gp


def boundary_dofs(geo: Geometry, boundary: BoundarySpec, variant: str) -> BoundaryDofs:
    rule, eta, _ = VARIANTS[variant]
    pts, _ = geo.subface_points(rule, eta)
    q = pts.shape[1]
    n_sf = len(geo.sf_face)
    ukind = boundary.u_kind[geo.sf_face]
    pkind = boundary.p_kind[geo.sf_face]
    u_count = np.where(ukind == DIRICHLET, 2 * q, np.where(ukind == NEUMANN, 2, 0)).astype(np.int64)
    p_count = np.where(pkind == DIRICHLET, q, np.where(pkind == NEUMANN, 1, 0)).astype(np.int64)
    u_start = np.concatenate([[0], np.cumsum(u_count)[:-1]])
    p_start = np.concatenate([[0], np.cumsum(p_count)[:-1]])
    u_point, u_comp, u_dir, p_point, p_dir = [], [], [], [], []
    for sf in range(n_sf):
        if ukind[sf] == DIRICHLET:
            for b in range(q):
                for i in range(2):
                    u_point.append(pts[sf, b])
                    u_comp.append(i)
                    u_dir.append(True)
        elif ukind[sf] == NEUMANN:
            for i in range(2):
                u_point.append(geo.sf_center[sf])
                u_comp.append(i)
                u_dir.append(False)
        if pkind[sf] == DIRICHLET:
            for b in range(q):
                p_point.append(pts[sf, b])
                p_dir.append(True)
        elif pkind[sf] == NEUMANN:
            p_point.append(geo.sf_center[sf])
            p_dir.append(False)
    return BoundaryDofs(
        u_start, u_count, np.array(u_point).reshape(-1, 2), np.array(u_comp, dtype=np.int64),
        np.array(u_dir, dtype=bool), p_start, p_count, np.array(p_point).reshape(-1, 2),
        np.array(p_dir, dtype=bool),
    )


# ------------------------------------------------------------- condensation


@dataclass
class VertexCondensation:
    """Linear maps of one interaction region.

    Gradient maps are indexed ``[subcell, i, j, column]`` for displacement
    and ``[subcell, j, column]`` for pressure, where subcells follow
    ``subcells`` and columns follow the local cell order ``cells``
    (displacement columns interleaved ``(u1, u2)`` per cell).  Boundary
    maps act on the global boundary data entries listed in ``u_bnd`` and
    ``p_bnd``.
    """

    vertex: int
    variant: str
    cells: np.ndarray
    subcells: np.ndarray
    subfaces: np.ndarray
    local_cell: np.ndarray  # local cell index of every subcell
    length_scale: float
    Gp: np.ndarray
    Gp_bnd: np.ndarray
    p_bnd: np.ndarray
    Guu: np.ndarray
    Gup: np.ndarray
    Gu_bnd: np.ndarray
    u_bnd: np.ndarray
    cond_p: float
    cond_u: float
    degenerate_p: bool = False
    degenerate_u: bool = False

    def pressure_gradients(self, p_cells, g_p=None) -> np.ndarray:
        """Subcell pressure gradients for local cell pressures, shape (n_sub, 2)."""
        out = self.Gp @ np.asarray(p_cells, dtype=float)
        if g_p is not None and self.p_bnd.size:
            out = out + self.Gp_bnd @ np.asarray(g_p)[self.p_bnd]
        return out

    def displacement_gradients(self, u_cells, p_cells, g_u=None) -> np.ndarray:
        """Subcell displacement gradients, shape (n_sub, 2, 2)."""
        out = self.Guu @ np.asarray(u_cells, dtype=float).ravel() + self.Gup @ np.asarray(p_cells, dtype=float)
        if g_u is not None and self.u_bnd.size:
            out = out + self.Gu_bnd @ np.asarray(g_u)[self.u_bnd]
        return out

    def subface_values(self, geo: Geometry, cell_values, gradients, rule="gauss2", eta=None):
        """Quadrature-point values ``u_K + G (x_beta - x_K)`` on both sides.

        Returns a dict ``subface -> array (sides, q[, c])`` with NaN for
        missing sides.
        """
        pts, _ = geo.subface_points(rule, eta)
        cell_values = np.asarray(cell_values, dtype=float)
        where = {int(k): i for i, k in enumerate(self.subcells)}
        out = {}
        for sf in self.subfaces:
            vals = []
            for side in range(2):
                k = geo.sf_slots[sf, side]
                if k < 0:
                    vals.append(np.full((pts.shape[1],) + cell_values.shape[1:], np.nan))
                    continue
                i = where[int(k)]
                dx = pts[sf] - geo.cell_center[geo.sc_cell[k]]
                G = gradients[i]
                vals.append(cell_values[self.local_cell[i]] + dx @ np.asarray(G).T)
            out[int(sf)] = np.stack(vals)
        return out


@dataclass
class _Region:
    """Geometric and material data of one interaction region."""

    s: int
    cells: np.ndarray
    subcells: np.ndarray
    local_cell: np.ndarray
    subfaces: np.ndarray
    sides: list  # per subface: list of (local subcell, outward normal)
    ell: float
    points: np.ndarray  # (n_sf_loc, q, 2)
    weights: np.ndarray  # (n_sf_loc, q), normalised to sum 1
    u_kind: list
    p_kind: list
    centers: np.ndarray  # cell centers per local subcell
    extra: dict = field(default_factory=dict)


def _region(s: int, geo: Geometry, boundary: BoundarySpec, rule: str, eta) -> _Region:
    scs = geo.vertex_subcells[s]
    cells_of = geo.sc_cell[scs]
    order = np.argsort(cells_of, kind="stable")
    scs = scs[order]
    cells = cells_of[order]
    where = {int(k): i for i, k in enumerate(scs)}
    sfs = geo.vertex_subfaces[s]
    pts_all, w_all = geo.subface_points(rule, eta)
    sides = []
    for sf in sfs:
        f = geo.sf_face[sf]
        n = geo.face_normal[f]
        entry = [(where[int(geo.sf_slots[sf, 0])], n)]
        if geo.sf_slots[sf, 1] >= 0:
            entry.append((where[int(geo.sf_slots[sf, 1])], -n))
        sides.append(entry)
    ell = float(geo.cell_diameter[cells].max())
    w = w_all[sfs]
    return _Region(
        s=s,
        cells=cells,
        subcells=scs,
        local_cell=np.arange(len(scs)),
        subfaces=sfs,
        sides=sides,
        ell=ell,
        points=pts_all[sfs],
        weights=w / w.sum(axis=1, keepdims=True),
        u_kind=[boundary.u_kind[geo.sf_face[sf]] for sf in sfs],
        p_kind=[boundary.p_kind[geo.sf_face[sf]] for sf in sfs],
        centers=geo.cell_center[cells],
    )


def _harmonic(vals) -> float:
    vals = [v for v in vals]
    if any(v <= 0 for v in vals):
        return 0.0
    return len(vals) / sum(1.0 / v for v in vals)


def _solve_local(E, Ey, Eg, J, Jy, Jg, wj, strong: bool, s: int, physics: str):
    """Solve for the maps ``x = X_y y + X_g g``; returns (X, cond, degenerate).

    Constraint rows are normalised first.  In the least-squares variant the
    constraint block is reduced to its row space, which removes
    dependencies such as the torque balance that axis-aligned subfaces
    produce; a reduced rank is reported as ``degenerate`` only when whole
    rows vanish (zero coefficients).
    """
    nx = E.shape[1]
    scale = np.abs(E).max(axis=1) if E.size else np.zeros(0)
    ref = scale.max() if scale.size else 1.0
    keep = scale > 1e-13 * ref
    degenerate = not np.all(keep)
    scale = np.where(keep, scale, 1.0)
    E, Ey, Eg = (E / scale[:, None])[keep], (Ey / scale[:, None])[keep], (Eg / scale[:, None])[keep]
    rhs = np.hstack([Ey, Eg])
    if strong:
        A, B = E, rhs
    else:
        if E.shape[0]:
            U, S, Vt = np.linalg.svd(E, full_matrices=False)
            r = int(np.sum(S > 1e-10 * S[0]))
            E = S[:r, None] * Vt[:r]
            rhs = U[:, :r].T @ rhs
        wmax = wj.max() if wj.size else 1.0
        W = wj / wmax
        H = J.T @ (W[:, None] * J)
        m = E.shape[0]
        A = np.zeros((nx + m, nx + m))
        A[:nx, :nx] = H
        A[:nx, nx:] = E.T
        A[nx:, :nx] = E
        B = np.vstack([-J.T @ (W[:, None] * np.hstack([Jy, Jg])), rhs])
    cond = float(np.linalg.cond(A)) if A.shape[0] == A.shape[1] else np.inf
    if cond <= COND_LIMIT:
        X = np.linalg.solve(A, B)
    elif degenerate:
        X = np.linalg.lstsq(A, B, rcond=1e-12)[0]
    else:
        raise LocalSolveError(s, cond, physics)
    return X[:nx], cond, degenerate


def _value_rows(reg: _Region, k: int, pt: np.ndarray, nc: int, nx: int, ny: int):
    """Rows (nc) of the affine value ``u_K + G~ (x - x_K)/ell`` at ``pt``."""
    Ax = np.zeros((nc, nx))
    Ay = np.zeros((nc, ny))
    dx = (pt - reg.centers[k]) / reg.ell
    for i in range(nc):
        Ax[i, k * 2 * nc + 2 * i: k * 2 * nc + 2 * i + 2] = dx
        Ay[i, nc * reg.local_cell[k] + i] = 1.0
    return Ax, Ay


def _build_local(reg: _Region, nc: int, ny: int, bnd_map: dict, ng: int, strong: bool, op, coupling, nu):
    """Assemble constraint and jump systems for one physics.

    ``op(k, n)`` returns the (nc, 2nc) flux/traction operator on the
    scaled gradient of subcell ``k``; ``coupling(k, n)`` returns the
    (nc, ny) right-hand-side contribution of the cell data (pressure in
    the traction balance) or None; ``nu(sides)`` the jump weight.
    """
    n_sub = len(reg.subcells)
    nx = n_sub * 2 * nc
    E, Ey, Eg = [], [], []
    J, Jy, Jg, wj = [], [], [], []
    kinds = reg.u_kind if nc == 2 else reg.p_kind
    for j, sides in enumerate(reg.sides):
        kind = kinds[j]
        # balance of fluxes / tractions
        if kind != DIRICHLET:
            row = np.zeros((nc, nx))
            ry = np.zeros((nc, ny))
            rg = np.zeros((nc, ng))
            for k, n in sides:
                row[:, k * 2 * nc:(k + 1) * 2 * nc] += op(k, n)
                c = coupling(k, n)
                if c is not None:
                    ry += reg.ell * c
            if kind == NEUMANN:
                dofs = bnd_map[j]
                rg[np.arange(nc), dofs] = reg.ell
            E.append(row), Ey.append(ry), Eg.append(rg)
        # value continuity or Dirichlet data
        if kind == "" or kind == DIRICHLET:
            weight = nu(sides)
            for b in range(reg.points.shape[1]):
                pt = reg.points[j, b]
                k0 = sides[0][0]
                Ax, Ay = _value_rows(reg, k0, pt, nc, nx, ny)
                Ag = np.zeros((nc, ng))
                if kind == "":
                    Bx, By = _value_rows(reg, sides[1][0], pt, nc, nx, ny)
                    Ax, Ay = Ax - Bx, Ay - By
                else:
                    dofs = bnd_map[j][b * nc:(b + 1) * nc]
                    Ag[np.arange(nc), dofs] = -1.0
                if strong:
                    # Ax x + Ay y + Ag g = 0  ->  Ax x = -Ay y - Ag g
                    E.append(Ax), Ey.append(-Ay), Eg.append(-Ag)
                else:
                    J.append(Ax), Jy.append(Ay), Jg.append(Ag)
                    wj.extend([weight * reg.weights[j, b]] * nc)

    def stack(rows, width):
        return np.vstack(rows) if rows else np.zeros((0, width))

    return (
        stack(E, nx), stack(Ey, ny), stack(Eg, ng),
        stack(J, nx), stack(Jy, ny), stack(Jg, ng), np.array(wj),
    )


def condense_vertex(
    s: int,
    geo: Geometry,
    materials: MaterialField,
    boundary: BoundarySpec,
    variant: str = "general",
    bdofs: BoundaryDofs | None = None,
    *,
    mechanics: bool = True,
) -> VertexCondensation:
    """Solve the flow and mechanics local problems around vertex ``s``.

    Raises
    ------
    LocalSolveError
        If a local system is singular or its condition estimate exceeds
        ``COND_LIMIT`` for reasons other than vanishing coefficients.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {sorted(VARIANTS)}, got {variant!r}")
    rule, eta, strong = VARIANTS[variant]
    if bdofs is None:
        bdofs = boundary_dofs(geo, boundary, variant)
    reg = _region(s, geo, boundary, rule, eta)
    n = len(reg.cells)
    n_sub = n

    # ---- flow
    p_bnd = np.concatenate([bdofs.p_dofs(sf) for sf in reg.subfaces] + [np.zeros(0, np.int64)])
    p_map, pos = {}, 0
    for j, sf in enumerate(reg.subfaces):
        c = bdofs.p_count[sf]
        p_map[j] = np.arange(pos, pos + c)
        pos += c
    perm = materials.permeability[reg.cells]

    def op_p(k, nrm):
        return -(perm[k] @ nrm)[None, :]

    def nu_p(sides):
        return _harmonic([nrm @ perm[k] @ nrm for k, nrm in sides]) or 1.0

    sysp = _build_local(reg, 1, n, p_map, len(p_bnd), strong, op_p, lambda k, nrm: None, nu_p)
    Xp, cond_p, deg_p = _solve_local(*sysp, strong, s, "flow")
    Gp = Xp.reshape(n_sub, 2, -1) / reg.ell

    # ---- mechanics
    if mechanics:
        u_bnd = np.concatenate([bdofs.u_dofs(sf) for sf in reg.subfaces] + [np.zeros(0, np.int64)])
        u_map, pos = {}, 0
        for j, sf in enumerate(reg.subfaces):
            c = bdofs.u_count[sf]
            u_map[j] = np.arange(pos, pos + c)
            pos += c
        Cfull = materials.tensor()[reg.cells]
        alpha = materials.alpha[reg.cells]
        ny = 3 * n

        def op_u(k, nrm):
            # traction component i from scaled gradient entries (k', l)
            return np.einsum("ijkl,j->ikl", Cfull[k], nrm).reshape(2, 4)

        def coup_u(k, nrm):
            c = np.zeros((2, ny))
            c[:, 2 * n + k] = alpha[k] * nrm
            return c

        def nu_u(sides):
            vals = [np.einsum("ijil,j,l->", Cfull[k], nrm, nrm) for k, nrm in sides]
            return _harmonic(vals) or 1.0

        sysu = _build_local(reg, 2, ny, u_map, len(u_bnd), strong, op_u, coup_u, nu_u)
        Xu, cond_u, deg_u = _solve_local(*sysu, strong, s, "mechanics")
        Xu = Xu.reshape(n_sub, 2, 2, -1) / reg.ell
        Guu, Gup, Gu_bnd = Xu[..., :2 * n], Xu[..., 2 * n:3 * n], Xu[..., 3 * n:]
    else:
        u_bnd = np.zeros(0, np.int64)
        Guu = np.zeros((n_sub, 2, 2, 2 * n))
        Gup = np.zeros((n_sub, 2, 2, n))
        Gu_bnd = np.zeros((n_sub, 2, 2, 0))
        cond_u, deg_u = 0.0, False

    return VertexCondensation(
        vertex=s,
        variant=variant,
        cells=reg.cells,
        subcells=reg.subcells,
        subfaces=reg.subfaces,
        local_cell=reg.local_cell,
        length_scale=reg.ell,
        Gp=Gp[..., :n],
        Gp_bnd=Gp[..., n:],
        p_bnd=p_bnd,
        Guu=Guu,
        Gup=Gup,
        Gu_bnd=Gu_bnd,
        u_bnd=u_bnd,
        cond_p=cond_p,
        cond_u=cond_u,
        degenerate_p=deg_p,
        degenerate_u=deg_u,
    )


def condense_all(geo, materials, boundary, variant=None, *, mechanics=True):
    """Condense every vertex; returns (list of VertexCondensation, BoundaryDofs)."""
    variant = variant or default_variant(geo.mesh)
    bdofs = boundary_dofs(geo, boundary, variant)
    conds = [
        condense_vertex(s, geo, materials, boundary, variant, bdofs, mechanics=mechanics)
        for s in range(geo.mesh.n_vertices)
    ]
    return conds, bdofs


# ----------------------------------------------------------------- stencils


@dataclass
class FaceStencils:
    """Integrated face fluxes and tractions as sparse maps.

    ``flux @ p + flux_bnd @ g_p`` gives ``m_sigma q`` per face, the
    outward flux of the orientation cell; ``traction_u @ u +
    traction_p @ p + traction_bnd @ g_u`` gives ``m_sigma T`` (interleaved
    per face).  ``orientation[f]`` is the cell whose outward normal is used.
    """

    flux: sps.csr_matrix
    flux_bnd: sps.csr_matrix
    traction_u: sps.csr_matrix
    traction_p: sps.csr_matrix
    traction_bnd: sps.csr_matrix
    orientation: np.ndarray
    face_sign: np.ndarray  # +1 where orientation is face_cells[:, 0]

    def fluxes(self, p, g_p) -> np.ndarray:
        return self.flux @ p + self.flux_bnd @ g_p

    def tractions(self, u, p, g_u) -> np.ndarray:
        return (self.traction_u @ np.ravel(u) + self.traction_p @ p + self.traction_bnd @ g_u).reshape(-1, 2)


def build_stencils(conds, geo: Geometry, materials: MaterialField, bdofs: BoundaryDofs, side: int = 0) -> FaceStencils:
    """Face stencils from the condensations.

    Each subface contributes through exactly one adjacent subcell: the one
    of the orientation cell (``side=0``, lowest cell id) or, for interior
    faces, of the other cell (``side=1``).
    """
    mesh = geo.mesh
    nf, nc = mesh.n_faces, mesh.n_cells
    Cfull = materials.tensor()
    perm = materials.permeability
    alpha = materials.alpha
    fr, fcol, fval, gr, gcol, gval = [], [], [], [], [], []
    tr_, tc_, tv_, pr_, pc_, pv_, br_, bc_, bv_ = [], [], [], [], [], [], [], [], []
    for vc in conds:
        where = {int(k): i for i, k in enumerate(vc.subcells)}
        for sf in vc.subfaces:
            f = geo.sf_face[sf]
            use = side if geo.sf_slots[sf, 1] >= 0 else 0
            k = int(geo.sf_slots[sf, use])
            i = where[k]
            K = geo.sc_cell[k]
            n = geo.face_normal[f] * (1.0 if use == 0 else -1.0)
            ms = geo.sf_length[sf]
            kn = perm[K] @ n
            # flux
            fr.append(np.full(len(vc.cells), f)), fcol.append(vc.cells), fval.append(-ms * kn @ vc.Gp[i])
            if vc.p_bnd.size:
                gr.append(np.full(len(vc.p_bnd), f)), gcol.append(vc.p_bnd), gval.append(-ms * kn @ vc.Gp_bnd[i])
            # traction
            Tn = np.einsum("ijkl,j->ikl", Cfull[K], n).reshape(2, 4)
            ucols = np.column_stack([2 * vc.cells, 2 * vc.cells + 1]).ravel()
            Tu = ms * Tn @ vc.Guu[i].reshape(4, -1)
            Tp = ms * Tn @ vc.Gup[i].reshape(4, -1)
            for r in range(2):
                tr_.append(np.full(len(ucols), 2 * f + r)), tc_.append(ucols), tv_.append(Tu[r])
                pr_.append(np.full(len(vc.cells), 2 * f + r)), pc_.append(vc.cells), pv_.append(Tp[r])
                pr_.append([2 * f + r]), pc_.append([K]), pv_.append([-ms * alpha[K] * n[r]])
            if vc.u_bnd.size:
                Tb = ms * Tn @ vc.Gu_bnd[i].reshape(4, -1)
                for r in range(2):
                    br_.append(np.full(len(vc.u_bnd), 2 * f + r)), bc_.append(vc.u_bnd), bv_.append(Tb[r])

    def mat(r, c, v, shape):
        if not r:
            return sps.csr_matrix(shape)
        return sps.csr_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=shape
        )

    interior = mesh.face_cells[:, 1] >= 0
    use_other = interior & (side == 1)
    orientation = np.where(use_other, mesh.face_cells[:, 1], mesh.face_cells[:, 0])
    return FaceStencils(
        flux=mat(fr, fcol, fval, (nf, nc)),
        flux_bnd=mat(gr, gcol, gval, (nf, bdofs.n_p)),
        traction_u=mat(tr_, tc_, tv_, (2 * nf, 2 * nc)),
        traction_p=mat(pr_, pc_, pv_, (2 * nf, nc)),
        traction_bnd=mat(br_, bc_, bv_, (2 * nf, bdofs.n_u)),
        orientation=orientation,
        face_sign=np.where(use_other, -1.0, 1.0),
    )


from .conditions import ConditionReport, check_conditions  # noqa: E402,F401  (re-exported)
