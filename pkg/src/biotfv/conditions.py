"""Local coercivity and asymmetry constants of the interaction regions.

Every constant is computed from dense per-vertex quadratic or bilinear
forms on the local cell data, with homogeneous boundary data:

``theta_c``, ``theta_a``
    smallest generalized eigenvalue of the symmetrized local flux
    (traction) form tested with the face-continuous interpolant, against
    the local energy seminorm plus scaled squared jumps.
``theta_delta``
    (interior vertices) the same for the local pressure-to-divergence
    form, scaled by ``h_s**2``; positive when the local contribution to
    the stabilizing operator is negative definite away from constants.
``theta1_lambda``, ``theta2_lambda``
    tightest constants bounding the two asymmetric coupling terms,
    obtained as largest singular values of the normalized local operators.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .localop import VARIANTS, VertexCondensation
from .materials import MaterialField
from .mesh import DIRICHLET, BoundarySpec, Geometry

SATISFIED_TOL = 1e-10
THETA_B_MAX_CELLS = 1500


@dataclass
class ConditionReport:
    """Per-vertex constants (NaN where undefined) and their global summaries."""

    vertex: np.ndarray
    theta_a: np.ndarray
    theta_c: np.ndarray
    theta_delta: np.ndarray
    theta1_lambda: np.ndarray
    theta2_lambda: np.ndarray
    theta_b: float = math.nan

    @staticmethod
    def _min(x) -> float:
        x = np.asarray(x, float)
        x = x[np.isfinite(x)]
        return float(x.min()) if x.size else math.nan

    @property
    def min_theta_a(self) -> float:
        return self._min(self.theta_a)

    @property
    def min_theta_c(self) -> float:
        return self._min(self.theta_c)

    @property
    def min_theta_delta(self) -> float:
        return self._min(self.theta_delta)

    @property
    def theta_lambda(self) -> float:
        """Global asymmetry bound ``max(theta1 / sqrt(2), theta2)``."""
        t1 = np.nanmax(self.theta1_lambda) if np.any(~np.isnan(self.theta1_lambda)) else 0.0
        t2 = np.nanmax(self.theta2_lambda) if np.any(~np.isnan(self.theta2_lambda)) else 0.0
        return float(max(t1 / math.sqrt(2.0), t2))

    @property
    def inf_sup_verdict(self) -> bool | None:
        """``8 Theta_Lambda < Theta_B``, or None when Theta_B was not computed."""
        if math.isnan(self.theta_b):
            return None
        return 8.0 * self.theta_lambda < self.theta_b

    @property
    def satisfied(self) -> bool:
        mins = (self.min_theta_a, self.min_theta_c, self.min_theta_delta)
        ok = all(not math.isnan(m) and m > SATISFIED_TOL for m in mins)
        return ok and self.inf_sup_verdict is not False

    def write_csv(self, path) -> None:
        """Write to a path, or to an open text stream."""
        if hasattr(path, "write"):
            self._write(path)
            return
        with open(path, "w", newline="") as fh:
            self._write(fh)

    def _write(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["vertex", "theta_a", "theta_c", "theta_delta", "theta1_lambda", "theta2_lambda"])
        for row in zip(self.vertex, self.theta_a, self.theta_c, self.theta_delta,
                       self.theta1_lambda, self.theta2_lambda):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        w.writerow(["min", repr(self.min_theta_a), repr(self.min_theta_c), repr(self.min_theta_delta),
                    repr(self.theta_lambda), repr(self.theta_b)])


# ------------------------------------------------------------ linear algebra


def _range_basis(R: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    lam, V = np.linalg.eigh(0.5 * (R + R.T))
    top = lam.max() if lam.size else 0.0
    if top <= 0:
        return np.zeros((R.shape[0], 0))
    return V[:, lam > rtol * top]


def _min_generalized(M: np.ndarray, R: np.ndarray) -> float:
    """Smallest ``x^T M x / x^T R x`` over the range of ``R``."""
    Z = _range_basis(R)
    if Z.shape[1] == 0:
        return math.nan
    Ms = Z.T @ (0.5 * (M + M.T)) @ Z
    Rs = Z.T @ R @ Z
    return float(sla.eigh(Ms, 0.5 * (Rs + Rs.T), eigvals_only=True)[0])


def _inv_sqrt(N: np.ndarray):
    """Map ``y -> x`` with ``x^T N x = |y|^2`` on the range of N, plus the null-space basis."""
    lam, V = np.linalg.eigh(0.5 * (N + N.T))
    top = lam.max() if lam.size else 0.0
    keep = lam > 1e-10 * top if top > 0 else np.zeros_like(lam, dtype=bool)
    return V[:, keep] / np.sqrt(lam[keep]), V[:, ~keep]


def _operator_norm(L: np.ndarray, N_row: np.ndarray, N_col: np.ndarray, scale: float) -> float:
    """Largest ``y^T L x / (|y|_{N_row} |x|_{N_col})``; inf if L sees a null direction.

    ``scale`` is the magnitude of the terms that were summed into L, so
    cancellation down to rounding counts as zero.
    """
    Sr, Zr = _inv_sqrt(N_row)
    Sc, Zc = _inv_sqrt(N_col)
    scale = max(scale, 1e-300)
    if (Zc.size and np.abs(L @ Zc).max() > 1e-9 * scale) or (Zr.size and np.abs(Zr.T @ L).max() > 1e-9 * scale):
        return math.inf
    if Sr.shape[1] == 0 or Sc.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(Sr.T @ L @ Sc, 2))


# -------------------------------------------------------------- local forms


class _Local:
    """Linear maps of one region used by the condition forms."""

    def __init__(self, vc: VertexCondensation, geo: Geometry, boundary: BoundarySpec):
        self.vc = vc
        self.geo = geo
        rule, eta, _ = VARIANTS[vc.variant]
        pts, w = geo.subface_points(rule, eta)
        self.pts = pts
        self.omega = w
        self.where = {int(k): i for i, k in enumerate(vc.subcells)}
        self.n = len(vc.cells)
        self.boundary = boundary

    def cell_of(self, i):
        return int(self.vc.cells[self.vc.local_cell[i]])

    def sides(self, sf):
        """(local subcell index, outward normal) per side of a subface."""
        geo = self.geo
        f = geo.sf_face[sf]
        out = []
        for side in range(2):
            k = geo.sf_slots[sf, side]
            if k >= 0:
                n = geo.face_normal[f] * (1.0 if side == 0 else -1.0)
                out.append((self.where[int(k)], n))
        return out

    def value_map(self, G, i, pt, nc):
        """(nc, nc*n) map from local data to the value of subcell ``i`` at ``pt``."""
        dx = pt - self.geo.cell_center[self.cell_of(i)]
        V = np.einsum("...j,j->...", np.moveaxis(G[i], -1, 0), dx).T  # (nc, cols)
        V = V.reshape(nc, -1)
        Id = np.zeros_like(V)
        c = self.vc.local_cell[i]
        for a in range(nc):
            Id[a, nc * c + a] = 1.0
        return Id + V

    def form_pieces(self, G, nc, kinds):
        """Jump gram, face means and per-subface geometry for gradient map G.

        G has shape (n_sub, [nc,] 2, cols).  Returns the squared-jump gram
        weighted as in the coercivity conditions and, for every subface,
        the (nc, cols) map to the face-continuous mean value.
        """
        geo = self.geo
        cols = G.shape[-1]
        Jgram = np.zeros((cols, cols))
        means = {}
        for sf in self.vc.subfaces:
            kind = kinds[geo.sf_face[sf]]
            sides = self.sides(sf)
            q = self.pts.shape[1]
            om = self.omega[sf]
            msf = geo.sf_length[sf]
            vals = [[self.value_map(G, i, self.pts[sf, b], nc) for b in range(q)] for i, _ in sides]
            side_mean = [sum(om[b] * v[b] for b in range(q)) / om.sum() for v in vals]
            if len(sides) == 2:
                jumps = [vals[0][b] - vals[1][b] for b in range(q)]
                means[sf] = 0.5 * (side_mean[0] + side_mean[1])
            elif kind == DIRICHLET:
                jumps = [vals[0][b] for b in range(q)]
                means[sf] = np.zeros_like(side_mean[0])
            else:
                jumps = []
                means[sf] = side_mean[0]
            coef = 0.0
            for i, _ in sides:
                k = self.vc.subcells[i]
                a = list(geo.sc_subfaces[k]).index(sf)
                d = geo.hf_dist[geo.sc_hf[k, a]]
                coef += geo.sc_area[k] / d**2 / msf
            for b, jb in enumerate(jumps):
                Jgram += coef * om[b] * jb.T @ jb
        return Jgram, means

    def fv_tests(self, means, nc):
        """Per subcell, list of (outward normal * m_sigma, (nc, cols) map of <w> - w_K)."""
        geo = self.geo
        cols = next(iter(means.values())).shape[1]
        out = []
        for i, k in enumerate(self.vc.subcells):
            c = self.vc.local_cell[i]
            K = self.cell_of(i)
            items = []
            for sf in geo.sc_subfaces[k]:
                Id = np.zeros((nc, cols))
                for a in range(nc):
                    Id[a, nc * c + a] = 1.0
                n = geo.cell_normal(K, geo.sf_face[sf])
                items.append((geo.sf_length[sf] * n, means[int(sf)] - Id))
            out.append(items)
        return out

    def gamma_gram(self, nc, kinds):
        """Gram matrix of the local discrete H1 norm on local cell data."""
        geo = self.geo
        N = np.zeros((nc * self.n, nc * self.n))
        mesh = geo.mesh
        for i, k in enumerate(self.vc.subcells):
            c = self.vc.local_cell[i]
            for a in range(2):
                hf = geo.sc_hf[k, a]
                sf = geo.sc_subfaces[k, a]
                f = geo.hf_face[hf]
                row = np.zeros(self.n)
                if mesh.face_cells[f, 1] >= 0:
                    w = {}
                    for h in np.flatnonzero(geo.hf_face == f):
                        w[int(geo.hf_cell[h])] = 1.0 / geo.hf_dist[h]
                    tot = sum(w.values())
                    for K, wk in w.items():
                        row[int(np.searchsorted(self.vc.cells, K))] += wk / tot
                elif kinds[f] != DIRICHLET:
                    row[c] += 1.0  # Neumann: no contribution
                row[c] -= 1.0
                coef = geo.sf_length[sf] / geo.hf_dist[hf]
                R = np.kron(row[None, :], np.eye(nc))
                N += coef * R.T @ R
        return N


def _vertex_constants(vc, geo, materials, boundary, interior, need_delta):
    L = _Local(vc, geo, boundary)
    n = L.n
    nsub = len(vc.subcells)
    area = geo.sc_area[vc.subcells]
    C = materials.tensor()
    h_s = float(geo.cell_diameter[vc.cells].max())

    # flow
    Jp, mean_p = L.form_pieces(vc.Gp[:, None], 1, boundary.p_kind)
    Mc = np.zeros((n, n))
    Rc = Jp.copy()
    Rd = Jp.copy()
    tests_p = L.fv_tests(mean_p, 1)
    for i in range(nsub):
        K = L.cell_of(i)
        G = vc.Gp[i]  # (2, n)
        kG = materials.permeability[K] @ G
        Rc += area[i] * G.T @ kG
        Rd += area[i] * G.T @ G
        for mn, D in tests_p[i]:
            Mc += np.outer(D[0], mn @ kG)
    theta_c = _min_generalized(Mc, Rc)

    # mechanics
    Ju, mean_u = L.form_pieces(vc.Guu, 2, boundary.u_kind)
    Ma = np.zeros((2 * n, 2 * n))
    Ra = Ju.copy()
    tests_u = L.fv_tests(mean_u, 2)
    for i in range(nsub):
        K = L.cell_of(i)
        G = vc.Guu[i]  # (2, 2, 2n)
        S = np.einsum("ijkl,klc->ijc", C[K], G)
        Ra += area[i] * np.einsum("ijc,ijd->cd", G, S)
        for mn, D in tests_u[i]:
            t = np.einsum("ijc,j->ic", S, mn)  # traction map (2, 2n)
            Ma += t.T @ D
    theta_a = _min_generalized(Ma, Ra)

    theta_d = math.nan
    if need_delta and interior:
        Dl = np.zeros((n, n))
        for i in range(nsub):
            K = L.cell_of(i)
            Dl[vc.local_cell[i]] += materials.alpha[K] * area[i] * np.trace(vc.Gup[i])
        theta_d = _min_generalized(Dl, h_s**2 * Rd)

    # asymmetry of the coupling terms
    Np = L.gamma_gram(1, boundary.p_kind)
    Nu = L.gamma_gram(2, boundary.u_kind)
    N0 = np.zeros((n, n))
    np.add.at(N0, (vc.local_cell, vc.local_cell), area)
    L1 = np.zeros((2 * n, n))
    L2 = np.zeros((n, 2 * n))
    ref1 = ref2 = 0.0
    for i in range(nsub):
        K = L.cell_of(i)
        c = vc.local_cell[i]
        S = np.einsum("ijkl,klc->ijc", C[K], vc.Gup[i])  # (2, 2, n)
        for mn, D in tests_u[i]:
            term = D.T @ np.einsum("ijc,j->ic", S, mn)
            L1 += term
            ref1 = max(ref1, np.abs(term).max())
            term = materials.alpha[K] * (mn @ D)
            L2[c] -= term
            ref2 = max(ref2, np.abs(term).max())
        L2[c] += materials.alpha[K] * area[i] * np.trace(vc.Guu[i])
    t1 = _operator_norm(L1, Nu, Np, ref1) / h_s
    t2 = _operator_norm(L2, N0, Nu, ref2)
    return theta_a, theta_c, theta_d, t1, t2


def theta_b_estimate(system) -> float:
    """Smallest nonzero singular value of the divergence coupling.

    Pressures are measured in the mean-free area-weighted l2 norm and
    displacements in the discrete H1 norm with the displacement
    Dirichlet faces; dense, so only meant for coarse meshes.
    """
    from .dfield import gamma

    geo = system.geometry
    mesh = geo.mesh
    n = mesh.n_cells
    dmask = system.boundary.u_kind == DIRICHLET
    # Gram of norm_T built column by column from its polarization
    E = np.eye(n)
    rows = []
    for j in range(n):
        g = gamma(E[j], geo, dmask)
        rows.append(g[geo.hf_face] - E[j][geo.hf_cell])
    Dm = np.array(rows).T  # (n_hf, n)
    wts = geo.face_length[geo.hf_face] / geo.hf_dist
    Nv = Dm.T @ (wts[:, None] * Dm)
    Nv2 = np.kron(Nv, np.eye(2))
    Lv = np.linalg.cholesky(Nv2)
    B = system.B1.toarray() @ np.linalg.inv(Lv).T
    sq = np.sqrt(geo.cell_area)
    Q, _ = np.linalg.qr(np.column_stack([sq, np.eye(n)[:, : n - 1]]))
    Q = Q[:, 1:]
    K = Q.T @ (B / sq[:, None])
    sv = np.linalg.svd(K, compute_uv=False)
    sv = sv[sv > 1e-12 * sv.max()]
    return float(sv.min()) if sv.size else 0.0


def check_conditions(
    conds,
    geo: Geometry,
    materials: MaterialField,
    boundary: BoundarySpec,
    system=None,
    theta_b: bool = False,
) -> ConditionReport:
    """Evaluate the local constants for every condensed vertex.

    ``theta_b`` requests the dense global estimate, which needs the
    assembled ``system`` and at most ``THETA_B_MAX_CELLS`` cells.
    Negative constants are reported, never raised.
    """
    bverts = set(np.flatnonzero(geo.mesh.boundary_vertices()).tolist())
    nv = len(conds)
    out = {k: np.full(nv, math.nan) for k in ("a", "c", "d", "t1", "t2")}
    verts = np.array([vc.vertex for vc in conds], dtype=np.int64)
    for j, vc in enumerate(conds):
        vals = _vertex_constants(vc, geo, materials, boundary, vc.vertex not in bverts, True)
        for key, v in zip(("a", "c", "d", "t1", "t2"), vals):
            out[key][j] = v
    tb = math.nan
    if theta_b:
        if system is None:
            raise ValueError("theta_b needs the assembled system")
        if geo.mesh.n_cells > THETA_B_MAX_CELLS:
            raise ValueError(f"theta_b is limited to {THETA_B_MAX_CELLS} cells")
        tb = theta_b_estimate(system)
    return ConditionReport(verts, out["a"], out["c"], out["d"], out["t1"], out["t2"], tb)
