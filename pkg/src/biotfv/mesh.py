"""Polygonal meshes on the unit square: construction, perturbation, geometry.

A mesh is the triplet of cells, faces and vertices.  Every cell is split
into one subcell per vertex (the quadrilateral spanned by the cell center,
the two adjacent face midpoints and the vertex) and every face into two
subfaces at its midpoint.  The local problems of :mod:`biotfv.localop`
live on these pieces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MESH_HEADER = "biotfv-mesh v1"
SIDES = ("bottom", "right", "top", "left")
_GAUSS2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


@dataclass(eq=False)
class MeshTriplet:
    """Cells, faces and vertices of a conforming 2D polygonal mesh.

    Attributes
    ----------
    vertices : ndarray, shape (n_vertices, 2)
    cells : tuple of int arrays
        Counter-clockwise vertex loops.
    faces : ndarray, shape (n_faces, 2)
        Vertex pairs, ordered along the loop of the orientation cell
        ``face_cells[f, 0]`` (the adjacent cell with the lowest id).
    face_cells : ndarray, shape (n_faces, 2)
        Adjacent cells; the second entry is -1 on the boundary.
    cell_faces : tuple of int arrays
        ``cell_faces[K][i]`` is the face joining ``cells[K][i]`` and
        ``cells[K][i+1]``.
    spacing : float or None
        Nominal mesh spacing used as the perturbation scale.
    """

    vertices: np.ndarray
    cells: tuple
    faces: np.ndarray
    face_cells: np.ndarray
    cell_faces: tuple
    spacing: float | None = None
    _vertex_cells: list | None = field(default=None, repr=False)
    _vertex_faces: list | None = field(default=None, repr=False)

    @classmethod
    def from_cells(cls, vertices, cells, spacing: float | None = None) -> "MeshTriplet":
        """Build the face list from CCW cell loops."""
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        loops = tuple(np.asarray(c, dtype=np.int64) for c in cells)
        nv = len(vertices)
        lookup: dict[tuple[int, int], int] = {}
        faces: list[tuple[int, int]] = []
        fcells: list[list[int]] = []
        cfaces = []
        for k, loop in enumerate(loops):
            if len(loop) < 3:
                raise MeshError(f"cell {k} has fewer than 3 vertices")
            if loop.min() < 0 or loop.max() >= nv:
                raise MeshError(f"cell {k} references a missing vertex")
            nxt = np.roll(loop, -1)
            ids = np.empty(len(loop), dtype=np.int64)
            for i, (a, b) in enumerate(zip(loop.tolist(), nxt.tolist())):
                key = (a, b) if a < b else (b, a)
                f = lookup.get(key)
                if f is None:
                    f = len(faces)
                    lookup[key] = f
                    faces.append((a, b))
                    fcells.append([k, -1])
                else:
                    if fcells[f][1] != -1 or fcells[f][0] == k:
                        raise MeshError(f"face {key} shared by more than two cells")
                    if faces[f] != (b, a):
                        raise MeshError(f"cells {fcells[f][0]} and {k} have inconsistent orientation")
                    fcells[f][1] = k
                ids[i] = f
            cfaces.append(ids)
        mesh = cls(
            vertices=vertices,
            cells=loops,
            faces=np.array(faces, dtype=np.int64).reshape(-1, 2),
            face_cells=np.array(fcells, dtype=np.int64).reshape(-1, 2),
            cell_faces=tuple(cfaces),
            spacing=spacing,
        )
        areas = _signed_areas(vertices, loops)
        bad = np.flatnonzero(areas <= 0)
        if bad.size:
            raise MeshError(f"cells {bad[:5].tolist()} are not counter-clockwise")
        return mesh

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    @property
    def is_simplex(self) -> bool:
        return all(len(c) == 3 for c in self.cells)

    def _adjacency(self):
        if self._vertex_cells is None:
            vc = [[] for _ in range(self.n_vertices)]
            for k, loop in enumerate(self.cells):
                for v in loop.tolist():
                    vc[v].append(k)
            vf = [[] for _ in range(self.n_vertices)]
            for f, (a, b) in enumerate(self.faces.tolist()):
                vf[a].append(f)
                vf[b].append(f)
            self._vertex_cells = [np.array(sorted(x), dtype=np.int64) for x in vc]
            self._vertex_faces = [np.array(sorted(x), dtype=np.int64) for x in vf]
        return self._vertex_cells, self._vertex_faces

    def vertex_cells(self, s: int) -> np.ndarray:
        """Cells sharing vertex ``s``, ascending."""
        return self._adjacency()[0][s]

    def vertex_faces(self, s: int) -> np.ndarray:
        """Faces with endpoint ``s``, ascending."""
        return self._adjacency()[1][s]

    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.faces[self.boundary_faces].ravel()] = True
        return mask

    def face_sides(self, tol: float = 1e-12) -> np.ndarray:
        """Side name of the unit square each face lies on ('' for interior)."""
        out = np.full(self.n_faces, "", dtype=object)
        xy = self.vertices[self.faces]
        for f in self.boundary_faces:
            (x0, y0), (x1, y1) = xy[f]
            if abs(y0) < tol and abs(y1) < tol:
                out[f] = "bottom"
            elif abs(x0 - 1) < tol and abs(x1 - 1) < tol:
                out[f] = "right"
            elif abs(y0 - 1) < tol and abs(y1 - 1) < tol:
                out[f] = "top"
            elif abs(x0) < tol and abs(x1) < tol:
                out[f] = "left"
            else:
                out[f] = "boundary"
        return out

    def with_vertices(self, vertices: np.ndarray) -> "MeshTriplet":
        """Same topology, moved vertices."""
        return MeshTriplet(
            vertices=np.asarray(vertices, dtype=float),
            cells=self.cells,
            faces=self.faces,
            face_cells=self.face_cells,
            cell_faces=self.cell_faces,
            spacing=self.spacing,
            _vertex_cells=self._vertex_cells,
            _vertex_faces=self._vertex_faces,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MeshTriplet):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and len(self.cells) == len(other.cells)
            and all(np.array_equal(a, b) for a, b in zip(self.cells, other.cells))
            and np.array_equal(self.faces, other.faces)
            and np.array_equal(self.face_cells, other.face_cells)
        )

    __hash__ = None


def _signed_areas(vertices: np.ndarray, loops: Sequence[np.ndarray]) -> np.ndarray:
    out = np.empty(len(loops))
    for k, loop in enumerate(loops):
        x, y = vertices[loop].T
        out[k] = 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    return out


# ----------------------------------------------------------------- generators


def build_cartesian(n: int) -> MeshTriplet:
    """Uniform n-by-n grid of squares on the unit square."""
    n = _check_n(n)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda i, j: j * (n + 1) + i  # noqa: E731
    cells = [
        [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]
        for j in range(n)
        for i in range(n)
    ]
    return MeshTriplet.from_cells(verts, cells, spacing=1.0 / n)


def build_triangular(n: int) -> MeshTriplet:
    """Cartesian grid with every square split along its (i,j)-(i+1,j+1) diagonal."""
    n = _check_n(n)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda i, j: j * (n + 1) + i  # noqa: E731
    cells = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            cells.append([a, b, c])
            cells.append([a, c, d])
    return MeshTriplet.from_cells(verts, cells, spacing=1.0 / n)


def build_dual(tri: MeshTriplet) -> MeshTriplet:
    """Centroid dual of a triangulation.

    One cell per primal vertex.  Dual vertices are triangle centroids and
    midpoints of primal boundary edges; a primal boundary vertex is kept as
    a dual vertex only where the boundary turns (a corner), so straight
    boundary stretches become single dual faces.
    """
    if not tri.is_simplex:
        raise MeshError("build_dual expects a triangulation")
    V = tri.vertices
    nt = tri.n_cells
    tris = np.array([c for c in tri.cells])
    centroids = V[tris].mean(axis=1)
    bfaces = tri.boundary_faces
    bmid_index = {int(f): nt + i for i, f in enumerate(bfaces)}
    points = [centroids, 0.5 * (V[tri.faces[bfaces, 0]] + V[tri.faces[bfaces, 1]])]
    extra: dict[int, int] = {}
    n_points = nt + len(bfaces)

    # fan of each primal vertex: start-neighbour -> (triangle, end-neighbour)
    fans: list[dict[int, tuple[int, int]]] = [dict() for _ in range(tri.n_vertices)]
    for t, (a, b, c) in enumerate(tris.tolist()):
        fans[a][b] = (t, c)
        fans[b][c] = (t, a)
        fans[c][a] = (t, b)
    edge_face = {}
    for f, (a, b) in enumerate(tri.faces.tolist()):
        edge_face[(a, b)] = f
        edge_face[(b, a)] = f

    cells = []
    for v in range(tri.n_vertices):
        fan = fans[v]
        ends = {e for _, e in fan.values()}
        starts = [x for x in fan if x not in ends]
        if not starts:  # interior vertex: closed cycle
            x0 = min(fan)
            loop, x = [], x0
            while True:
                t, x = fan[x]
                loop.append(t)
                if x == x0:
                    break
            cells.append(loop)
            continue
        if len(starts) != 1:
            raise MeshError(f"vertex {v} has a non-manifold fan")
        x = starts[0]
        loop = [bmid_index[edge_face[(v, x)]]]
        while x in fan:
            t, x = fan[x]
            loop.append(t)
        loop.append(bmid_index[edge_face[(v, x)]])
        d0 = V[starts[0]] - V[v]
        d1 = V[x] - V[v]
        cross = d0[0] * d1[1] - d0[1] * d1[0]
        if abs(cross) > 1e-12 * np.linalg.norm(d0) * np.linalg.norm(d1):
            if v not in extra:
                extra[v] = n_points + len(extra)
            loop.append(extra[v])
        cells.append(loop)
    if extra:
        points.append(V[list(extra.keys())])
    verts = np.vstack(points)
    dual = MeshTriplet.from_cells(verts, cells, spacing=tri.spacing)
    areas = _signed_areas(verts, dual.cells)
    if np.any(areas <= 1e-14 * areas.max()):
        raise MeshError("degenerate (zero-area) dual cell")
    return dual


def _check_n(n) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return int(n)


GENERATORS: dict[str, Callable[[int], MeshTriplet]] = {
    "A": build_cartesian,
    "B": build_triangular,
    "C": lambda n: build_dual(build_triangular(n)),
}


# ---------------------------------------------------------------- perturbation


def perturb(
    mesh: MeshTriplet,
    amplitude: float,
    seed: int,
    *,
    max_redraws: int = 100,
) -> MeshTriplet:
    """Randomly displace vertices by up to ``amplitude * h`` per coordinate.

    Interior vertices move in both coordinates; boundary vertices slide
    along their side of the unit square and corners stay fixed.  Offsets
    come from ``numpy.random.default_rng(seed)`` (PCG64).  When a draw makes
    some cell fail the star-shape test, only the vertices of the offending
    cells are redrawn from the same stream, at most ``max_redraws`` times.

    Raises
    ------
    MeshError
        If some cell stays invalid after all redraws.
    """
    if not 0.0 <= amplitude <= 0.5:
        raise ValueError("amplitude must lie in [0, 0.5]")
    if amplitude == 0.0:
        return mesh.with_vertices(mesh.vertices.copy())
    h = mesh.spacing if mesh.spacing is not None else _default_spacing(mesh)
    rng = np.random.default_rng(seed)
    base = mesh.vertices
    tol = 1e-12
    on_x0 = np.abs(base[:, 0]) < tol
    on_x1 = np.abs(base[:, 0] - 1) < tol
    on_y0 = np.abs(base[:, 1]) < tol
    on_y1 = np.abs(base[:, 1] - 1) < tol
    mask = np.ones_like(base)
    mask[on_x0 | on_x1, 0] = 0.0
    mask[on_y0 | on_y1, 1] = 0.0
    bnd = mesh.boundary_vertices()
    # boundary vertices off the unit-square sides (general domains) stay put
    mask[bnd & ~(on_x0 | on_x1 | on_y0 | on_y1)] = 0.0

    def draw(ids):
        return rng.uniform(-amplitude * h, amplitude * h, size=(len(ids), 2)) * mask[ids]

    allv = np.arange(mesh.n_vertices)
    verts = base + draw(allv)
    for attempt in range(max_redraws + 1):
        bad = _invalid_cells(verts, mesh.cells)
        if bad.size == 0:
            if attempt:
                logger.debug("perturb: %d local redraw rounds", attempt)
            return mesh.with_vertices(verts)
        if attempt == max_redraws:
            break
        ids = np.unique(np.concatenate([mesh.cells[k] for k in bad]))
        verts[ids] = base[ids] + draw(ids)
    raise MeshError(
        f"perturbation left {bad.size} non-star-shaped cells (first: {bad[:5].tolist()}); "
        "reduce the amplitude or change the seed"
    )


def _default_spacing(mesh: MeshTriplet) -> float:
    return float(np.sqrt(_signed_areas(mesh.vertices, mesh.cells).sum() / mesh.n_cells))


def _invalid_cells(vertices: np.ndarray, loops) -> np.ndarray:
    sizes = np.array([len(c) for c in loops])
    bad = []
    for m in np.unique(sizes):
        ids = np.flatnonzero(sizes == m)
        P = vertices[np.stack([loops[k] for k in ids])]
        bad.append(ids[~_star_shaped(P)])
    return np.sort(np.concatenate(bad)) if bad else np.zeros(0, dtype=np.int64)


def _star_shaped(P: np.ndarray) -> np.ndarray:
    """Star-shape test w.r.t. the centroid for a stack of polygons (n, m, 2)."""
    x, y = P[..., 0], P[..., 1]
    xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
    cr = x * yn - xn * y
    area = 0.5 * cr.sum(axis=1)
    safe = np.where(area > 0, area, 1.0)
    cx = ((x + xn) * cr).sum(axis=1) / (6 * safe)
    cy = ((y + yn) * cr).sum(axis=1) / (6 * safe)
    ax, ay = x - cx[:, None], y - cy[:, None]
    bx, by = xn - cx[:, None], yn - cy[:, None]
    fan = ax * by - ay * bx
    return (area > 0) & np.all(fan > 1e-14 * safe[:, None], axis=1)


def build_grid(kind: str, n: int, amplitude: float = 0.0, seed: int = 0) -> MeshTriplet:
    """Suite grid of type 'A' (squares), 'B' (triangles) or 'C' (dual polygons).

    Type C is the dual of the perturbed type-B triangulation, so its
    roughness comes from the triangle vertices.
    """
    kind = str(kind).upper()
    if kind == "A":
        mesh = build_cartesian(n)
    elif kind in ("B", "C"):
        mesh = build_triangular(n)
    else:
        raise ValueError(f"grid type must be one of A, B, C; got {kind!r}")
    if amplitude:
        mesh = perturb(mesh, amplitude, seed)
    return build_dual(mesh) if kind == "C" else mesh


# -------------------------------------------------------------------- geometry


@dataclass(eq=False)
class Geometry:
    """Measures, centers, normals, subcells, subfaces and quadrature.

    Cell-face pairs are stored as half-faces, one per edge of each cell
    loop.  Subcell ``i`` is attached to the start vertex of half-face ``i``,
    so subcells and half-faces share indices.  Subface ``2*f + j`` is the
    half of face ``f`` touching vertex ``faces[f, j]``.
    """

    mesh: MeshTriplet
    cell_area: np.ndarray
    cell_center: np.ndarray
    cell_diameter: np.ndarray
    face_length: np.ndarray
    face_center: np.ndarray
    face_normal: np.ndarray  # unit, out of face_cells[:, 0]
    cell_ptr: np.ndarray
    hf_cell: np.ndarray
    hf_face: np.ndarray
    hf_sign: np.ndarray
    hf_dist: np.ndarray
    sc_cell: np.ndarray
    sc_vertex: np.ndarray
    sc_area: np.ndarray
    sc_subfaces: np.ndarray  # (n_sc, 2): subfaces of previous and next edge
    sc_hf: np.ndarray  # (n_sc, 2): matching half-faces
    sf_face: np.ndarray
    sf_vertex: np.ndarray
    sf_length: np.ndarray
    sf_center: np.ndarray
    sf_slots: np.ndarray  # (n_sf, 2) subcells touching the subface, orientation cell first
    vertex_subcells: list
    vertex_subfaces: list
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def h(self) -> float:
        return float(self.cell_diameter.max())

    @property
    def n_subcells(self) -> int:
        return len(self.sc_cell)

    def cell_normal(self, K: int, f: int) -> np.ndarray:
        """Unit normal of face ``f`` pointing out of cell ``K``."""
        s = 1.0 if self.mesh.face_cells[f, 0] == K else -1.0
        return s * self.face_normal[f]

    def cell_face_distance(self, K: int, f: int) -> float:
        lo, hi = self.cell_ptr[K], self.cell_ptr[K + 1]
        j = np.flatnonzero(self.hf_face[lo:hi] == f)
        return float(self.hf_dist[lo + j[0]])

    def subface_points(self, rule: str = "gauss2", eta: float | None = None):
        """Quadrature points and weights per subface.

        Parameters
        ----------
        rule : {'gauss2', 'single'}
            Two-point Gauss, or a single point carrying the whole length.
        eta : float, optional
            For ``rule='single'``: position of the point measured from the
            face midpoint (0) toward the vertex (1).

        Returns
        -------
        points : ndarray, shape (n_sf, q, 2)
        weights : ndarray, shape (n_sf, q)
        """
        key = (rule, eta)
        if key in self._cache:
            return self._cache[key]
        V = self.mesh.vertices[self.sf_vertex]
        M = self.face_center[self.sf_face]
        if rule == "gauss2":
            t = _GAUSS2
            pts = V[:, None, :] + t[None, :, None] * (M - V)[:, None, :]
            w = np.repeat(0.5 * self.sf_length[:, None], 2, axis=1)
        elif rule == "single":
            e = 0.0 if eta is None else float(eta)
            pts = (M + e * (V - M))[:, None, :]
            w = self.sf_length[:, None].copy()
        else:
            raise ValueError(f"unknown quadrature rule {rule!r}")
        pts.flags.writeable = False
        w.flags.writeable = False
        self._cache[key] = (pts, w)
        return pts, w


def compute_geometry(mesh: MeshTriplet) -> Geometry:
    """Compute all measures of ``mesh``.

    Raises
    ------
    MeshError
        If a cell is not star-shaped with respect to its centroid.
    """
    V = mesh.vertices
    sizes = np.array([len(c) for c in mesh.cells], dtype=np.int64)
    ptr = np.concatenate([[0], np.cumsum(sizes)])
    v0 = np.concatenate(mesh.cells)
    v1 = np.concatenate([np.roll(c, -1) for c in mesh.cells])
    hf_face = np.concatenate(mesh.cell_faces)
    hf_cell = np.repeat(np.arange(mesh.n_cells), sizes)
    P0, P1 = V[v0], V[v1]
    cross = P0[:, 0] * P1[:, 1] - P1[:, 0] * P0[:, 1]
    area = 0.5 * np.add.reduceat(cross, ptr[:-1])
    cx = np.add.reduceat((P0[:, 0] + P1[:, 0]) * cross, ptr[:-1]) / (6 * area)
    cy = np.add.reduceat((P0[:, 1] + P1[:, 1]) * cross, ptr[:-1]) / (6 * area)
    center = np.column_stack([cx, cy])
    diam = np.array([_diameter(V[c]) for c in mesh.cells])

    fa, fb = V[mesh.faces[:, 0]], V[mesh.faces[:, 1]]
    tang = fb - fa
    flen = np.hypot(tang[:, 0], tang[:, 1])
    if np.any(flen <= 0):
        raise MeshError("zero-length face")
    fnormal = np.column_stack([tang[:, 1], -tang[:, 0]]) / flen[:, None]
    fcenter = 0.5 * (fa + fb)

    hf_sign = np.where(mesh.face_cells[hf_face, 0] == hf_cell, 1.0, -1.0)
    xk = center[hf_cell]
    hf_dist = np.einsum("ij,ij->i", fcenter[hf_face] - xk, fnormal[hf_face]) * hf_sign

    # subcell i sits at v0[i]; its previous half-face ends at v0[i]
    prev = np.arange(len(v0)) - 1
    prev[ptr[:-1]] = ptr[1:] - 1
    mid_prev = fcenter[hf_face[prev]]
    mid_next = fcenter[hf_face]
    t1 = _tri_area(xk, mid_prev, P0)
    t2 = _tri_area(xk, P0, mid_next)
    fan = _tri_area(xk, P0, P1)
    scale = area[hf_cell]
    bad = np.unique(hf_cell[(t1 <= 1e-14 * scale) | (t2 <= 1e-14 * scale) | (fan <= 1e-14 * scale)])
    if bad.size:
        raise MeshError(f"cells {bad[:5].tolist()} are not star-shaped with respect to their centroid")
    sc_area = t1 + t2

    nf = mesh.n_faces
    sf_face = np.repeat(np.arange(nf), 2)
    sf_vertex = mesh.faces.ravel()
    sf_length = np.repeat(0.5 * flen, 2)
    sf_center = 0.5 * (V[sf_vertex] + fcenter[sf_face])

    def subface_of(hf, vert):
        f = hf_face[hf]
        return 2 * f + (mesh.faces[f, 1] == vert).astype(np.int64)

    sc_hf = np.column_stack([prev, np.arange(len(v0))])
    sc_sf = np.column_stack([subface_of(prev, v0), subface_of(np.arange(len(v0)), v0)])

    slots = np.full((2 * nf, 2), -1, dtype=np.int64)
    for a in range(2):
        sf = sc_sf[:, a]
        first = mesh.face_cells[sf_face[sf], 0] == hf_cell
        slots[sf[first], 0] = np.arange(len(v0))[first]
        slots[sf[~first], 1] = np.arange(len(v0))[~first]

    order = np.argsort(v0, kind="stable")
    splits = np.searchsorted(v0[order], np.arange(mesh.n_vertices + 1))
    vsc = [order[splits[s]:splits[s + 1]] for s in range(mesh.n_vertices)]
    order_f = np.argsort(sf_vertex, kind="stable")
    splits_f = np.searchsorted(sf_vertex[order_f], np.arange(mesh.n_vertices + 1))
    vsf = [order_f[splits_f[s]:splits_f[s + 1]] for s in range(mesh.n_vertices)]

    return Geometry(
        mesh=mesh,
        cell_area=area,
        cell_center=center,
        cell_diameter=diam,
        face_length=flen,
        face_center=fcenter,
        face_normal=fnormal,
        cell_ptr=ptr,
        hf_cell=hf_cell,
        hf_face=hf_face,
        hf_sign=hf_sign,
        hf_dist=hf_dist,
        sc_cell=hf_cell,
        sc_vertex=v0,
        sc_area=sc_area,
        sc_subfaces=sc_sf,
        sc_hf=sc_hf,
        sf_face=sf_face,
        sf_vertex=sf_vertex,
        sf_length=sf_length,
        sf_center=sf_center,
        sf_slots=slots,
        vertex_subcells=vsc,
        vertex_subfaces=vsf,
    )


def _tri_area(a, b, c):
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _diameter(P: np.ndarray) -> float:
    d = P[:, None, :] - P[None, :, :]
    return float(np.sqrt((d**2).sum(-1).max()))


# ------------------------------------------------------------------- boundary

DIRICHLET = "D"
NEUMANN = "N"


def _zero_vec(x):
    return np.zeros((len(x), 2))


def _zero_scalar(x):
    return np.zeros(len(x))


@dataclass
class BoundarySpec:
    """Boundary condition kinds and data per boundary face.

    ``u_kind[f]`` and ``p_kind[f]`` hold ``'D'`` or ``'N'`` for boundary
    faces and ``''`` for interior ones.  Value callables take points of
    shape (n, 2) and return shape (n, 2) for displacement/traction data and
    (n,) for pressure/flux data.  Neumann flux data is the outward normal
    flux, Neumann traction data the traction vector.
    """

    u_kind: np.ndarray
    p_kind: np.ndarray
    g_u_dirichlet: Callable = _zero_vec
    g_u_neumann: Callable = _zero_vec
    g_p_dirichlet: Callable = _zero_scalar
    g_p_neumann: Callable = _zero_scalar

    def __post_init__(self):
        self.u_kind = np.asarray(self.u_kind, dtype=object)
        self.p_kind = np.asarray(self.p_kind, dtype=object)

    @classmethod
    def all_dirichlet(cls, mesh: MeshTriplet, **values) -> "BoundarySpec":
        kind = np.full(mesh.n_faces, "", dtype=object)
        kind[mesh.boundary_faces] = DIRICHLET
        return cls(kind.copy(), kind.copy(), **values)

    @classmethod
    def from_sides(cls, mesh: MeshTriplet, u: dict, p: dict, **values) -> "BoundarySpec":
        """Kinds per unit-square side, e.g. ``u={'left': 'D', 'right': 'N', ...}``.

        Sides missing from a dict default to Dirichlet.
        """
        sides = mesh.face_sides()
        uk = np.full(mesh.n_faces, "", dtype=object)
        pk = np.full(mesh.n_faces, "", dtype=object)
        for f in mesh.boundary_faces:
            uk[f] = u.get(sides[f], DIRICHLET)
            pk[f] = p.get(sides[f], DIRICHLET)
        return cls(uk, pk, **values)

    def validate(self, mesh: MeshTriplet) -> None:
        bf = mesh.boundary_faces
        for name, kind in (("displacement", self.u_kind), ("pressure", self.p_kind)):
            if len(kind) != mesh.n_faces:
                raise ValueError(f"{name} kinds must have one entry per face")
            vals = set(kind[bf].tolist())
            if not vals <= {DIRICHLET, NEUMANN}:
                raise ValueError(f"{name} boundary kinds must be 'D' or 'N', got {sorted(vals)}")
            if DIRICHLET not in vals:
                raise ValueError(f"the {name} Dirichlet boundary must contain at least one face")


# ------------------------------------------------------------------------- io


def save_mesh(mesh: MeshTriplet, path) -> None:
    lines = [MESH_HEADER]
    if mesh.spacing is not None:
        lines.append(f"spacing {mesh.spacing!r}")
    lines.append(str(mesh.n_vertices))
    lines.extend(f"{x!r} {y!r}" for x, y in mesh.vertices.tolist())
    lines.append(str(mesh.n_cells))
    lines.extend(" ".join(map(str, [len(c), *c.tolist()])) for c in mesh.cells)
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> MeshTriplet:
    tokens = [ln.strip() for ln in Path(path).read_text().splitlines()]
    tokens = [t for t in tokens if t and not t.startswith("#")]
    if not tokens or tokens[0] != MESH_HEADER:
        raise MeshError(f"{path}: missing '{MESH_HEADER}' header")
    i = 1
    spacing = None
    if tokens[i].startswith("spacing"):
        spacing = float(tokens[i].split()[1])
        i += 1
    try:
        nv = int(tokens[i])
        verts = np.array([[float(v) for v in tokens[i + 1 + j].split()] for j in range(nv)])
        i += 1 + nv
        nc = int(tokens[i])
        cells = []
        for j in range(nc):
            row = [int(v) for v in tokens[i + 1 + j].split()]
            if row[0] != len(row) - 1:
                raise MeshError(f"cell line {j}: count {row[0]} does not match {len(row) - 1} indices")
            cells.append(row[1:])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed mesh file ({exc})") from exc
    return MeshTriplet.from_cells(verts.reshape(-1, 2), cells, spacing=spacing)


BC_HEADER = "biotfv-bc v1"


def _side_of(points: np.ndarray) -> np.ndarray:
    """Index into SIDES of the nearest unit-square side for each point."""
    x, y = points[:, 0], points[:, 1]
    return np.argmin(np.stack([np.abs(y), np.abs(1 - x), np.abs(1 - y), np.abs(x)], -1), axis=1)


def _piecewise(table: dict, width: int):
    vals = np.array([table.get(s, [0.0] * width) for s in SIDES], dtype=float)

    def fn(x):
        out = vals[_side_of(np.asarray(x, float).reshape(-1, 2))]
        return out if width > 1 else out[:, 0]

    return fn


def load_boundary(path, mesh: MeshTriplet) -> BoundarySpec:
    """Read per-side boundary conditions with constant data.

    After the ``biotfv-bc v1`` header every line reads
    ``<u|p> <bottom|right|top|left> <D|N> <values>``: two values for
    displacement or traction, one for pressure or outward flux.  Sides
    not listed are Dirichlet with zero data.
    """
    lines = [ln.split("#")[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != BC_HEADER:
        raise ValueError(f"{path}: missing '{BC_HEADER}' header")
    kinds = {"u": {}, "p": {}}
    data = {(f, k): {} for f in "up" for k in (DIRICHLET, NEUMANN)}
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) < 3 or parts[0] not in kinds or parts[1] not in SIDES or parts[2] not in (DIRICHLET, NEUMANN):
            raise ValueError(f"{path}: cannot parse '{ln}'")
        width = 2 if parts[0] == "u" else 1
        vals = [float(v) for v in parts[3:]] or [0.0] * width
        if len(vals) != width:
            raise ValueError(f"{path}: '{ln}' needs {width} value(s)")
        kinds[parts[0]][parts[1]] = parts[2]
        data[(parts[0], parts[2])][parts[1]] = vals
    spec = BoundarySpec.from_sides(
        mesh,
        kinds["u"],
        kinds["p"],
        g_u_dirichlet=_piecewise(data[("u", DIRICHLET)], 2),
        g_u_neumann=_piecewise(data[("u", NEUMANN)], 2),
        g_p_dirichlet=_piecewise(data[("p", DIRICHLET)], 1),
        g_p_neumann=_piecewise(data[("p", NEUMANN)], 1),
    )
    spec.validate(mesh)
    return spec
