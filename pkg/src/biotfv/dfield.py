"""Discrete function spaces on a mesh, their norms and the maps between them.

Three representations are used:

* :class:`CellField` -- one value per cell (piecewise constants);
* :class:`SubfaceField` -- cell values plus, for every subface, one value
  per adjacent cell and quadrature point (discontinuous across faces);
* :class:`FaceContinuousField` -- cell values plus one shared value per
  subface.

Vector-valued data carry a trailing component axis of length 2.  Subface
data are stored per subface with a "side" axis: side 0 belongs to the
orientation cell (lowest id), side 1 to the other cell; side 1 is unused
(NaN) on boundary subfaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .mesh import Geometry

FIELD_HEADER = "biotfv-field v1"


@dataclass(frozen=True)
class CellField:
    """Piecewise-constant field; ``values`` has shape (n_cells,) or (n_cells, 2)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2) or (v.ndim == 2 and v.shape[1] != 2):
            raise ValueError("cell values must have shape (n,) or (n, 2)")
        object.__setattr__(self, "values", v)

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 2

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SubfaceField:
    """Cell values plus two-sided quadrature-point values on every subface.

    Attributes
    ----------
    cell : ndarray, shape (n_cells,) or (n_cells, 2)
    values : ndarray, shape (n_subfaces, 2, q) or (n_subfaces, 2, q, 2)
    weights : ndarray, shape (n_subfaces, q)
        Quadrature weights; each row sums to the subface length.
    """

    cell: np.ndarray
    values: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class FaceContinuousField:
    """Cell values plus a single value per subface."""

    cell: np.ndarray
    values: np.ndarray  # (n_subfaces,) or (n_subfaces, 2)


AnyField = Union[CellField, SubfaceField, FaceContinuousField, Callable]


def _dirichlet_mask(geo: Geometry, dirichlet) -> np.ndarray:
    """Boolean face mask; ``None`` marks every boundary face as Dirichlet."""
    mesh = geo.mesh
    if dirichlet is None:
        return mesh.face_cells[:, 1] < 0
    d = np.asarray(dirichlet)
    if d.dtype == bool:
        return d
    if d.dtype == object:
        return d == "D"
    mask = np.zeros(mesh.n_faces, dtype=bool)
    mask[d.astype(np.int64)] = True
    return mask


def _cells(u) -> np.ndarray:
    if isinstance(u, CellField):
        return u.values
    if isinstance(u, (SubfaceField, FaceContinuousField)):
        return np.asarray(u.cell, dtype=float)
    return np.asarray(u, dtype=float)


def _sq(x: np.ndarray) -> np.ndarray:
    """Squared magnitude over an optional trailing component axis."""
    return x**2 if x.ndim == 1 else (x**2).sum(axis=-1)


# ----------------------------------------------------------------- cell norms


def gamma(u, geo: Geometry, dirichlet=None) -> np.ndarray:
    """Distance-weighted face values of a cell field (zero on Dirichlet faces)."""
    uK = _cells(u)
    num = np.zeros((geo.mesh.n_faces,) + uK.shape[1:])
    den = np.zeros(geo.mesh.n_faces)
    if np.any(geo.hf_dist <= 0):
        raise ValueError("non-positive cell-to-face distance")
    w = 1.0 / geo.hf_dist
    np.add.at(num, geo.hf_face, (w * uK[geo.hf_cell].T).T)
    np.add.at(den, geo.hf_face, w)
    out = (num.T / den).T
    out[_dirichlet_mask(geo, dirichlet)] = 0.0
    return out


def gamma_face(u, geo: Geometry, face: int, dirichlet=None):
    """Distance-weighted value of ``u`` on one face."""
    return gamma(u, geo, dirichlet)[face]


def inner_T(u, v, geo: Geometry, dirichlet=None) -> float:
    """Discrete H1-type inner product of two cell fields."""
    gu, gv = gamma(u, geo, dirichlet), gamma(v, geo, dirichlet)
    uK, vK = _cells(u), _cells(v)
    du = gu[geo.hf_face] - uK[geo.hf_cell]
    dv = gv[geo.hf_face] - vK[geo.hf_cell]
    prod = du * dv if du.ndim == 1 else (du * dv).sum(axis=1)
    return float(np.sum(geo.face_length[geo.hf_face] / geo.hf_dist * prod))


def norm_T(u, geo: Geometry, dirichlet=None) -> float:
    return float(np.sqrt(max(inner_T(u, u, geo, dirichlet), 0.0)))


def norm_T_local(u, geo: Geometry, dirichlet=None) -> np.ndarray:
    """Squared per-vertex contributions to ``norm_T(u)**2``."""
    g = gamma(u, geo, dirichlet)
    uK = _cells(u)
    out = np.zeros(geo.mesh.n_vertices)
    for a in range(2):
        hf = geo.sc_hf[:, a]
        sf = geo.sc_subfaces[:, a]
        d = g[geo.hf_face[hf]] - uK[geo.sc_cell]
        np.add.at(out, geo.sc_vertex, geo.sf_length[sf] / geo.hf_dist[hf] * _sq(d))
    return out


def norm_T0(u, geo: Geometry) -> float:
    """Area-weighted l2 norm."""
    uK = _cells(u)
    return float(np.sqrt(np.sum(geo.cell_area * _sq(uK))))


def quotient_seminorm(u, geo: Geometry) -> float:
    """``norm_T0`` of ``u`` minus its area-weighted mean (distance to constants)."""
    uK = _cells(u)
    mean = np.tensordot(geo.cell_area, uK, axes=1) / geo.cell_area.sum()
    return norm_T0(uK - mean, geo)


# --------------------------------------------------------------- subface data


def jumps(field: SubfaceField, geo: Geometry) -> np.ndarray:
    """Jump (orientation side minus other side) per subface and point; 0 on the boundary."""
    v = field.values
    out = v[:, 0] - v[:, 1]
    bnd = geo.sf_slots[:, 1] < 0
    out[bnd] = 0.0
    return out


def jump(field: SubfaceField, geo: Geometry, subface: int, beta: int):
    return jumps(field, geo)[subface, beta]


def averages(field: SubfaceField, geo: Geometry) -> np.ndarray:
    """Weighted two-sided mean per subface (one-sided on the boundary)."""
    v = field.values
    bnd = geo.sf_slots[:, 1] < 0
    both = np.where(
        bnd.reshape((-1,) + (1,) * (v.ndim - 2)), v[:, 0], 0.5 * (v[:, 0] + v[:, 1])
    )
    w = field.weights / field.weights.sum(axis=1, keepdims=True)
    return np.einsum("sq,sq...->s...", w, both)


def average(field: SubfaceField, geo: Geometry, subface: int):
    return averages(field, geo)[subface]


def _slot_side(geo: Geometry) -> np.ndarray:
    """For every (subcell, a): which side of its subface the subcell occupies."""
    sf = geo.sc_subfaces
    return np.where(geo.sf_slots[sf, 0] == np.arange(len(sf))[:, None], 0, 1)


def norm_D_local(field: SubfaceField, geo: Geometry) -> np.ndarray:
    """Squared per-vertex contributions to ``norm_D(field)**2``."""
    avg = averages(field, geo)
    jmp = jumps(field, geo)
    wn = field.weights / field.weights.sum(axis=1, keepdims=True)
    jterm = np.einsum("sq,sq->s", wn, _sq(jmp) if jmp.ndim == 3 else jmp**2)
    uK = np.asarray(field.cell, dtype=float)
    out = np.zeros(geo.mesh.n_vertices)
    for a in range(2):
        sf = geo.sc_subfaces[:, a]
        hf = geo.sc_hf[:, a]
        term = _sq(uK[geo.sc_cell] - avg[sf]) + jterm[sf]
        np.add.at(out, geo.sc_vertex, geo.sc_area / geo.hf_dist[hf] ** 2 * term)
    return out


def norm_D(field: SubfaceField, geo: Geometry) -> float:
    return float(np.sqrt(norm_D_local(field, geo).sum()))


def norm_C(field: FaceContinuousField, geo: Geometry, q: int = 1) -> float:
    return norm_D(embed_D(field, geo, q), geo)


# ---------------------------------------------------------------- projections


def project_T(field: AnyField, geo: Geometry) -> CellField:
    """Cell values of a discrete field, or samples at cell centers of a function."""
    if isinstance(field, CellField):
        return field
    if isinstance(field, (SubfaceField, FaceContinuousField)):
        return CellField(np.asarray(field.cell, dtype=float))
    if callable(field):
        return CellField(np.asarray(field(geo.cell_center), dtype=float))
    raise TypeError(f"cannot project {type(field).__name__}")


def project_C(field: SubfaceField, geo: Geometry) -> FaceContinuousField:
    """Replace two-sided subface values by their weighted mean."""
    return FaceContinuousField(np.asarray(field.cell, dtype=float), averages(field, geo))


def embed_D(field: FaceContinuousField, geo: Geometry, q: int = 1, weights=None) -> SubfaceField:
    """Copy each subface value to both sides and all ``q`` quadrature points."""
    v = np.asarray(field.values, dtype=float)
    vals = np.repeat(np.repeat(v[:, None, None], 2, axis=1), q, axis=2)
    bnd = geo.sf_slots[:, 1] < 0
    vals[bnd, 1] = np.nan
    if weights is None:
        weights = np.repeat(geo.sf_length[:, None] / q, q, axis=1)
    return SubfaceField(np.asarray(field.cell, dtype=float), vals, weights)


def pin_dirichlet(field: SubfaceField, geo: Geometry, dirichlet=None, value=0.0) -> SubfaceField:
    """Overwrite the values on Dirichlet subfaces with ``value``."""
    mask = _dirichlet_mask(geo, dirichlet)[geo.sf_face]
    vals = field.values.copy()
    vals[mask, 0] = value
    return SubfaceField(field.cell, vals, field.weights)


def cell_to_subface(u, geo: Geometry, q: int = 1) -> SubfaceField:
    """Subface field whose every subface value equals its own cell value."""
    uK = _cells(u)
    n_sf = len(geo.sf_face)
    shape = (n_sf, 2, q) + uK.shape[1:]
    vals = np.full(shape, np.nan)
    for side in range(2):
        sc = geo.sf_slots[:, side]
        ok = sc >= 0
        vals[ok, side] = uK[geo.sc_cell[sc[ok]]][:, None]
    w = np.repeat(geo.sf_length[:, None] / q, q, axis=1)
    return SubfaceField(uK.copy(), vals, w)


# ------------------------------------------------------------------------- io


def save_field(path, values) -> None:
    """Write a cell field snapshot."""
    v = _cells(values)
    kind = "cell-vector" if v.ndim == 2 else "cell-scalar"
    rows = v.reshape(len(v), -1).tolist()
    body = "\n".join(" ".join(repr(x) for x in r) for r in rows)
    Path(path).write_text(f"{FIELD_HEADER}\n{kind}\n{len(v)}\n{body}\n")


def load_field(path) -> CellField:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != FIELD_HEADER:
        raise ValueError(f"{path}: missing '{FIELD_HEADER}' header")
    kind = lines[1]
    if kind not in ("cell-scalar", "cell-vector"):
        raise ValueError(f"{path}: unknown field kind {kind!r}")
    n = int(lines[2])
    data = np.array([[float(x) for x in ln.split()] for ln in lines[3:3 + n]])
    if len(data) != n:
        raise ValueError(f"{path}: expected {n} rows, found {len(data)}")
    width = 2 if kind == "cell-vector" else 1
    if data.shape[1] != width:
        raise ValueError(f"{path}: rows must hold {width} values")
    return CellField(data if width == 2 else data[:, 0])
