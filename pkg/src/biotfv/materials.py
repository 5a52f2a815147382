"""Per-cell material parameters of the Biot system."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

MAT_HEADER = "biotfv-mat v1"

# Voigt index of the symmetric pair (i, j): xx -> 0, yy -> 1, xy -> 2
_VOIGT = np.array([[0, 2], [2, 1]])


@dataclass(frozen=True)
class MaterialField:
    """Stiffness, Biot coefficient, compressibility and permeability per cell.

    Attributes
    ----------
    stiffness : ndarray, shape (n, 3, 3)
        Voigt matrices acting on ``(e_xx, e_yy, 2 e_xy)`` and returning
        ``(s_xx, s_yy, s_xy)``.
    alpha, rho : ndarray, shape (n,)
    permeability : ndarray, shape (n, 2, 2)
    tau : float
        Time-step size multiplying the flux term.
    """

    stiffness: np.ndarray
    alpha: np.ndarray
    rho: np.ndarray
    permeability: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        C = np.asarray(self.stiffness, dtype=float)
        n = C.shape[0]
        for name, arr, shape in (
            ("stiffness", C, (n, 3, 3)),
            ("alpha", np.asarray(self.alpha, dtype=float), (n,)),
            ("rho", np.asarray(self.rho, dtype=float), (n,)),
            ("permeability", np.asarray(self.permeability, dtype=float), (n, 2, 2)),
        ):
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)

    @property
    def n_cells(self) -> int:
        return len(self.alpha)

    @classmethod
    def isotropic(
        cls,
        n_cells: int,
        lam: float = 1.0,
        mu: float = 1.0,
        alpha: float = 1.0,
        rho: float = 1.0,
        k: float = 1.0,
        tau: float = 1.0,
    ) -> "MaterialField":
        """Homogeneous isotropic material with Lamé parameters ``lam`` and ``mu``."""
        V = np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])
        return cls(
            stiffness=np.repeat(V[None], n_cells, axis=0),
            alpha=np.full(n_cells, float(alpha)),
            rho=np.full(n_cells, float(rho)),
            permeability=np.repeat((k * np.eye(2))[None], n_cells, axis=0),
            tau=float(tau),
        )

    def with_parameters(self, rho: float | None = None, tau: float | None = None) -> "MaterialField":
        """Copy with a uniform compressibility and/or a new time step."""
        out = self
        if rho is not None:
            out = replace(out, rho=np.full(self.n_cells, float(rho)))
        if tau is not None:
            out = replace(out, tau=float(tau))
        return out

    def tensor(self) -> np.ndarray:
        """Full fourth-order stiffness, shape (n, 2, 2, 2, 2)."""
        cached = self.__dict__.get("_tensor")
        if cached is None:
            i = _VOIGT
            cached = self.stiffness[:, i[:, :, None, None], i[None, None, :, :]]
            cached.flags.writeable = False
            object.__setattr__(self, "_tensor", cached)
        return cached

    def validate(self, tol: float = 1e-12) -> None:
        """Check symmetry and definiteness of the coefficients.

        Raises
        ------
        ValueError
            On the first violated constraint.
        """
        C, k = self.stiffness, self.permeability
        if not np.allclose(C, np.swapaxes(C, 1, 2), atol=tol * max(1.0, np.abs(C).max())):
            raise ValueError("stiffness matrices must be symmetric")
        if np.any(np.linalg.eigvalsh(C) <= 0):
            raise ValueError("stiffness must be positive definite on symmetric strains")
        if not np.allclose(k, np.swapaxes(k, 1, 2)):
            raise ValueError("permeability must be symmetric")
        if np.any(np.linalg.eigvalsh(k) < 0):
            raise ValueError("permeability must be positive semidefinite")
        if np.any(self.alpha < 0) or np.any(self.rho < 0) or self.tau < 0:
            raise ValueError("alpha, rho and tau must be non-negative")


def save_materials(mat: MaterialField, path) -> None:
    lines = [MAT_HEADER, f"tau {mat.tau!r}"]
    for K in range(mat.n_cells):
        V, k = mat.stiffness[K], mat.permeability[K]
        mu = V[2, 2]
        lam = V[0, 1]
        vals = [lam, mu, mat.alpha[K], mat.rho[K], k[0, 0], k[0, 1], k[1, 1]]
        lines.append(" ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_materials(path, n_cells: int) -> MaterialField:
    """Read a materials file for a mesh with ``n_cells`` cells.

    Each data line holds ``lambda mu alpha rho kxx kxy kyy`` for one cell.
    A single ``uniform`` line, optionally followed by those seven values,
    applies to every cell (unit values if none are given).  An optional
    ``tau <value>`` line sets the time step.
    """
    lines = [ln.split("#")[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != MAT_HEADER:
        raise ValueError(f"{path}: missing '{MAT_HEADER}' header")
    tau = 1.0
    rows = []
    uniform = None
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "tau":
            tau = float(parts[1])
        elif parts[0] == "uniform":
            uniform = [float(v) for v in parts[1:]] or [1, 1, 1, 1, 1, 0, 1]
        else:
            rows.append([float(v) for v in parts])
    if uniform is not None:
        if rows:
            raise ValueError(f"{path}: 'uniform' cannot be mixed with per-cell lines")
        rows = [uniform] * n_cells
    if len(rows) != n_cells:
        raise ValueError(f"{path}: expected {n_cells} cell lines, found {len(rows)}")
    data = np.array(rows, dtype=float)
    if data.shape[1] != 7:
        raise ValueError(f"{path}: each line needs 7 values (lambda mu alpha rho kxx kxy kyy)")
    lam, mu = data[:, 0], data[:, 1]
    C = np.zeros((n_cells, 3, 3))
    C[:, 0, 0] = C[:, 1, 1] = lam + 2 * mu
    C[:, 0, 1] = C[:, 1, 0] = lam
    C[:, 2, 2] = mu
    k = np.stack([np.stack([data[:, 4], data[:, 5]], -1), np.stack([data[:, 5], data[:, 6]], -1)], 1)
    mat = MaterialField(C, data[:, 2], data[:, 3], k, tau)
    mat.validate()
    return mat
