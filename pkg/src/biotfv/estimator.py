"""Estimator-style facade over discretization and solve.

``fit`` performs the expensive, parameter-independent work (geometry, local
condensation, stencils, assembly); ``solve`` and ``predict`` reuse it for
any sources and ``(rho, tau)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .assembly import RESIDUAL_TOL, Solution, balanced_initial_state, discretize, solve_static, time_march
from .materials import MaterialField
from .mesh import BoundarySpec, MeshTriplet


class BiotFV(BaseEstimator):
    """Cell-centered finite volume solver for the quasi-static Biot system.

    Parameters
    ----------
    variant : {'general', 'simplex-symmetric', 'mpfa-o'} or None
        Local problem variant; None picks the symmetric single-point
        variant on triangulations and the least-squares one otherwise.
    rho, tau : float or None
        Compressibility and time step used by ``solve``; None falls back
        to the fitted material field.
    tol : float
        Relative residual accepted from the direct solver.

    Attributes
    ----------
    system_ : GlobalBiotSystem
    stencils_ : FaceStencils
    condensations_ : list of VertexCondensation
    """

    def __init__(self, variant=None, rho=None, tau=None, tol=RESIDUAL_TOL):
        self.variant = variant
        self.rho = rho
        self.tau = tau
        self.tol = tol

    def fit(self, mesh: MeshTriplet, materials: MaterialField | None = None, boundary: BoundarySpec | None = None):
        materials = materials if materials is not None else MaterialField.isotropic(mesh.n_cells)
        boundary = boundary if boundary is not None else BoundarySpec.all_dirichlet(mesh)
        system, conds = discretize(mesh, materials, boundary, self.variant)
        self.system_ = system
        self.stencils_ = system.stencils
        self.condensations_ = conds
        self.n_cells_ = mesh.n_cells
        return self

    def solve(self, f_u=None, f_p=None) -> Solution:
        """Static solve with body force ``f_u`` and mass source ``f_p`` (callables or None)."""
        check_is_fitted(self, "system_")
        tau = self.system_.materials.tau if self.tau is None else float(self.tau)
        rhs = self.system_.rhs(f_u, f_p, tau=tau)
        return solve_static(self.system_, rhs, rho=self.rho, tau=tau, tol=self.tol)

    def predict(self, f_u=None, f_p=None) -> np.ndarray:
        """Cell values as an (n_cells, 3) array of ``(u1, u2, p)``."""
        sol = self.solve(f_u, f_p)
        return np.column_stack([sol.u, sol.p])

    def march(self, p0, steps: int, forcing=None) -> list[np.ndarray]:
        """Backward-Euler trajectory from pressure ``p0`` with balanced displacement."""
        check_is_fitted(self, "system_")
        x0 = balanced_initial_state(self.system_, p0)
        return time_march(self.system_, x0, steps, self.rho, self.tau, forcing)
