"""Cell-centered finite volume discretization of the quasi-static Biot system."""

from .assembly import (
    GlobalBiotSystem,
    Solution,
    SolverError,
    balanced_initial_state,
    discretize,
    solve_static,
    time_march,
)
from .conditions import ConditionReport, check_conditions
from .estimator import BiotFV
from .localop import VARIANTS, LocalSolveError, build_stencils, condense_all, condense_vertex
from .materials import MaterialField, load_materials, save_materials
from .mesh import (
    BoundarySpec,
    MeshError,
    MeshTriplet,
    build_grid,
    compute_geometry,
    load_boundary,
    load_mesh,
    perturb,
    save_mesh,
)
from .mms import manufactured_case, run_convergence, run_sweep
from .postproc import error_metrics, reconstruct

__all__ = [
    "BiotFV",
    "BoundarySpec",
    "ConditionReport",
    "GlobalBiotSystem",
    "LocalSolveError",
    "MaterialField",
    "MeshError",
    "MeshTriplet",
    "Solution",
    "SolverError",
    "VARIANTS",
    "balanced_initial_state",
    "build_grid",
    "build_stencils",
    "check_conditions",
    "compute_geometry",
    "condense_all",
    "condense_vertex",
    "discretize",
    "error_metrics",
    "load_boundary",
    "load_materials",
    "load_mesh",
    "manufactured_case",
    "perturb",
    "reconstruct",
    "run_convergence",
    "run_sweep",
    "save_materials",
    "save_mesh",
    "solve_static",
    "time_march",
]
