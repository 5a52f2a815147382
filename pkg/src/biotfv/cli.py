"""Command-line interface: ``biotfv {mesh,check,solve,march,convergence}``.

Exit codes: 0 success, 2 invalid arguments, 3 local conditions violated,
4 solver failure.  ``BIOTFV_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path


from . import mms
from .assembly import SolverError, balanced_initial_state, discretize, solve_static, time_march
from .conditions import check_conditions
from .dfield import load_field, norm_T0, save_field
from .localop import VARIANTS, LocalSolveError
from .materials import MaterialField, load_materials
from .mesh import GENERATORS, BoundarySpec, MeshError, build_grid, load_boundary, load_mesh, save_mesh
from .postproc import error_metrics, reconstruct, write_balance, write_errors, write_fluxes, write_tractions, write_vtk

logger = logging.getLogger("biotfv")

EXIT_OK, EXIT_USAGE, EXIT_CONDITIONS, EXIT_SOLVER = 0, 2, 3, 4
GRID_TYPES = tuple(sorted(GENERATORS))


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.options[name]
        except KeyError:
            raise AttributeError(name) from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _grids(text: str) -> list[str]:
    out = [g.upper() for g in text.replace(",", "")]
    bad = [g for g in out if g not in GRID_TYPES]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"invalid grid type(s) {text!r}; choose from {', '.join(GRID_TYPES)}")
    return out


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="biotfv", description="Cell-centered finite volumes for the Biot system.")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes for sweep jobs")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mesh", help="generate a (perturbed) suite grid")
    m.add_argument("--type", required=True, type=str.upper, choices=GRID_TYPES)
    m.add_argument("--n", required=True, type=int)
    m.add_argument("--perturb", type=float, default=0.0, help="amplitude as a fraction of h, in [0, 0.5]")
    m.add_argument("--seed", type=_seed, default=42, help="seed of the PCG64 generator")
    m.add_argument("--out", required=True, type=Path)

    def problem(sp, out_required=True):
        sp.add_argument("--mesh", required=True, type=Path)
        sp.add_argument("--materials", type=Path, help="materials file (unit isotropic if omitted)")
        sp.add_argument("--bc", type=Path, help="boundary file (homogeneous Dirichlet if omitted)")
        sp.add_argument("--variant", choices=sorted(VARIANTS), help="local problem variant")
        sp.add_argument("--out", required=out_required, type=Path)

    c = sub.add_parser("check", help="evaluate the local coercivity and asymmetry constants")
    problem(c, out_required=False)
    c.add_argument("--theta-b", action="store_true", help="also estimate the global inf-sup constant (dense)")

    s = sub.add_parser("solve", help="static solve")
    problem(s)
    s.add_argument("--tau", type=float, help="time step (materials file value if omitted)")
    s.add_argument("--rho", type=float, help="uniform compressibility override")
    s.add_argument("--mms", action="store_true", help="use the manufactured sources and write errors.csv")
    s.add_argument("--vtk", action="store_true", help="also write solution.vtk")

    t = sub.add_parser("march", help="backward-Euler time stepping")
    problem(t)
    t.add_argument("--tau", type=float, required=True)
    t.add_argument("--rho", type=float)
    t.add_argument("--steps", type=int, default=10)
    t.add_argument("--p0", type=Path, help="initial pressure field (manufactured pressure if omitted)")
    t.add_argument("--vtk", action="store_true")

    v = sub.add_parser("convergence", help="manufactured-solution refinement sweep")
    v.add_argument("--grids", type=_grids, default=list("ABC"))
    v.add_argument("--levels", type=int, default=6)
    v.add_argument("--base", type=int, default=4)
    v.add_argument("--rho-list", type=_float_list, default=list(mms.DEFAULT_RHO))
    v.add_argument("--tau-list", type=_float_list, default=list(mms.DEFAULT_TAU))
    v.add_argument("--amplitude", type=float, default=0.5)
    v.add_argument("--seed", type=_seed, default=42)
    v.add_argument("--variant", choices=sorted(VARIANTS))
    v.add_argument("--out", required=True, type=Path)
    return p


def _validate(parser: argparse.ArgumentParser, ns: argparse.Namespace) -> None:
    def bad(msg):
        parser.error(msg)  # exits with code 2

    if ns.threads < 1:
        bad("--threads must be at least 1")
    for name in ("tau", "rho"):
        val = getattr(ns, name, None)
        if val is not None and val < 0:
            bad(f"--{name} must be non-negative")
    if ns.command == "march" and ns.tau <= 0:
        bad("--tau must be positive for time marching")
    if ns.command == "mesh":
        if ns.n < 1:
            bad("--n must be positive")
        if not 0.0 <= ns.perturb <= 0.5:
            bad("--perturb must lie in [0, 0.5]")
    if ns.command == "march" and ns.steps < 1:
        bad("--steps must be positive")
    if ns.command == "convergence":
        if ns.levels < 3:
            bad("--levels must be at least 3")
        if ns.base < 1:
            bad("--base must be positive")
        if not 0.0 <= ns.amplitude <= 0.5:
            bad("--amplitude must lie in [0, 0.5]")
        if any(v < 0 for v in ns.rho_list + ns.tau_list):
            bad("--rho-list and --tau-list entries must be non-negative")


def parse_args(argv=None) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    _validate(parser, ns)
    opts = vars(ns).copy()
    return RunConfig(opts.pop("command"), opts)


# ------------------------------------------------------------------ commands


def _load_problem(cfg: RunConfig):
    mesh = load_mesh(cfg.mesh)
    mat = load_materials(cfg.materials, mesh.n_cells) if cfg.materials else MaterialField.isotropic(mesh.n_cells)
    bc = load_boundary(cfg.bc, mesh) if cfg.bc else BoundarySpec.all_dirichlet(mesh)
    return mesh, mat, bc


def _cmd_mesh(cfg: RunConfig) -> int:
    mesh = build_grid(cfg.type, cfg.n, cfg.perturb, cfg.seed)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    save_mesh(mesh, cfg.out)
    logger.info("wrote %s (%d cells)", cfg.out, mesh.n_cells)
    return EXIT_OK


def _cmd_check(cfg: RunConfig) -> int:
    mesh, mat, bc = _load_problem(cfg)
    system, conds = discretize(mesh, mat, bc, cfg.variant)
    report = check_conditions(conds, system.geometry, mat, bc, system=system, theta_b=cfg.theta_b)
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        report.write_csv(cfg.out / "conditions.csv")
    else:
        report.write_csv(sys.stdout)
    if not report.satisfied:
        logger.warning(
            "local conditions violated: min theta_a=%.3g theta_c=%.3g theta_delta=%.3g",
            report.min_theta_a, report.min_theta_c, report.min_theta_delta,
        )
        return EXIT_CONDITIONS
    return EXIT_OK


def _cmd_solve(cfg: RunConfig) -> int:
    mesh, mat, bc = _load_problem(cfg)
    system, _ = discretize(mesh, mat, bc, cfg.variant)
    tau = mat.tau if cfg.tau is None else cfg.tau
    rho = cfg.rho
    case = mms.manufactured_case(mat.rho.max() if rho is None else rho, tau) if cfg.mms else None
    f_u, f_p = (case.f_u, case.f_p) if case else (None, None)
    sol = solve_static(system, system.rhs(f_u, f_p, tau=tau), rho=rho, tau=tau)
    report = reconstruct(system, sol, f_u=f_u, f_p=f_p)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    save_field(out / "u.field", sol.u)
    save_field(out / "p.field", sol.p)
    write_fluxes(out / "fluxes.csv", report)
    write_tractions(out / "tractions.csv", report)
    write_balance(out / "balance.csv", report)
    if case:
        err = error_metrics(sol, report, case.u, case.p, case.stress, case.flux, system.geometry, case.rho, tau)
        write_errors(out / "errors.csv", err)
    if cfg.vtk:
        write_vtk(out / "solution.vtk", mesh, sol.u, sol.p)
    return EXIT_OK


def _cmd_march(cfg: RunConfig) -> int:
    mesh, mat, bc = _load_problem(cfg)
    system, _ = discretize(mesh, mat, bc, cfg.variant)
    geo = system.geometry
    p0 = load_field(cfg.p0).values if cfg.p0 else mms.exact_p(geo.cell_center)
    x0 = balanced_initial_state(system, p0)
    states = time_march(system, x0, cfg.steps, cfg.rho, cfg.tau)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "norm_u", "norm_p"])
        for j, x in enumerate(states):
            u, p = system.split(x)
            w.writerow([j, repr(norm_T0(u, geo)), repr(norm_T0(p, geo))])
    u, p = system.split(states[-1])
    save_field(out / "u.field", u)
    save_field(out / "p.field", p)
    if cfg.vtk:
        write_vtk(out / "solution.vtk", mesh, u, p)
    return EXIT_OK


def _cmd_convergence(cfg: RunConfig) -> int:
    pairs = [(r, t) for r in cfg.rho_list for t in cfg.tau_list]
    results = mms.run_sweep(
        cfg.grids, pairs, cfg.levels, cfg.base, cfg.amplitude, cfg.seed, cfg.variant, workers=cfg.threads
    )
    mms.write_tables(results, cfg.out, cfg.grids, cfg.rho_list, cfg.tau_list)
    failed = [k for k, r in results.items() if r.error]
    for k in failed:
        logger.error("sweep cell %s failed: %s", k, results[k].error)
    return EXIT_SOLVER if failed else EXIT_OK


COMMANDS = {
    "mesh": _cmd_mesh,
    "check": _cmd_check,
    "solve": _cmd_solve,
    "march": _cmd_march,
    "convergence": _cmd_convergence,
}


def run(cfg: RunConfig) -> int:
    try:
        return COMMANDS[cfg.command](cfg)
    except (SolverError, LocalSolveError) as exc:
        logger.error("%s", exc)
        return EXIT_SOLVER
    except (MeshError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE


def main(argv=None) -> int:
    level = os.environ.get("BIOTFV_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
