import numpy as np
import pytest

from biotfv.materials import MaterialField
from biotfv.mesh import BoundarySpec, build_grid, compute_geometry


def make_problem(kind="A", n=4, amplitude=0.0, seed=3, **mat):
    mesh = build_grid(kind, n, amplitude, seed)
    return mesh, MaterialField.isotropic(mesh.n_cells, **mat), BoundarySpec.all_dirichlet(mesh)


@pytest.fixture(params=["A", "B", "C"])
def grid_kind(request):
    return request.param


@pytest.fixture
def rough_geometry(grid_kind):
    return compute_geometry(build_grid(grid_kind, 4, 0.5, 11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
