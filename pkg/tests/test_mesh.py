import numpy as np
import pytest

from biotfv.mesh import (
    MeshError,
    build_cartesian,
    build_dual,
    build_grid,
    build_triangular,
    compute_geometry,
    load_boundary,
    load_mesh,
    perturb,
    save_mesh,
)


@pytest.mark.parametrize("n,counts", [(1, (1, 4, 4)), (2, (4, 12, 9)), (4, (16, 40, 25))])
def test_cartesian_counts(n, counts):
    m = build_cartesian(n)
    assert (m.n_cells, m.n_faces, m.n_vertices) == counts
    assert m.n_faces == 2 * n * (n + 1)


@pytest.mark.parametrize("n,counts", [(1, (2, 5, 4)), (2, (8, 16, 9))])
def test_triangular_counts(n, counts):
    m = build_triangular(n)
    assert (m.n_cells, m.n_faces, m.n_vertices) == counts


@pytest.mark.parametrize("n", [1, 3, 5])
def test_triangular_interior_faces_have_two_cells(n):
    m = build_triangular(n)
    interior = m.face_cells[:, 1] >= 0
    assert np.all(m.face_cells[interior] >= 0)
    assert np.all(m.face_cells[~interior, 0] >= 0)


def test_dual_of_small_triangulation():
    tri = build_triangular(2)
    dual = build_dual(tri)
    assert dual.n_cells == tri.n_vertices == 9
    geo = compute_geometry(dual)
    assert geo.cell_area.sum() == pytest.approx(1.0, abs=1e-12)
    # straight faces: each face is a vertex pair
    assert dual.faces.shape[1] == 2


def test_perturb_zero_amplitude_is_identity():
    m = build_cartesian(5)
    assert np.array_equal(perturb(m, 0.0, 7).vertices, m.vertices)


def test_perturb_is_deterministic_and_bounded():
    m = build_cartesian(6)
    a = perturb(m, 0.5, 99)
    b = perturb(m, 0.5, 99)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.abs(a.vertices - m.vertices).max() <= 0.5 * m.spacing + 1e-15
    assert not np.array_equal(a.vertices, perturb(m, 0.5, 100).vertices)


def test_perturb_keeps_the_unit_square():
    m = build_triangular(6)
    p = perturb(m, 0.5, 5)
    assert p.vertices.min() >= 0.0 and p.vertices.max() <= 1.0
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    for c in corners:
        assert np.min(np.linalg.norm(p.vertices - c, axis=1)) == 0.0


def test_perturb_rejects_bad_amplitude():
    with pytest.raises(ValueError):
        perturb(build_cartesian(2), 0.7, 0)


def test_unit_square_cell_measures():
    geo = compute_geometry(build_cartesian(1))
    assert geo.cell_area[0] == pytest.approx(1.0)
    assert np.allclose(geo.face_length, 1.0)
    assert np.allclose(geo.sc_area, 0.25)
    assert np.allclose(geo.sf_length, 0.5)


def test_reference_triangle_area():
    from biotfv.mesh import MeshTriplet

    m = MeshTriplet.from_cells(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [[0, 1, 2]])
    assert compute_geometry(m).cell_area[0] == pytest.approx(0.5)


def test_partitions_and_normals(rough_geometry):
    geo = rough_geometry
    mesh = geo.mesh
    assert geo.cell_area.sum() == pytest.approx(1.0, rel=1e-12)
    sc_sum = np.bincount(geo.sc_cell, geo.sc_area, minlength=mesh.n_cells)
    assert np.allclose(sc_sum, geo.cell_area, rtol=1e-12, atol=0)
    sf_sum = np.bincount(geo.sf_face, geo.sf_length, minlength=mesh.n_faces)
    assert np.allclose(sf_sum, geo.face_length, rtol=1e-12, atol=0)
    assert np.allclose(np.linalg.norm(geo.face_normal, axis=1), 1.0)
    for f in np.flatnonzero(mesh.face_cells[:, 1] >= 0)[:20]:
        K, L = mesh.face_cells[f]
        assert np.allclose(geo.cell_normal(K, f), -geo.cell_normal(L, f))


def test_gauss_identity_per_cell(rough_geometry):
    geo = rough_geometry
    acc = np.zeros((geo.mesh.n_cells, 2))
    n = geo.face_normal[geo.hf_face] * geo.hf_sign[:, None]
    np.add.at(acc, geo.hf_cell, geo.face_length[geo.hf_face][:, None] * n)
    assert np.abs(acc).max() <= 1e-12


def test_subcells_positively_oriented(rough_geometry):
    assert np.all(rough_geometry.sc_area > 0)


def test_face_cell_compatibility(rough_geometry):
    mesh = rough_geometry.mesh
    for K, faces in enumerate(mesh.cell_faces):
        loop = mesh.cells[K]
        for i, f in enumerate(faces):
            assert {loop[i], loop[(i + 1) % len(loop)]} == set(mesh.faces[f].tolist())
            assert K in mesh.face_cells[f]


@pytest.mark.parametrize("power", [0, 1, 2])
def test_gauss_rule_integrates_quadratics(power, rough_geometry):
    geo = rough_geometry
    pts, w = geo.subface_points("gauss2")
    V = geo.mesh.vertices[geo.sf_vertex]
    t = np.linalg.norm(pts - V[:, None, :], axis=2)  # arc length from the vertex
    exact = geo.sf_length ** (power + 1) / (power + 1)
    assert np.allclose((w * t**power).sum(axis=1), exact, rtol=1e-12, atol=1e-15)
    assert np.allclose(w.sum(axis=1), geo.sf_length)


def test_single_point_rule_positions():
    geo = compute_geometry(build_cartesian(2))
    mid, _ = geo.subface_points("single", 0.0)
    third, _ = geo.subface_points("single", 1.0 / 3.0)
    M = geo.face_center[geo.sf_face]
    V = geo.mesh.vertices[geo.sf_vertex]
    assert np.allclose(mid[:, 0], M)
    assert np.allclose(third[:, 0], M + (V - M) / 3.0)


def test_build_grid_is_deterministic(grid_kind):
    a = build_grid(grid_kind, 4, 0.5, 42)
    b = build_grid(grid_kind, 4, 0.5, 42)
    assert np.array_equal(a.vertices, b.vertices)
    assert all(np.array_equal(x, y) for x, y in zip(a.cells, b.cells))


def test_mesh_round_trip(tmp_path, grid_kind):
    m = build_grid(grid_kind, 3, 0.4, 8)
    path = tmp_path / "m.txt"
    save_mesh(m, path)
    r = load_mesh(path)
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.faces, m.faces)
    assert np.array_equal(r.face_cells, m.face_cells)
    assert r.spacing == m.spacing


def test_load_mesh_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("not a mesh\n")
    with pytest.raises(MeshError):
        load_mesh(p)


def test_boundary_file(tmp_path):
    m = build_cartesian(3)
    p = tmp_path / "bc.txt"
    p.write_text("biotfv-bc v1\nu top N 0 -1\np left N 2.5\n")
    bc = load_boundary(p, m)
    sides = m.face_sides()
    top = [f for f in m.boundary_faces if sides[f] == "top"]
    assert set(bc.u_kind[top]) == {"N"}
    assert np.allclose(bc.g_u_neumann(m.vertices[:1] * 0 + [[0.5, 1.0]]), [[0.0, -1.0]])
    assert np.allclose(bc.g_p_neumann(np.array([[0.0, 0.5]])), [2.5])
    p.write_text("biotfv-bc v1\nu top X 1 2\n")
    with pytest.raises(ValueError):
        load_boundary(p, m)
