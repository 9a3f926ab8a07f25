import numpy as np
import pytest

from core.exceptions import EmptyDomainError, GeometryError
from fem.geometry import boundary_marker, build_cut_geometry
from fem.levelset import LevelSetField


def test_flat_cut_half_way_through_a_cell_row(flat_phi):
    geom = build_cut_geometry(flat_phi)
    assert geom.area == pytest.approx(0.55, abs=1e-8)
    assert geom.interface_length == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(geom.segment_normals, np.tile([0.0, 1.0], (geom.segments.shape[0], 1)), atol=1e-8)
    # row y in [0.5, 0.6] is cut, the five rows below are inside
    assert geom.cut_cells.size == 20
    assert geom.inside_cells.size == 100
    assert geom.active_cells.size == 120
    # upper triangles of the cut row only touch other cut cells
    assert geom.walk_depth == 2.0


def test_ghost_faces_touch_a_cut_cell(flat_phi):
    geom = build_cut_geometry(flat_phi)
    mesh = geom.mesh
    cut = np.zeros(mesh.n_triangles, dtype=bool)
    cut[geom.cut_cells] = True
    active = geom.active_mask()
    pairs = mesh.edge_cells[geom.ghost_faces]
    assert np.all(active[pairs[:, 0]] & active[pairs[:, 1]])
    assert np.all(cut[pairs[:, 0]] | cut[pairs[:, 1]])
    # 10 diagonals and 9 verticals inside the row plus 10 horizontal faces below it
    assert geom.ghost_faces.size == 29


def test_circle_area_and_perimeter(circle_phi):
    geom = build_cut_geometry(circle_phi)
    assert geom.area == pytest.approx(np.pi * 0.09, rel=5e-3)
    assert geom.interface_length == pytest.approx(2 * np.pi * 0.3, rel=5e-3)
    centres = geom.segments.mean(axis=1) - 0.5
    outward = np.einsum("ij,ij->i", geom.segment_normals, centres)
    assert np.all(outward > 0)


def test_subtriangles_stay_inside_their_parents(circle_phi):
    geom = build_cut_geometry(circle_phi)
    mesh = geom.mesh
    lam = mesh.barycentric(geom.subtri_parent[:, None], geom.subtri_corners)
    assert lam.min() > -1e-10
    assert set(np.unique(geom.subtri_parent)) <= set(geom.active_cells)


def test_neumann_pieces_follow_the_material(flat_phi):
    geom = build_cut_geometry(flat_phi)
    lengths = np.linalg.norm(geom.neumann_segments[:, 1] - geom.neumann_segments[:, 0], axis=1)
    # bottom side plus both vertical sides up to the interface
    assert lengths.sum() == pytest.approx(1.0 + 2 * 0.55, abs=1e-8)


def test_dirichlet_faces_are_split_off(flat_phi):
    marker = boundary_marker(("bottom",), flat_phi.mesh.bounds)
    geom = build_cut_geometry(flat_phi, dirichlet=marker)
    assert geom.dirichlet_faces.size == 10
    lengths = np.linalg.norm(geom.neumann_segments[:, 1] - geom.neumann_segments[:, 0], axis=1)
    assert lengths.sum() == pytest.approx(2 * 0.55, abs=1e-8)


def test_cut_dirichlet_face_is_rejected(unit_mesh):
    phi = LevelSetField.from_function(unit_mesh, lambda x: x[:, 0] - 0.55)
    marker = boundary_marker(("bottom",), unit_mesh.bounds)
    with pytest.raises(GeometryError):
        build_cut_geometry(phi, dirichlet=marker)


def test_empty_domain(unit_mesh):
    phi = LevelSetField.from_function(unit_mesh, lambda x: np.ones(x.shape[0]))
    with pytest.raises(EmptyDomainError):
        build_cut_geometry(phi)


def test_uncut_domain_has_no_interface(unit_mesh):
    phi = LevelSetField.from_function(unit_mesh, lambda x: -np.ones(x.shape[0]))
    geom = build_cut_geometry(phi)
    assert geom.is_empty_interface()
    assert geom.ghost_faces.size == 0
    assert geom.area == pytest.approx(1.0)


def test_near_zero_values_are_snapped_to_the_material(unit_mesh):
    # the zero set runs exactly through a row of vertices
    phi = LevelSetField.from_function(unit_mesh, lambda x: x[:, 1] - 0.5)
    geom = build_cut_geometry(phi)
    assert geom.area == pytest.approx(0.5, abs=1e-8)
    assert np.all(np.isfinite(geom.segment_normals))


def test_unknown_side_and_foreign_mesh(unit_mesh, fine_mesh, flat_phi):
    with pytest.raises(GeometryError):
        boundary_marker(("front",), unit_mesh.bounds)
    with pytest.raises(GeometryError):
        build_cut_geometry(flat_phi, mesh=fine_mesh)


def test_walk_limit(unit_mesh):
    # a thin strip around y = 0.5 without a single inside cell
    phi = LevelSetField.from_function(unit_mesh, lambda x: np.abs(x[:, 1] - 0.5) - 0.03)
    with pytest.raises(GeometryError):
        build_cut_geometry(phi, max_walk=5)
