import numpy as np
import pytest

from core.exceptions import AssemblyError, MeshError, MeshQueryError
from fem.mesh import build_structured, cell_adjacency, cells_for_size, face_jump_pairs, from_triangles
from fem.spaces import FeField, interpolate, p1_active, p1_background, p2_background, transfer

UNIT = (0.0, 1.0, 0.0, 1.0)


def test_structured_counts(unit_mesh):
    assert unit_mesh.n_vertices == 121
    assert unit_mesh.n_triangles == 200
    assert unit_mesh.n_edges == 320
    assert unit_mesh.exterior_faces.size == 40
    assert unit_mesh.areas.sum() == pytest.approx(1.0)
    assert unit_mesh.h_max == pytest.approx(np.sqrt(2) * 0.1)


def test_crossed_pattern_adds_cell_centres():
    mesh = build_structured(UNIT, 4, 3, pattern="crossed")
    assert mesh.n_vertices == 5 * 4 + 12
    assert mesh.n_triangles == 48
    assert mesh.areas.sum() == pytest.approx(1.0)


def test_refined_nodes_match_p2_nodes(unit_mesh):
    refined = unit_mesh.refined
    assert refined.n_vertices == unit_mesh.n_vertices + unit_mesh.n_edges
    assert refined.n_triangles == 4 * unit_mesh.n_triangles
    mids = 0.5 * (unit_mesh.vertices[unit_mesh.edges[:, 0]] + unit_mesh.vertices[unit_mesh.edges[:, 1]])
    np.testing.assert_allclose(refined.vertices[unit_mesh.n_vertices:], mids)


def test_face_normals_point_out_of_the_first_cell(unit_mesh):
    ext = unit_mesh.exterior_faces
    mids = 0.5 * (unit_mesh.vertices[unit_mesh.edges[ext, 0]] + unit_mesh.vertices[unit_mesh.edges[ext, 1]])
    centre = np.array([0.5, 0.5])
    assert np.all(np.einsum("ij,ij->i", unit_mesh.face_normals[ext], mids - centre) > 0)


def test_barycentric_reproduces_points(unit_mesh):
    cells = np.arange(unit_mesh.n_triangles)
    centroids = unit_mesh.cell_points(cells).mean(axis=1)
    np.testing.assert_allclose(unit_mesh.barycentric(cells, centroids), 1.0 / 3.0, atol=1e-12)


def test_clockwise_triangles_are_reoriented():
    mesh = from_triangles([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert mesh.areas[0] == pytest.approx(0.5)


def test_degenerate_inputs_are_rejected():
    with pytest.raises(MeshError):
        build_structured(UNIT, 0, 3)
    with pytest.raises(MeshError):
        build_structured((0.0, 0.0, 0.0, 1.0), 2, 2)
    with pytest.raises(MeshError):
        build_structured(UNIT, 2, 2, pattern="zigzag")
    with pytest.raises(MeshError):
        from_triangles([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_face_queries(unit_mesh):
    face = int(unit_mesh.interior_faces[0])
    kp, km, normal = face_jump_pairs(unit_mesh, face)
    assert kp != km
    assert np.linalg.norm(normal) == pytest.approx(1.0)
    with pytest.raises(MeshQueryError):
        face_jump_pairs(unit_mesh, int(unit_mesh.exterior_faces[0]))
    with pytest.raises(MeshQueryError):
        face_jump_pairs(unit_mesh, unit_mesh.n_edges)
    assert cell_adjacency(unit_mesh).shape == (unit_mesh.interior_faces.size, 2)


def test_cells_for_size():
    assert cells_for_size(1.0, 0.1) == 10
    assert cells_for_size(3.0, 0.048) == 63
    assert cells_for_size(0.1, 1.0) == 1


def test_spaces_and_transfer(unit_mesh):
    assert p1_background(unit_mesh).n_dofs == unit_mesh.n_vertices
    assert p2_background(unit_mesh).n_dofs == unit_mesh.n_vertices + unit_mesh.n_edges

    small = p1_active(unit_mesh, np.arange(20))
    assert small.n_dofs == 22
    field = interpolate(small, lambda x: 2.0 + x[:, 0])
    big = p1_active(unit_mesh, np.arange(40))
    moved = transfer(field, big)
    assert moved.space is big
    kept = small.node_to_dof[big.node_ids] >= 0
    np.testing.assert_allclose(moved.coefficients[kept], 2.0 + big.node_coordinates()[kept, 0])

    grad = field.gradient(small.cells)
    np.testing.assert_allclose(grad, np.tile([1.0, 0.0], (small.cells.size, 1)), atol=1e-12)


def test_field_shape_is_checked(unit_mesh):
    space = p1_background(unit_mesh)
    with pytest.raises(AssemblyError):
        FeField(space, np.zeros(3))
    with pytest.raises(AssemblyError):
        FeField(space.vector(), np.zeros(space.n_dofs))
