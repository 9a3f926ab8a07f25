import numpy as np
import pytest
import scipy.sparse as sp

from core.exceptions import AssemblyError, SolverError
from fem.assembly import (
    BulkKernel,
    SparseSystem,
    assemble_bulk,
    assemble_cells,
    assemble_ghost_penalty,
    assemble_interface,
    assemble_load,
    assemble_neumann,
    assemble_nitsche_dirichlet,
    background_mass_matrix,
    condition_estimate,
    interface_traces,
    solve_sparse,
)
from fem.geometry import boundary_marker, build_cut_geometry
from fem.levelset import LevelSetField
from fem.spaces import interpolate, p1_active, p1_background


@pytest.fixture
def cut(flat_phi):
    geom = build_cut_geometry(flat_phi)
    return geom, p1_active(geom.mesh, geom.active_cells)


def test_mass_integrates_the_physical_area(cut):
    geom, space = cut
    mass = assemble_bulk(geom, space, BulkKernel(mass=1.0))
    ones = np.ones(space.n_dofs)
    assert ones @ mass @ ones == pytest.approx(geom.area, rel=1e-12)
    assert assemble_load(geom, space, lambda p: np.ones(p.shape[0])).sum() == pytest.approx(geom.area, rel=1e-12)


def test_stiffness_annihilates_constants(cut):
    geom, space = cut
    stiff = assemble_bulk(geom, space, BulkKernel(stiffness=1.0))
    np.testing.assert_allclose(stiff @ np.ones(space.n_dofs), 0.0, atol=1e-12)
    assert abs(stiff - stiff.T).max() < 1e-14


def test_stiffness_energy_of_a_linear_field(cut):
    geom, space = cut
    stiff = assemble_bulk(geom, space, BulkKernel(stiffness=1.0))
    u = interpolate(space, lambda x: 3.0 * x[:, 0] - x[:, 1]).coefficients
    assert u @ stiff @ u == pytest.approx(10.0 * geom.area, rel=1e-10)


def test_ghost_penalty_vanishes_on_affine_fields(cut):
    geom, space = cut
    ghost = assemble_ghost_penalty(geom, space, 1e-3)
    u = interpolate(space, lambda x: 1.0 + 2.0 * x[:, 0] - 0.5 * x[:, 1]).coefficients
    np.testing.assert_allclose(ghost @ u, 0.0, atol=1e-12)
    kink = interpolate(space, lambda x: np.abs(x[:, 0] - 0.5)).coefficients
    assert kink @ ghost @ kink > 0


def test_interface_traces_integrate_the_interface(cut):
    geom, space = cut
    tr = interface_traces(geom, space)
    assert tr.weights.sum() == pytest.approx(geom.interface_length, rel=1e-12)
    u = interpolate(space, lambda x: x[:, 1]).coefficients
    np.testing.assert_allclose(tr.value @ u, 0.55, atol=1e-8)
    np.testing.assert_allclose(tr.normal_derivative @ u, 1.0, atol=1e-8)
    form = assemble_interface(tr, trial=(0.0, 1.0), test=(1.0, 0.0))
    assert np.ones(space.n_dofs) @ form @ u == pytest.approx(geom.interface_length, rel=1e-8)


def test_nitsche_dirichlet_reproduces_linear_solutions(unit_mesh):
    phi = LevelSetField.from_function(unit_mesh, lambda x: -np.ones(x.shape[0]))
    marker = boundary_marker(("all",), unit_mesh.bounds)
    geom = build_cut_geometry(phi, dirichlet=marker)
    space = p1_active(unit_mesh, geom.active_cells)

    def exact(p):
        return 1.0 + p[:, 0] + 2.0 * p[:, 1]

    matrix, rhs = assemble_nitsche_dirichlet(geom, space, 2.0, 100.0, exact)
    matrix = matrix + assemble_bulk(geom, space, BulkKernel(stiffness=2.0))
    u = SparseSystem(matrix, rhs).solve()
    np.testing.assert_allclose(u, exact(space.node_coordinates()), atol=1e-10)


def test_nitsche_requires_a_positive_penalty(cut):
    geom, space = cut
    with pytest.raises(AssemblyError):
        assemble_nitsche_dirichlet(geom, space, 1.0, 0.0)


def test_neumann_load_matches_the_boundary_length(cut):
    geom, space = cut
    load = assemble_neumann(geom, space, lambda p: np.ones(p.shape[0]))
    assert load.sum() == pytest.approx(1.0 + 2 * 0.55, abs=1e-8)
    np.testing.assert_allclose(assemble_neumann(geom, space, None), 0.0)


def test_cells_outside_the_space_are_rejected(unit_mesh):
    space = p1_active(unit_mesh, np.arange(20))
    with pytest.raises(AssemblyError):
        assemble_cells(space, np.array([150]), BulkKernel(mass=1.0))


def test_background_mass_matches_quadrature(unit_mesh):
    exact = background_mass_matrix(unit_mesh)
    space = p1_background(unit_mesh)
    quad = assemble_cells(space, np.arange(unit_mesh.n_triangles), BulkKernel(mass=1.0))
    assert abs(exact - quad).max() < 1e-14


def test_system_validation():
    with pytest.raises(AssemblyError):
        SparseSystem(sp.eye(3), np.ones(2))
    with pytest.raises(AssemblyError):
        SparseSystem(sp.csr_matrix(np.ones((2, 3))), np.ones(2))
    with pytest.raises(AssemblyError):
        SparseSystem(sp.eye(2), np.array([1.0, np.nan]))


def test_singular_solve_raises():
    with pytest.raises(SolverError):
        solve_sparse(sp.csr_matrix((3, 3)), np.ones(3))


def test_condition_estimate_tracks_the_dense_value():
    rng = np.random.default_rng(7)
    dense = np.diag(np.linspace(1.0, 50.0, 12)) + 0.1 * rng.standard_normal((12, 12))
    exact = np.linalg.cond(dense, 1)
    estimate = condition_estimate(sp.csr_matrix(dense))
    assert exact / 10.0 <= estimate <= exact * (1 + 1e-6)
