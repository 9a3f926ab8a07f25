import json

import numpy as np
import pytest

from core.exceptions import ConfigError
from core.snapshot import FORMAT, load_snapshot, save_snapshot, state_from_dict, state_to_dict
from core.state import StefanState
from fem.geometry import build_cut_geometry
from fem.levelset import LevelSetField, project_normal
from fem.mesh import build_structured
from fem.quadrature import triangle_areas
from fem.spaces import FeField, interpolate, p1_active
from physics.interface_velocity import fast_march_extend, with_vector
from utils.vtk import EMPTY_POLYLINE, read_vtk, write_vtk


def _temperature(x):
    return -0.5 + 0.1 * x[:, 0] - 0.2 * x[:, 1]


@pytest.fixture
def flat_state(flat_phi):
    geom = build_cut_geometry(flat_phi)
    space = p1_active(geom.mesh, geom.active_cells)
    speed = FeField(space, np.full(space.n_dofs, -0.25))
    v_ext = with_vector(fast_march_extend(speed, geom, band=3.0), project_normal(flat_phi))
    return geom, StefanState(t=0.02, step=2, T=interpolate(space, _temperature), phi=flat_phi, v_ext=v_ext)


def test_domain_and_interface_files(flat_state, tmp_path):
    geom, state = flat_state
    domain, gamma = write_vtk(geom, str(tmp_path / "out" / "domain_000002.vtk"), T=state.T, phi=state.phi,
                              v_ext=state.v_ext)
    assert domain.endswith("domain_000002.vtk")
    assert gamma.endswith("domain_000002_gamma.vtk")

    mesh = read_vtk(domain)
    triangles = mesh.cells_dict["triangle"]
    assert triangles.shape[0] == geom.subtri_corners.shape[0]
    corners = mesh.points[:, :2][triangles]
    assert triangle_areas(corners).sum() == pytest.approx(geom.area, rel=1e-12)
    np.testing.assert_allclose(mesh.points[:, :2], geom.subtri_corners.reshape(-1, 2), atol=1e-12)
    np.testing.assert_allclose(mesh.point_data["T"], _temperature(mesh.points[:, :2]), atol=1e-12)
    np.testing.assert_allclose(mesh.point_data["phi"], mesh.points[:, 1] - 0.55, atol=1e-12)
    v_n = mesh.point_data["v_n"]
    assert np.all(v_n <= 1e-12)
    near = mesh.points[:, 1] > 0.5
    np.testing.assert_allclose(v_n[near], -0.25, atol=1e-12)
    parents = np.concatenate([np.ravel(block) for block in mesh.cell_data["parent"]])
    np.testing.assert_array_equal(parents, geom.subtri_parent)

    line = read_vtk(gamma)
    assert line.cells_dict["line"].shape[0] == geom.segments.shape[0]
    np.testing.assert_allclose(line.points[:, 1], 0.55, atol=1e-9)


def test_empty_interface_writes_an_empty_polyline(unit_mesh, tmp_path):
    phi = LevelSetField.from_function(unit_mesh, lambda x: -np.ones(x.shape[0]))
    geom = build_cut_geometry(phi)
    _, gamma = write_vtk(geom, str(tmp_path / "full"))
    with open(gamma, encoding="utf-8") as f:
        assert f.read() == EMPTY_POLYLINE


def test_snapshot_restores_every_field(flat_state, tmp_path):
    _, state = flat_state
    path = save_snapshot(state, str(tmp_path / "snap" / "state_000002.json"))
    back = load_snapshot(path, state.phi.mesh)
    assert (back.t, back.step) == (0.02, 2)
    np.testing.assert_array_equal(back.phi.coefficients, state.phi.coefficients)
    np.testing.assert_array_equal(back.T.space.cells, state.T.space.cells)
    np.testing.assert_array_equal(back.T.coefficients, state.T.coefficients)
    np.testing.assert_array_equal(back.v_ext.reached, state.v_ext.reached)
    np.testing.assert_array_equal(back.v_ext.distance, state.v_ext.distance)
    np.testing.assert_array_equal(back.v_ext.vector.coefficients, state.v_ext.vector.coefficients)
    # nodes outside the band keep an infinite distance
    assert np.isinf(back.v_ext.distance).any()


def test_snapshot_without_speed(flat_phi, tmp_path):
    geom = build_cut_geometry(flat_phi)
    space = p1_active(geom.mesh, geom.active_cells)
    state = StefanState(t=0.0, step=0, T=interpolate(space, _temperature), phi=flat_phi)
    back = state_from_dict(json.loads(json.dumps(state_to_dict(state))), flat_phi.mesh)
    assert back.v_ext is None


def test_snapshot_is_checked_against_the_mesh(flat_state, tmp_path):
    _, state = flat_state
    data = state_to_dict(state)
    assert data["format"] == FORMAT
    with pytest.raises(ConfigError):
        state_from_dict({**data, "format": "other/0"}, state.phi.mesh)
    with pytest.raises(ConfigError):
        state_from_dict(data, build_structured((0.0, 1.0, 0.0, 1.0), 5, 5))
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_snapshot(str(broken), state.phi.mesh)
