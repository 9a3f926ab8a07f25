import numpy as np
import pytest

from core.exceptions import MarchingError
from fem.marching import FastMarcher, closest_points


@pytest.fixture
def marcher(unit_mesh):
    return FastMarcher(unit_mesh.vertices, unit_mesh.triangles)


def test_plane_front_gives_exact_distance(unit_mesh, marcher):
    y = unit_mesh.vertices[:, 1]
    seeds = np.flatnonzero(np.isclose(y, 0.5))
    result = marcher.march(seeds, np.zeros(seeds.size))
    assert result.reached.all()
    np.testing.assert_allclose(result.distance, np.abs(y - 0.5), atol=1e-10)


def test_values_are_carried_along(marcher, unit_mesh):
    seeds = np.flatnonzero(np.isclose(unit_mesh.vertices[:, 1], 0.0))
    result = marcher.march(seeds, np.zeros(seeds.size), np.full(seeds.size, 3.0))
    np.testing.assert_allclose(result.values, 3.0)


def test_accepted_distances_are_monotone(marcher, unit_mesh):
    seeds = np.array([0])
    result = marcher.march(seeds, np.zeros(1))
    assert np.all(np.diff(result.distance[result.accepted_order]) >= -1e-12)
    corner = unit_mesh.n_vertices - 1
    # first-order marching overestimates the diagonal a little
    assert 0.99 * np.sqrt(2.0) <= result.distance[corner] <= 1.1 * np.sqrt(2.0)


def test_band_limits_the_march(marcher, unit_mesh):
    y = unit_mesh.vertices[:, 1]
    seeds = np.flatnonzero(np.isclose(y, 0.5))
    result = marcher.march(seeds, np.zeros(seeds.size), np.ones(seeds.size), band=0.25)
    assert np.all(result.reached == (np.abs(y - 0.5) <= 0.25 + 1e-12))
    assert np.all(np.isinf(result.distance[~result.reached]))
    assert np.all(result.values[~result.reached] == 0.0)


def test_no_seeds(marcher):
    with pytest.raises(MarchingError):
        marcher.march(np.array([], dtype=int), np.array([]))


def test_closest_points_on_a_polyline():
    segments = np.array([[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [1.0, 1.0]]])
    points = np.array([[0.5, 0.3], [1.4, 0.5], [2.0, -1.0]])
    dist, seg, param = closest_points(points, segments)
    np.testing.assert_allclose(dist, [0.3, 0.4, np.sqrt(2.0)])
    assert seg[:2].tolist() == [0, 1]
    np.testing.assert_allclose(param[:2], [0.5, 0.5])
    with pytest.raises(MarchingError):
        closest_points(points, np.empty((0, 2, 2)))
