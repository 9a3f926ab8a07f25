from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from fem.levelset import LevelSetField, RefinedLinearField, snapped_values
from fem.marching import FastMarcher
from utils.log import get_logger

logger = get_logger("redistance")


def _near_field(refined, values: np.ndarray):
    tri = refined.triangles
    s = values[tri]
    cut = np.flatnonzero(np.any(s < 0, axis=1) & np.any(s >= 0, axis=1))
    nodes = np.unique(tri[cut])
    n = refined.n_vertices
    local = tri[cut]
    rows = np.concatenate([local[:, 0], local[:, 1], local[:, 2]])
    cols = np.concatenate([local[:, 1], local[:, 2], local[:, 0]])
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return cut, nodes, labels


def redistance(phi: LevelSetField) -> LevelSetField:
    """Signed-distance reinitialisation that keeps the refined zero set in place.

    Nodes of cut refined triangles are rescaled by one factor per connected
    interface band, which leaves every zero crossing where it was; all other
    nodes receive the fast-marching distance from that band.
    """
    mesh = phi.mesh
    refined = mesh.refined
    values = snapped_values(phi.coefficients, mesh.h_max)
    cut, nodes, labels = _near_field(refined, values)
    if cut.size == 0:
        logger.info("redistance_skipped", reason="no interface")
        return phi

    grad_norm = np.linalg.norm(RefinedLinearField(refined, values).gradients()[cut], axis=1)
    band = labels[refined.triangles[cut, 0]]
    n_labels = labels.max() + 1
    mean_norm = np.bincount(band, weights=grad_norm, minlength=n_labels) / np.maximum(
        np.bincount(band, minlength=n_labels), 1
    )
    scale = 1.0 / np.where(mean_norm > 0, mean_norm, 1.0)
    seed_values = values[nodes] * scale[labels[nodes]]

    marcher = FastMarcher(refined.vertices, refined.triangles)
    result = marcher.march(nodes, np.abs(seed_values))
    out = phi.coefficients.copy()
    reached = result.reached
    out[reached] = np.sign(values[reached]) * result.distance[reached]
    out[nodes] = seed_values
    logger.info(
        "redistance",
        bands=int(np.unique(band).size),
        scale_min=float(scale[np.unique(band)].min()),
        scale_max=float(scale[np.unique(band)].max()),
        unreached=int((~reached).sum()),
    )
    return phi.with_coefficients(out)
