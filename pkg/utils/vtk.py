"""Legacy ASCII VTK output of the physical sub-triangulation and the interface polyline."""
from __future__ import annotations
import os
from typing import Dict, Optional

import meshio
import numpy as np

from fem.geometry import CutGeometry
from fem.levelset import LevelSetField
from fem.spaces import FeField
from physics.interface_velocity import VelocityField

EMPTY_POLYLINE = (
    "# vtk DataFile Version 4.2\n"
    "interface\n"
    "ASCII\n"
    "DATASET UNSTRUCTURED_GRID\n"
    "POINTS 0 double\n"
    "CELLS 0 0\n"
    "CELL_TYPES 0\n"
)


def _pad3(points: np.ndarray) -> np.ndarray:
    return np.hstack([points, np.zeros((points.shape[0], 1))])


def _sample(field: FeField, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
    return field.evaluate(cells, field.space.mesh.barycentric(cells, points))


def domain_mesh(
        geometry: CutGeometry,
        T: Optional[FeField] = None,
        phi: Optional[LevelSetField] = None,
        v_ext: Optional[VelocityField] = None,
) -> meshio.Mesh:
    """Sub-triangles with unshared corners so the cut-cell fields stay discontinuous across parents."""
    corners = geometry.subtri_corners
    n_sub = corners.shape[0]
    points = corners.reshape(-1, 2)
    cells = np.repeat(geometry.subtri_parent, 3)
    point_data: Dict[str, np.ndarray] = {}
    if T is not None:
        point_data["T"] = _sample(T, cells, points)
    if phi is not None:
        point_data["phi"] = phi.evaluate_at(cells, points)
    if v_ext is not None:
        point_data["v_n"] = _sample(v_ext.speed, cells, points)
    cut = np.isin(geometry.subtri_parent, geometry.cut_cells).astype(np.int32)
    return meshio.Mesh(
        _pad3(points),
        [("triangle", np.arange(3 * n_sub).reshape(-1, 3))],
        point_data=point_data,
        cell_data={"parent": [geometry.subtri_parent.astype(np.int32)], "cut": [cut]},
    )


def interface_mesh(geometry: CutGeometry) -> meshio.Mesh:
    n_seg = geometry.segments.shape[0]
    return meshio.Mesh(
        _pad3(geometry.segments.reshape(-1, 2)),
        [("line", np.arange(2 * n_seg).reshape(-1, 2))],
        cell_data={"parent": [geometry.segment_parent.astype(np.int32)]},
    )


def write_vtk(
        geometry: CutGeometry,
        path: str,
        T: Optional[FeField] = None,
        phi: Optional[LevelSetField] = None,
        v_ext: Optional[VelocityField] = None,
) -> tuple[str, str]:
    """Write ``<path>.vtk`` (domain) and ``<path>_gamma.vtk`` (interface); return both file names."""
    root = path[:-4] if path.endswith(".vtk") else path
    domain_file, gamma_file = f"{root}.vtk", f"{root}_gamma.vtk"
    os.makedirs(os.path.dirname(domain_file) or ".", exist_ok=True)
    meshio.write(domain_file, domain_mesh(geometry, T, phi, v_ext), file_format="vtk", binary=False)
    if geometry.is_empty_interface():
        with open(gamma_file, "w", encoding="utf-8") as f:
            f.write(EMPTY_POLYLINE)
    else:
        meshio.write(gamma_file, interface_mesh(geometry), file_format="vtk", binary=False)
    return domain_file, gamma_file


def read_vtk(path: str) -> meshio.Mesh:
    return meshio.read(path, file_format="vtk")
