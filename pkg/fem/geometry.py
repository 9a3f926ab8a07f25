"""Cut geometry from the refined linear interpolant of the level set.

Every refined triangle is classified by the sign of its three nodal values and
cut along the straight zero chord. The pieces are then aggregated to the
parent background cells, which yields the active mesh, the physical
sub-triangulation, the interface polyline and the ghost-penalty faces.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from core.exceptions import EmptyDomainError, GeometryError
from fem.levelset import LevelSetField, RefinedLinearField, interpolate_to_refined_linear, snapped_values
from fem.mesh import BackgroundMesh
from utils.log import get_logger

logger = get_logger("geometry")

BoundaryMarker = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CutGeometry:
    mesh: BackgroundMesh
    node_values: np.ndarray
    active_cells: np.ndarray
    cut_cells: np.ndarray
    inside_cells: np.ndarray
    subtri_corners: np.ndarray
    subtri_parent: np.ndarray
    segments: np.ndarray
    segment_parent: np.ndarray
    segment_normals: np.ndarray
    ghost_faces: np.ndarray
    dirichlet_faces: np.ndarray
    neumann_segments: np.ndarray
    neumann_parent: np.ndarray
    neumann_normals: np.ndarray
    walk_depth: float

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.segments[:, 1] - self.segments[:, 0], axis=1)

    @property
    def interface_length(self) -> float:
        return float(self.segment_lengths.sum())

    @property
    def subtri_areas(self) -> np.ndarray:
        c = self.subtri_corners
        e1, e2 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def area(self) -> float:
        return float(self.subtri_areas.sum())

    def active_mask(self) -> np.ndarray:
        mask = np.zeros(self.mesh.n_triangles, dtype=bool)
        mask[self.active_cells] = True
        return mask

    def is_empty_interface(self) -> bool:
        return self.segments.shape[0] == 0


def _crossing(p: np.ndarray, q: np.ndarray, sp: np.ndarray, sq: np.ndarray) -> np.ndarray:
    t = sp / (sp - sq)
    return p + t[:, None] * (q - p)


def _rotate_odd_first(tri: np.ndarray, neg: np.ndarray, odd_is_negative: bool) -> np.ndarray:
    """Cyclically rotate local node order so the odd-signed node comes first."""
    target = neg if odd_is_negative else ~neg
    k = np.argmax(target, axis=1)
    idx = (k[:, None] + np.arange(3)[None, :]) % 3
    return np.take_along_axis(tri, idx, axis=1)


def _cut_refined(vertices: np.ndarray, triangles: np.ndarray, values: np.ndarray):
    s = values[triangles]
    neg = s < 0
    n_neg = neg.sum(axis=1)
    pts = vertices[triangles]

    full = np.flatnonzero(n_neg == 3)
    sub_corners = [pts[full]]
    sub_child = [full]

    one = np.flatnonzero(n_neg == 1)
    t1 = _rotate_odd_first(triangles[one], neg[one], odd_is_negative=True)
    o, a, b = (vertices[t1[:, k]] for k in range(3))
    so, sa, sb = (values[t1[:, k]] for k in range(3))
    pa, pb = _crossing(o, a, so, sa), _crossing(o, b, so, sb)
    sub_corners.append(np.stack([o, pa, pb], axis=1))
    sub_child.append(one)
    seg_one = np.stack([pa, pb], axis=1)

    two = np.flatnonzero(n_neg == 2)
    t2 = _rotate_odd_first(triangles[two], neg[two], odd_is_negative=False)
    o, a, b = (vertices[t2[:, k]] for k in range(3))
    so, sa, sb = (values[t2[:, k]] for k in range(3))
    pa, pb = _crossing(a, o, sa, so), _crossing(b, o, sb, so)
    # quad (a, b, pb, pa) split by its shorter diagonal
    use_a = np.linalg.norm(pb - a, axis=1) <= np.linalg.norm(pa - b, axis=1)
    first = np.where(use_a[:, None, None], np.stack([a, b, pb], 1), np.stack([a, b, pa], 1))
    second = np.where(use_a[:, None, None], np.stack([a, pb, pa], 1), np.stack([b, pb, pa], 1))
    sub_corners += [first, second]
    sub_child += [two, two]
    seg_two = np.stack([pb, pa], axis=1)

    segments = np.concatenate([seg_one, seg_two]).reshape(-1, 2, 2)
    seg_child = np.concatenate([one, two])
    return (
        np.concatenate(sub_corners).reshape(-1, 3, 2),
        np.concatenate(sub_child),
        segments,
        seg_child,
        n_neg,
    )


def _walk_depth(mesh: BackgroundMesh, active: np.ndarray, inside: np.ndarray, cut: np.ndarray) -> float:
    """Largest number of interior faces between a cut cell and the nearest inside cell."""
    if cut.size == 0:
        return 0.0
    if inside.size == 0:
        return float("inf")
    pairs = mesh.edge_cells[mesh.interior_faces]
    keep = active[pairs[:, 0]] & active[pairs[:, 1]]
    pairs = pairs[keep]
    n = mesh.n_triangles
    graph = coo_matrix((np.ones(pairs.shape[0]), (pairs[:, 0], pairs[:, 1])), shape=(n, n)).tocsr()
    dist = dijkstra(graph, directed=False, indices=inside, unweighted=True, min_only=True)
    return float(dist[cut].max())


def _boundary_pieces(mesh: BackgroundMesh, values: np.ndarray, faces: np.ndarray):
    """Inside parts of exterior faces, clipped on the two refined half-edges."""
    if faces.size == 0:
        return np.empty((0, 2, 2)), np.empty(0, dtype=np.int64), np.empty((0, 2))
    nv = mesh.n_vertices
    v0, v1 = mesh.edges[faces, 0], mesh.edges[faces, 1]
    mid = nv + faces
    ends, parents, normals = [], [], []
    for p_id, q_id in ((v0, mid), (mid, v1)):
        p, q = mesh.refined.vertices[p_id], mesh.refined.vertices[q_id]
        sp, sq = values[p_id], values[q_id]
        both = (sp < 0) & (sq < 0)
        only_p = (sp < 0) & (sq >= 0)
        only_q = (sp >= 0) & (sq < 0)
        ends.append(np.stack([p[both], q[both]], 1))
        ends.append(np.stack([p[only_p], _crossing(p[only_p], q[only_p], sp[only_p], sq[only_p])], 1))
        ends.append(np.stack([_crossing(p[only_q], q[only_q], sp[only_q], sq[only_q]), q[only_q]], 1))
        for mask in (both, only_p, only_q):
            parents.append(mesh.edge_cells[faces[mask], 0])
            normals.append(mesh.face_normals[faces[mask]])
    return (
        np.concatenate(ends).reshape(-1, 2, 2),
        np.concatenate(parents),
        np.concatenate(normals).reshape(-1, 2),
    )


def build_cut_geometry(
        phi: LevelSetField,
        mesh: Optional[BackgroundMesh] = None,
        dirichlet: Optional[BoundaryMarker] = None,
        max_walk: Optional[int] = 5,
) -> CutGeometry:
    """Cut the active mesh out of ``mesh`` along the zero set of ``phi``.

    ``dirichlet`` marks exterior faces by their midpoints (array (F, 2) ->
    bool (F,)); the remaining exterior faces are Neumann faces. ``max_walk``
    bounds the face-path length from any cut cell to an inside cell; pass
    None to skip the check.
    """
    mesh = phi.mesh if mesh is None else mesh
    if mesh is not phi.mesh:
        raise GeometryError("level set lives on a different background mesh")
    refined = mesh.refined
    values = snapped_values(interpolate_to_refined_linear(phi).values, mesh.h_max)
    if not np.any(values < 0):
        raise EmptyDomainError()

    corners, sub_child, segments, seg_child, n_neg = _cut_refined(refined.vertices, refined.triangles, values)

    # children of cell c are 4c .. 4c+3
    per_cell = n_neg.reshape(-1, 4)
    inside = np.all(per_cell == 3, axis=1)
    cut = np.any((per_cell > 0) & (per_cell < 3), axis=1)
    active = inside | cut

    order = np.argsort(refined.parent[sub_child], kind="stable")
    corners, sub_parent = corners[order], refined.parent[sub_child][order]
    seg_order = np.argsort(refined.parent[seg_child], kind="stable")
    segments, seg_parent = segments[seg_order], refined.parent[seg_child][seg_order]
    seg_grad = RefinedLinearField(refined, values).gradients()[seg_child][seg_order]
    seg_normals = seg_grad / np.linalg.norm(seg_grad, axis=1, keepdims=True)

    kp, km = mesh.edge_cells[mesh.interior_faces, 0], mesh.edge_cells[mesh.interior_faces, 1]
    ghost = mesh.interior_faces[active[kp] & active[km] & (cut[kp] | cut[km])]

    exterior = mesh.exterior_faces
    face_nodes = np.stack([mesh.edges[exterior, 0], mesh.edges[exterior, 1], mesh.n_vertices + exterior], axis=1)
    face_neg = values[face_nodes] < 0
    if dirichlet is None:
        is_dirichlet = np.zeros(exterior.size, dtype=bool)
    else:
        mids = mesh.refined.vertices[mesh.n_vertices + exterior]
        is_dirichlet = np.asarray(dirichlet(mids), dtype=bool)
    partial = is_dirichlet & np.any(face_neg, axis=1) & ~np.all(face_neg, axis=1)
    if np.any(partial):
        raise GeometryError(
            f"the interface cuts {int(partial.sum())} Dirichlet boundary face(s); "
            "Dirichlet data is supported on uncut exterior faces only"
        )
    dirichlet_faces = exterior[is_dirichlet & np.all(face_neg, axis=1)]
    neumann_ends, neumann_parent, neumann_normals = _boundary_pieces(mesh, values, exterior[~is_dirichlet])

    active_cells = np.flatnonzero(active)
    depth = _walk_depth(mesh, active, np.flatnonzero(inside), np.flatnonzero(cut))
    if max_walk is not None and depth > max_walk:
        raise GeometryError(f"a cut cell is {depth} faces away from the nearest inside cell (limit {max_walk})")

    geometry = CutGeometry(
        mesh=mesh,
        node_values=values,
        active_cells=active_cells,
        cut_cells=np.flatnonzero(cut),
        inside_cells=np.flatnonzero(inside),
        subtri_corners=corners,
        subtri_parent=sub_parent,
        segments=segments,
        segment_parent=seg_parent,
        segment_normals=seg_normals,
        ghost_faces=ghost,
        dirichlet_faces=dirichlet_faces,
        neumann_segments=neumann_ends,
        neumann_parent=neumann_parent,
        neumann_normals=neumann_normals,
        walk_depth=depth,
    )
    logger.debug(
        "cut_geometry",
        active=int(active_cells.size),
        cut=int(geometry.cut_cells.size),
        ghost_faces=int(ghost.size),
        area=geometry.area,
        interface_length=geometry.interface_length,
    )
    return geometry


def boundary_marker(sides: tuple, bounds: tuple, tol: float = 1e-9) -> BoundaryMarker:
    """Marker for whole sides of the rectangle ``bounds``; sides among left/right/bottom/top."""
    x0, x1, y0, y1 = bounds
    scale = tol * max(x1 - x0, y1 - y0)
    unknown = set(sides) - {"left", "right", "bottom", "top", "all"}
    if unknown:
        raise GeometryError(f"unknown boundary side(s) {sorted(unknown)}")

    def marker(points: np.ndarray) -> np.ndarray:
        x, y = points[:, 0], points[:, 1]
        hit = np.zeros(points.shape[0], dtype=bool)
        if "all" in sides or "left" in sides:
            hit |= np.abs(x - x0) < scale
        if "all" in sides or "right" in sides:
            hit |= np.abs(x - x1) < scale
        if "all" in sides or "bottom" in sides:
            hit |= np.abs(y - y0) < scale
        if "all" in sides or "top" in sides:
            hit |= np.abs(y - y1) < scale
        return hit

    return marker
