"""Fixed structured background triangulation and its once-refined companion.

Vertex, edge and triangle numbering is deterministic so every quantity derived
from the mesh (face normals, dof maps, refined node ids) is reproducible.
The refined mesh reuses the background vertices and appends one vertex per
edge midpoint, which makes its node set identical to the P2 node set of the
background mesh.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from core.exceptions import MeshError, MeshQueryError


@dataclass(frozen=True, eq=False)
class RefinedMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    parent: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_cells: np.ndarray
    tri_edges: np.ndarray
    face_normals: np.ndarray
    face_lengths: np.ndarray
    interior_faces: np.ndarray
    exterior_faces: np.ndarray
    areas: np.ndarray
    grad_lambda: np.ndarray
    h_max: float
    refined: RefinedMesh
    bounds: Tuple[float, float, float, float]
    dim: int = field(default=2)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def cell_points(self, cells: np.ndarray | None = None) -> np.ndarray:
        tris = self.triangles if cells is None else self.triangles[cells]
        return self.vertices[tris]

    def barycentric(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of ``points`` (..., 2) inside ``cells`` (...)."""
        p0 = self.vertices[self.triangles[cells, 0]]
        g = self.grad_lambda[cells]
        d = points - p0
        lam1 = np.einsum("...k,...k->...", g[..., 1, :], d)
        lam2 = np.einsum("...k,...k->...", g[..., 2, :], d)
        return np.stack([1.0 - lam1 - lam2, lam1, lam2], axis=-1)

    def p2_dofs(self) -> np.ndarray:
        """Cell-to-P2-node map: three vertices then the edges (0,1), (1,2), (2,0)."""
        return np.hstack([self.triangles, self.n_vertices + self.tri_edges])


def _triangle_areas(pts: np.ndarray) -> np.ndarray:
    e1 = pts[:, 1] - pts[:, 0]
    e2 = pts[:, 2] - pts[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _grad_barycentric(pts: np.ndarray) -> np.ndarray:
    jac = np.stack([pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0]], axis=-1)
    jinv = np.linalg.inv(jac)
    grads = np.empty((pts.shape[0], 3, 2))
    grads[:, 1] = jinv[:, 0, :]
    grads[:, 2] = jinv[:, 1, :]
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    return grads


def _structured_triangles(nx: int, ny: int, pattern: str) -> Tuple[np.ndarray, np.ndarray]:
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    a = j * (nx + 1) + i
    b = a + 1
    c = a + nx + 1
    d = c + 1
    if pattern == "right":
        tris = np.stack([np.stack([a, b, c], 1), np.stack([b, d, c], 1)], axis=1).reshape(-1, 3)
        return tris, np.empty((0, 2))
    if pattern == "crossed":
        m = (nx + 1) * (ny + 1) + np.arange(nx * ny)
        tris = np.stack(
            [np.stack([a, b, m], 1), np.stack([b, d, m], 1), np.stack([d, c, m], 1), np.stack([c, a, m], 1)],
            axis=1,
        ).reshape(-1, 3)
        centers = np.stack([i + 0.5, j + 0.5], axis=1)
        return tris, centers
    raise MeshError(f"unknown diagonal pattern '{pattern}'")


def _build_edges(triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = triangles.shape[0]
    local = [(0, 1), (1, 2), (2, 0)]
    all_edges = np.concatenate([np.sort(triangles[:, [p, q]], axis=1) for p, q in local])
    edges, inverse = np.unique(all_edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    tri_edges = inverse.reshape(3, m).T.copy()

    cells = np.tile(np.arange(m), 3)
    order = np.lexsort((cells, inverse))
    counts = np.bincount(inverse, minlength=edges.shape[0])
    if np.any(counts > 2):
        raise MeshError("non-manifold triangulation: an edge is shared by more than two triangles")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    sorted_cells = cells[order]
    edge_cells = np.full((edges.shape[0], 2), -1, dtype=np.int64)
    edge_cells[:, 0] = sorted_cells[starts]
    two = counts == 2
    edge_cells[two, 1] = sorted_cells[starts[two] + 1]
    return edges, edge_cells, tri_edges


def _refine(vertices: np.ndarray, triangles: np.ndarray, edges: np.ndarray, tri_edges: np.ndarray) -> RefinedMesh:
    nv = vertices.shape[0]
    mids = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    ref_vertices = np.vstack([vertices, mids])
    a, b, c = triangles.T
    m01, m12, m20 = (nv + tri_edges).T
    children = np.stack(
        [
            np.stack([a, m01, m20], 1),
            np.stack([m01, b, m12], 1),
            np.stack([m20, m12, c], 1),
            np.stack([m01, m12, m20], 1),
        ],
        axis=1,
    ).reshape(-1, 3)
    parent = np.repeat(np.arange(triangles.shape[0]), 4)
    return RefinedMesh(vertices=ref_vertices, triangles=children, parent=parent)


def from_triangles(vertices: np.ndarray, triangles: np.ndarray) -> BackgroundMesh:
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    pts = vertices[triangles]
    areas = _triangle_areas(pts)
    flip = areas < 0
    if np.any(flip):
        triangles = triangles.copy()
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        pts = vertices[triangles]
        areas = _triangle_areas(pts)
    if np.any(areas <= 0):
        raise MeshError("degenerate triangle with non-positive area")

    edges, edge_cells, tri_edges = _build_edges(triangles)
    p, q = vertices[edges[:, 0]], vertices[edges[:, 1]]
    tangent = q - p
    lengths = np.linalg.norm(tangent, axis=1)
    normals = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / lengths[:, None]
    centroid_plus = pts[edge_cells[:, 0]].mean(axis=1)
    inward = np.einsum("ij,ij->i", normals, 0.5 * (p + q) - centroid_plus) < 0
    normals[inward] *= -1.0

    diam = np.max(
        np.stack([np.linalg.norm(pts[:, k] - pts[:, (k + 1) % 3], axis=1) for k in range(3)], axis=1), axis=1
    )
    interior = np.flatnonzero(edge_cells[:, 1] >= 0)
    exterior = np.flatnonzero(edge_cells[:, 1] < 0)
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    return BackgroundMesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        edge_cells=edge_cells,
        tri_edges=tri_edges,
        face_normals=normals,
        face_lengths=lengths,
        interior_faces=interior,
        exterior_faces=exterior,
        areas=areas,
        grad_lambda=_grad_barycentric(pts),
        h_max=float(diam.max()),
        refined=_refine(vertices, triangles, edges, tri_edges),
        bounds=(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])),
    )


def build_structured(
        domain: Tuple[float, float, float, float],
        nx: int,
        ny: int,
        pattern: str = "right",
) -> BackgroundMesh:
    """Triangulate the rectangle ``(x0, x1, y0, y1)`` with ``nx`` by ``ny`` cells."""
    x0, x1, y0, y1 = (float(v) for v in domain)
    if nx < 1 or ny < 1:
        raise MeshError(f"subdivision counts must be positive, got nx={nx}, ny={ny}")
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.stack([gx.ravel(), gy.ravel()], axis=1)
    triangles, centers = _structured_triangles(nx, ny, pattern)
    if centers.size:
        dx, dy = (x1 - x0) / nx, (y1 - y0) / ny
        vertices = np.vstack([vertices, np.stack([x0 + centers[:, 0] * dx, y0 + centers[:, 1] * dy], axis=1)])
    return from_triangles(vertices, triangles)


def cells_for_size(length: float, h: float) -> int:
    return max(1, int(np.ceil(length / h - 1e-9)))


def face_jump_pairs(mesh: BackgroundMesh, face: int) -> Tuple[int, int, np.ndarray]:
    if face < 0 or face >= mesh.n_edges:
        raise MeshQueryError(f"face {face} does not exist")
    kplus, kminus = mesh.edge_cells[face]
    if kminus < 0:
        raise MeshQueryError(f"face {face} is an exterior face")
    return int(kplus), int(kminus), mesh.face_normals[face].copy()


def cell_adjacency(mesh: BackgroundMesh) -> np.ndarray:
    """Pairs of triangles sharing an interior face, one row per face."""
    return mesh.edge_cells[mesh.interior_faces]
