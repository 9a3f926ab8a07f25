"""Assembly of bulk, interface, ghost-penalty and Nitsche boundary forms.

Every form is assembled through sparse "trace" operators: rows are quadrature
points, columns are dofs, entries are shape-function values or normal
derivatives. A bilinear form is then ``test.T @ diag(weights) @ trial``, which
keeps accumulation order fixed and independent of any cell loop.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, onenormest, splu
from scipy.sparse.linalg import norm as sparse_norm

from core.exceptions import AssemblyError, GeometryError, SolverError
from fem.mesh import BackgroundMesh
from fem.quadrature import map_segment_points, map_triangle_points, segment_rule, triangle_areas, triangle_rule
from fem.spaces import FunctionSpace
from utils.log import get_logger

if TYPE_CHECKING:
    from fem.geometry import CutGeometry

logger = get_logger("assembly")

PointFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BulkKernel:
    """Coefficients of ``mass * (u, v) + stiffness * (grad u, grad v)``."""
    mass: float = 0.0
    stiffness: float = 0.0


@dataclass(eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray

    def __post_init__(self) -> None:
        self.matrix = sp.csr_matrix(self.matrix)
        self.rhs = np.asarray(self.rhs, dtype=float)
        n, m = self.matrix.shape
        if n != m:
            raise AssemblyError(f"system matrix is not square: {self.matrix.shape}")
        if self.rhs.shape[0] != n:
            raise AssemblyError(f"rhs length {self.rhs.shape[0]} does not match matrix size {n}")
        if not np.all(np.isfinite(self.matrix.data)) or not np.all(np.isfinite(self.rhs)):
            raise AssemblyError("non-finite entries in the assembled system")

    def solve(self) -> np.ndarray:
        return solve_sparse(self.matrix, self.rhs)


@dataclass(frozen=True, eq=False)
class Traces:
    """Shape-function traces at quadrature points of a set of segments."""
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    cells: np.ndarray
    value: sp.csr_matrix
    normal_derivative: sp.csr_matrix

    def form(self, trial: sp.spmatrix, test: sp.spmatrix, coefficient=1.0) -> sp.csr_matrix:
        w = self.weights * coefficient
        return (test.T @ sp.diags(w) @ trial).tocsr()

    def load(self, data: np.ndarray, test: sp.spmatrix) -> np.ndarray:
        return test.T @ (self.weights * data)


def _dofs(space: FunctionSpace, cells: np.ndarray) -> np.ndarray:
    dofs = space.dof_map[cells]
    if np.any(dofs < 0):
        raise AssemblyError(f"{int(np.any(dofs < 0, axis=-1).sum())} integration cell(s) lie outside the space")
    return dofs


def _trace_matrix(entries: np.ndarray, dofs: np.ndarray, n_dofs: int) -> sp.csr_matrix:
    rows = np.repeat(np.arange(entries.shape[0]), entries.shape[1])
    return sp.csr_matrix((entries.ravel(), (rows, dofs.ravel())), shape=(entries.shape[0], n_dofs))


def segment_traces(
        space: FunctionSpace,
        ends: np.ndarray,
        cells: np.ndarray,
        normals: np.ndarray,
        n_points: int = 3,
) -> Traces:
    """P1 traces on straight segments ``ends`` (G, 2, 2) lying in parent ``cells``."""
    if space.degree != 1:
        raise AssemblyError("segment traces are implemented for P1 spaces")
    if cells.size and (cells.min() < 0 or cells.max() >= space.mesh.n_triangles):
        raise GeometryError("segment with missing parent cell")
    mesh = space.mesh
    rule = segment_rule(n_points)
    q = rule.points.size
    points = map_segment_points(ends, rule).reshape(-1, 2)
    lengths = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
    weights = (lengths[:, None] * rule.weights[None, :]).ravel()
    qcells = np.repeat(cells, q)
    qnormals = np.repeat(normals, q, axis=0)
    lam = mesh.barycentric(qcells, points)
    dn = np.einsum("gkd,gd->gk", mesh.grad_lambda[qcells], qnormals)
    dofs = _dofs(space, qcells)
    return Traces(
        points=points,
        weights=weights,
        normals=qnormals,
        cells=qcells,
        value=_trace_matrix(lam, dofs, space.n_dofs),
        normal_derivative=_trace_matrix(dn, dofs, space.n_dofs),
    )


def interface_traces(geometry: "CutGeometry", space: FunctionSpace, n_points: int = 3) -> Traces:
    return segment_traces(space, geometry.segments, geometry.segment_parent, geometry.segment_normals, n_points)


def dirichlet_traces(geometry: "CutGeometry", space: FunctionSpace, n_points: int = 3) -> Traces:
    mesh = space.mesh
    faces = geometry.dirichlet_faces
    ends = mesh.vertices[mesh.edges[faces]]
    return segment_traces(space, ends, mesh.edge_cells[faces, 0], mesh.face_normals[faces], n_points)


def neumann_traces(geometry: "CutGeometry", space: FunctionSpace, n_points: int = 3) -> Traces:
    return segment_traces(space, geometry.neumann_segments, geometry.neumann_parent, geometry.neumann_normals,
                          n_points)


def assemble_bulk_on(
        space: FunctionSpace,
        corners: np.ndarray,
        parents: np.ndarray,
        kernel: BulkKernel,
) -> sp.csr_matrix:
    """P1 mass/stiffness integrated over straight sub-triangles ``corners`` (S, 3, 2)."""
    mesh = space.mesh
    n = space.n_dofs
    if corners.shape[0] == 0:
        return sp.csr_matrix((n, n))
    dofs = _dofs(space, parents)
    areas = triangle_areas(corners)
    local = np.zeros((corners.shape[0], 3, 3))
    if kernel.mass:
        rule = triangle_rule(2)
        points = map_triangle_points(corners, rule)
        lam = mesh.barycentric(parents[:, None], points)
        local += kernel.mass * np.einsum("s,q,sqi,sqj->sij", areas, rule.weights, lam, lam)
    if kernel.stiffness:
        g = mesh.grad_lambda[parents]
        local += kernel.stiffness * np.einsum("s,sid,sjd->sij", areas, g, g)
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_bulk(geometry: "CutGeometry", space: FunctionSpace, kernel: BulkKernel) -> sp.csr_matrix:
    """Bulk form over the physical domain (the inside sub-triangles)."""
    if space.mesh is not geometry.mesh:
        raise AssemblyError("space and geometry use different background meshes")
    return assemble_bulk_on(space, geometry.subtri_corners, geometry.subtri_parent, kernel)


def assemble_cells(space: FunctionSpace, cells: np.ndarray, kernel: BulkKernel) -> sp.csr_matrix:
    """Bulk form over whole background cells (the active mesh, or all of it)."""
    return assemble_bulk_on(space, space.mesh.cell_points(cells), cells, kernel)


def assemble_load_on(
        space: FunctionSpace,
        corners: np.ndarray,
        parents: np.ndarray,
        fn: PointFunction,
        degree: int = 4,
) -> np.ndarray:
    """Load vector of ``fn`` (points (N, 2) -> values (N,) or (N, 2)) tested with P1 hats."""
    mesh = space.mesh
    if corners.shape[0] == 0:
        return np.zeros(space.n_dofs)
    rule = triangle_rule(degree)
    points = map_triangle_points(corners, rule)
    lam = mesh.barycentric(parents[:, None], points)
    values = np.asarray(fn(points.reshape(-1, 2)), dtype=float)
    values = values.reshape(points.shape[:2] + values.shape[1:])
    wa = triangle_areas(corners)[:, None] * rule.weights[None, :]
    dofs = _dofs(space, parents)
    if values.ndim == 2:
        local = np.einsum("sq,sq,sqi->si", wa, values, lam)
        out = np.zeros(space.n_dofs)
    else:
        local = np.einsum("sq,sqd,sqi->sid", wa, values, lam)
        out = np.zeros((space.n_dofs, values.shape[-1]))
    np.add.at(out, dofs, local)
    return out


def assemble_load(geometry: "CutGeometry", space: FunctionSpace, fn: PointFunction, degree: int = 4) -> np.ndarray:
    return assemble_load_on(space, geometry.subtri_corners, geometry.subtri_parent, fn, degree)


def assemble_interface(
        traces: Traces,
        trial: tuple = (1.0, 0.0),
        test: tuple = (1.0, 0.0),
        coefficient=1.0,
) -> sp.csr_matrix:
    """Interface form ``(a u + b du/dn, c v + d dv/dn)`` on the traced segments.

    ``trial = (a, b)`` and ``test = (c, d)``; ``coefficient`` may be a scalar
    or one value per quadrature point.
    """
    a, b = trial
    c, d = test
    trial_op = a * traces.value + b * traces.normal_derivative
    test_op = c * traces.value + d * traces.normal_derivative
    return traces.form(trial_op, test_op, coefficient)


def ghost_jump_operator(space: FunctionSpace, faces: np.ndarray) -> sp.csr_matrix:
    """Rows: faces; entries: jump of the normal derivative of each P1 hat across the face."""
    mesh = space.mesh
    n = space.n_dofs
    if faces.size == 0:
        return sp.csr_matrix((0, n))
    kp, km = mesh.edge_cells[faces, 0], mesh.edge_cells[faces, 1]
    if np.any(km < 0):
        raise AssemblyError("ghost penalty requested on an exterior face")
    normal = mesh.face_normals[faces]
    jp = np.einsum("fkd,fd->fk", mesh.grad_lambda[kp], normal)
    jm = -np.einsum("fkd,fd->fk", mesh.grad_lambda[km], normal)
    entries = np.hstack([jp, jm])
    dofs = np.hstack([_dofs(space, kp), _dofs(space, km)])
    return _trace_matrix(entries, dofs, n)


def assemble_ghost_penalty(geometry: "CutGeometry", space: FunctionSpace, coefficient: float) -> sp.csr_matrix:
    """``coefficient * |F| * [dv/dn] [du/dn]`` summed over the ghost faces."""
    jump = ghost_jump_operator(space, geometry.ghost_faces)
    lengths = space.mesh.face_lengths[geometry.ghost_faces]
    return (jump.T @ sp.diags(coefficient * lengths) @ jump).tocsr()


def assemble_nitsche_dirichlet(
        geometry: "CutGeometry",
        space: FunctionSpace,
        conductivity: float,
        gamma_b: float,
        data: Optional[PointFunction] = None,
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Symmetric Nitsche terms on the Dirichlet faces and the matching rhs."""
    if gamma_b <= 0:
        raise AssemblyError(f"Dirichlet penalty must be positive, got {gamma_b}")
    n = space.n_dofs
    if geometry.dirichlet_faces.size == 0:
        return sp.csr_matrix((n, n)), np.zeros(n)
    tr = dirichlet_traces(geometry, space)
    k = conductivity
    h = space.mesh.h_max
    val, dn = tr.value, tr.normal_derivative
    matrix = -k * tr.form(dn, val) - k * tr.form(val, dn) + (k * gamma_b / h) * tr.form(val, val)
    if data is None:
        return matrix.tocsr(), np.zeros(n)
    g = np.asarray(data(tr.points), dtype=float)
    rhs = -k * tr.load(g, dn) + (k * gamma_b / h) * tr.load(g, val)
    return matrix.tocsr(), rhs


def assemble_neumann(geometry: "CutGeometry", space: FunctionSpace, flux: Optional[PointFunction]) -> np.ndarray:
    if flux is None or geometry.neumann_segments.shape[0] == 0:
        return np.zeros(space.n_dofs)
    tr = neumann_traces(geometry, space)
    return tr.load(np.asarray(flux(tr.points), dtype=float), tr.value)


def background_mass_matrix(mesh: BackgroundMesh) -> sp.csr_matrix:
    """Exact P1 mass matrix over all background cells."""
    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    vals = mesh.areas[:, None, None] * local[None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _factorize(matrix: sp.spmatrix):
    try:
        return splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise SolverError("sparse LU factorization failed", {"n": matrix.shape[0], "reason": str(exc)}) from exc


def solve_sparse(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse solve with a relative residual check."""
    matrix = sp.csr_matrix(matrix)
    rhs = np.asarray(rhs, dtype=float)
    n, m = matrix.shape
    if n != m:
        raise SolverError("matrix is not square", {"shape": matrix.shape})
    if rhs.shape[0] != n or not np.all(np.isfinite(rhs)):
        raise SolverError("rhs is not finite or has the wrong length", {"n": n, "rhs_shape": rhs.shape})
    if n == 0:
        return rhs.copy()
    lu = _factorize(matrix)
    x = lu.solve(rhs)
    residual = float(np.linalg.norm(matrix @ x - rhs))
    bound = 1e-10 * (float(np.linalg.norm(rhs)) + sparse_norm(matrix) * float(np.linalg.norm(x)))
    if not np.all(np.isfinite(x)) or residual > bound:
        raise SolverError("sparse solve lost accuracy", {"n": n, "residual": f"{residual:.3e}", "bound": f"{bound:.3e}"})
    return x


def condition_estimate(matrix: sp.spmatrix) -> float:
    """1-norm condition number estimate using the sparse LU factors."""
    matrix = sp.csc_matrix(matrix)
    lu = _factorize(matrix)
    n = matrix.shape[0]
    inverse = LinearOperator(
        (n, n),
        matvec=lambda v: lu.solve(np.asarray(v, dtype=float).ravel()),
        rmatvec=lambda v: lu.solve(np.asarray(v, dtype=float).ravel(), trans="T"),
        dtype=float,
    )
    kappa = float(onenormest(matrix) * onenormest(inverse))
    # a numerically singular factorisation can yield nan instead of raising
    return kappa if np.isfinite(kappa) else float("inf")
