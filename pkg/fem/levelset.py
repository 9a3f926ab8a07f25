"""Piecewise quadratic level-set field on the background mesh.

Coefficients are indexed by P2 node: the background vertices first, then one
node per edge midpoint. That ordering coincides with the vertex numbering of
the refined mesh, so the refined linear interpolant has exactly the P2
coefficients as nodal values.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Callable

import numpy as np

from core.exceptions import AssemblyError
from fem.assembly import background_mass_matrix, solve_sparse
from fem.mesh import BackgroundMesh, RefinedMesh
from fem.quadrature import triangle_rule

EPS_GRAD = 1e-12
SNAP_FACTOR = 1e-10


def p2_basis(lam: np.ndarray) -> np.ndarray:
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
        axis=-1,
    )


def p2_basis_grad(lam: np.ndarray, glam: np.ndarray) -> np.ndarray:
    """Gradients (..., 6, 2) of the P2 basis given barycentric gradients (..., 3, 2)."""
    lam, glam = np.broadcast_arrays(lam[..., :, None], glam)
    l0, l1, l2 = lam[..., 0, :], lam[..., 1, :], lam[..., 2, :]
    g0, g1, g2 = glam[..., 0, :], glam[..., 1, :], glam[..., 2, :]
    return np.stack(
        [
            (4 * l0 - 1) * g0,
            (4 * l1 - 1) * g1,
            (4 * l2 - 1) * g2,
            4 * (l1 * g0 + l0 * g1),
            4 * (l2 * g1 + l1 * g2),
            4 * (l0 * g2 + l2 * g0),
        ],
        axis=-2,
    )


@dataclass(frozen=True, eq=False)
class LevelSetField:
    mesh: BackgroundMesh
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coefficients, dtype=float)
        expected = self.mesh.n_vertices + self.mesh.n_edges
        if coeffs.shape != (expected,):
            raise AssemblyError(f"level set needs {expected} P2 coefficients, got shape {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise AssemblyError("non-finite level-set coefficients")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def from_function(cls, mesh: BackgroundMesh, fn: Callable[[np.ndarray], np.ndarray]) -> "LevelSetField":
        """Nodal P2 interpolant of ``fn``, which receives points of shape (N, 2)."""
        values = np.broadcast_to(np.asarray(fn(mesh.refined.vertices), dtype=float), (mesh.refined.n_vertices,))
        return cls(mesh, values.copy())

    def with_coefficients(self, coefficients: np.ndarray) -> "LevelSetField":
        return LevelSetField(self.mesh, coefficients)

    def cell_coefficients(self, cells: np.ndarray) -> np.ndarray:
        return self.coefficients[self.mesh.p2_dofs()[cells]]

    def evaluate(self, cells: np.ndarray, lam: np.ndarray) -> np.ndarray:
        return np.einsum("...i,...i->...", self.cell_coefficients(cells), p2_basis(lam))

    def gradient(self, cells: np.ndarray, lam: np.ndarray) -> np.ndarray:
        grads = p2_basis_grad(lam, self.mesh.grad_lambda[cells])
        return np.einsum("...i,...id->...d", self.cell_coefficients(cells), grads)

    def evaluate_at(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        return self.evaluate(cells, self.mesh.barycentric(cells, points))

    def gradient_at(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        return self.gradient(cells, self.mesh.barycentric(cells, points))


@dataclass(frozen=True, eq=False)
class RefinedLinearField:
    refined: RefinedMesh
    values: np.ndarray

    def gradients(self) -> np.ndarray:
        """Constant gradient per refined triangle, shape (R, 2)."""
        pts = self.refined.vertices[self.refined.triangles]
        e1 = pts[:, 1] - pts[:, 0]
        e2 = pts[:, 2] - pts[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        v = self.values[self.refined.triangles]
        d1, d2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        gx = (d1 * e2[:, 1] - d2 * e1[:, 1]) / det
        gy = (-d1 * e2[:, 0] + d2 * e1[:, 0]) / det
        return np.stack([gx, gy], axis=1)


def interpolate_to_refined_linear(phi: LevelSetField) -> RefinedLinearField:
    return RefinedLinearField(phi.mesh.refined, phi.coefficients.copy())


def snapped_values(values: np.ndarray, h: float) -> np.ndarray:
    """Nodal values with near-zero crossings moved to the material side."""
    tol = SNAP_FACTOR * h
    out = np.asarray(values, dtype=float).copy()
    out[np.abs(out) < tol] = -tol
    return out


def cut_band_cells(phi: LevelSetField) -> np.ndarray:
    """Background cells whose P2 nodes change sign after snapping."""
    v = snapped_values(phi.coefficients, phi.mesh.h_max)[phi.mesh.p2_dofs()]
    return np.flatnonzero(np.any(v < 0, axis=1) & np.any(v >= 0, axis=1))


def needs_redistance(phi: LevelSetField, threshold: float = 0.5) -> bool:
    cells = cut_band_cells(phi)
    if cells.size == 0:
        return False
    rule = triangle_rule(4)
    grad = phi.gradient(cells[:, None], rule.points)
    deviation = np.abs(np.linalg.norm(grad, axis=-1) - 1.0)
    return bool(deviation.max() > threshold)


@dataclass(frozen=True, eq=False)
class NormalField:
    """Projected interface normal, one vector per background vertex."""
    mesh: BackgroundMesh
    values: np.ndarray

    def evaluate(self, cells: np.ndarray, lam: np.ndarray) -> np.ndarray:
        return np.einsum("...kd,...k->...d", self.values[self.mesh.triangles[cells]], lam)

    def evaluate_at(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        return self.evaluate(cells, self.mesh.barycentric(cells, points))


def project_normal(phi: LevelSetField) -> NormalField:
    """L2 projection of grad(phi)/|grad(phi)| onto continuous P1 vectors over the background domain."""
    mesh = phi.mesh
    rule = triangle_rule(4)
    cells = np.arange(mesh.n_triangles)
    grad = phi.gradient(cells[:, None], rule.points)
    unit = grad / np.maximum(np.linalg.norm(grad, axis=-1, keepdims=True), EPS_GRAD)
    wa = mesh.areas[:, None] * rule.weights[None, :]
    local = np.einsum("mq,qk,mqd->mkd", wa, rule.points, unit)
    rhs = np.zeros((mesh.n_vertices, 2))
    np.add.at(rhs, mesh.triangles, local)
    values = solve_sparse(background_mass_matrix(mesh), rhs)
    return NormalField(mesh, values)
