"""Lagrange function spaces on the background mesh or on the active mesh."""
from __future__ import annotations
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from core.exceptions import AssemblyError
from fem.mesh import BackgroundMesh


class SpaceKind(str, Enum):
    P1_ACTIVE = "P1-active"
    P1_BACKGROUND = "P1-background"
    P2_BACKGROUND = "P2-background"
    P1_VECTOR_ACTIVE = "P1-vector-active"
    P1_VECTOR_BACKGROUND = "P1-vector-background"


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    kind: SpaceKind
    mesh: BackgroundMesh
    dof_map: np.ndarray
    node_ids: np.ndarray
    node_to_dof: np.ndarray
    value_dim: int = 1

    @property
    def n_dofs(self) -> int:
        return int(self.node_ids.shape[0])

    @property
    def degree(self) -> int:
        return 2 if self.kind is SpaceKind.P2_BACKGROUND else 1

    @property
    def cells(self) -> np.ndarray:
        return np.flatnonzero(self.dof_map[:, 0] >= 0)

    def node_coordinates(self) -> np.ndarray:
        if self.degree == 2:
            return self.mesh.refined.vertices[self.node_ids]
        return self.mesh.vertices[self.node_ids]

    def vector(self) -> "FunctionSpace":
        kind = {
            SpaceKind.P1_ACTIVE: SpaceKind.P1_VECTOR_ACTIVE,
            SpaceKind.P1_BACKGROUND: SpaceKind.P1_VECTOR_BACKGROUND,
        }.get(self.kind)
        if kind is None:
            raise AssemblyError(f"no vector companion for {self.kind.value}")
        return FunctionSpace(kind, self.mesh, self.dof_map, self.node_ids, self.node_to_dof, value_dim=2)

    def scalar(self) -> "FunctionSpace":
        kind = {
            SpaceKind.P1_VECTOR_ACTIVE: SpaceKind.P1_ACTIVE,
            SpaceKind.P1_VECTOR_BACKGROUND: SpaceKind.P1_BACKGROUND,
        }.get(self.kind, self.kind)
        return FunctionSpace(kind, self.mesh, self.dof_map, self.node_ids, self.node_to_dof, value_dim=1)

    def is_compatible(self, other: "FunctionSpace") -> bool:
        return (
            self.mesh is other.mesh
            and self.degree == other.degree
            and np.array_equal(self.node_ids, other.node_ids)
        )


def _space_from_cells(kind: SpaceKind, mesh: BackgroundMesh, local: np.ndarray, cell_mask: np.ndarray,
                      n_nodes: int) -> FunctionSpace:
    used = np.zeros(n_nodes, dtype=bool)
    used[local[cell_mask].ravel()] = True
    node_ids = np.flatnonzero(used)
    node_to_dof = np.full(n_nodes, -1, dtype=np.int64)
    node_to_dof[node_ids] = np.arange(node_ids.shape[0])
    dof_map = np.full(local.shape, -1, dtype=np.int64)
    dof_map[cell_mask] = node_to_dof[local[cell_mask]]
    return FunctionSpace(kind, mesh, dof_map, node_ids, node_to_dof)


def p1_active(mesh: BackgroundMesh, active_cells: np.ndarray) -> FunctionSpace:
    mask = np.zeros(mesh.n_triangles, dtype=bool)
    mask[active_cells] = True
    return _space_from_cells(SpaceKind.P1_ACTIVE, mesh, mesh.triangles, mask, mesh.n_vertices)


def p1_background(mesh: BackgroundMesh) -> FunctionSpace:
    mask = np.ones(mesh.n_triangles, dtype=bool)
    return _space_from_cells(SpaceKind.P1_BACKGROUND, mesh, mesh.triangles, mask, mesh.n_vertices)


def p2_background(mesh: BackgroundMesh) -> FunctionSpace:
    mask = np.ones(mesh.n_triangles, dtype=bool)
    return _space_from_cells(SpaceKind.P2_BACKGROUND, mesh, mesh.p2_dofs(), mask, mesh.refined.n_vertices)


@dataclass(eq=False)
class FeField:
    space: FunctionSpace
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        expected = (self.space.n_dofs,) if self.space.value_dim == 1 else (self.space.n_dofs, self.space.value_dim)
        if self.coefficients.shape != expected:
            raise AssemblyError(
                f"coefficient shape {self.coefficients.shape} does not match space {self.space.kind.value} {expected}"
            )
        if not np.all(np.isfinite(self.coefficients)):
            raise AssemblyError(f"non-finite coefficients in {self.space.kind.value} field")

    def copy(self) -> "FeField":
        return FeField(self.space, self.coefficients.copy())

    def cell_coefficients(self, cells: np.ndarray) -> np.ndarray:
        dofs = self.space.dof_map[cells]
        if np.any(dofs < 0):
            raise AssemblyError("field evaluated on a cell outside its space")
        return self.coefficients[dofs]

    def evaluate(self, cells: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """P1 values at barycentric points ``lam`` (..., 3) in ``cells`` (...)."""
        if self.space.degree != 1:
            raise AssemblyError("evaluate() handles P1 fields only; use LevelSetField for P2")
        c = self.cell_coefficients(cells)
        if self.space.value_dim == 1:
            return np.einsum("...k,...k->...", c, lam)
        return np.einsum("...kd,...k->...d", c, lam)

    def gradient(self, cells: np.ndarray) -> np.ndarray:
        """Cellwise constant gradient of a scalar P1 field, shape (..., 2)."""
        c = self.cell_coefficients(cells)
        return np.einsum("...k,...kd->...d", c, self.space.mesh.grad_lambda[cells])


def interpolate(space: FunctionSpace, fn) -> FeField:
    values = np.asarray(fn(space.node_coordinates()), dtype=float)
    return FeField(space, values)


def transfer(field: FeField, new_space: FunctionSpace) -> FeField:
    """Move a field onto another dof set of the same background mesh.

    Nodes present in both spaces keep their value; new nodes copy the value of
    the nearest node of the old space.
    """
    old = field.space
    values = field.coefficients
    shape = (new_space.n_dofs,) if values.ndim == 1 else (new_space.n_dofs, values.shape[1])
    out = np.empty(shape)
    old_dof = old.node_to_dof[new_space.node_ids]
    kept = old_dof >= 0
    out[kept] = values[old_dof[kept]]
    if not np.all(kept):
        tree = cKDTree(old.node_coordinates())
        _, nearest = tree.query(new_space.node_coordinates()[~kept])
        out[~kept] = values[nearest]
    return FeField(new_space, out)
