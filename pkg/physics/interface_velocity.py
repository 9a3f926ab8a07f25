"""Interface speed: smoothed temperature gradient, Stefan normal velocity and its extension."""
from __future__ import annotations
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from core.exceptions import GeometryError, MarchingError
from fem.assembly import (
    BulkKernel,
    assemble_bulk,
    assemble_cells,
    assemble_ghost_penalty,
    interface_traces,
    solve_sparse,
)
from fem.geometry import CutGeometry
from fem.levelset import NormalField
from fem.marching import FastMarcher, closest_points
from fem.quadrature import triangle_rule
from fem.spaces import FeField, p1_background
from physics.stefan_nitsche import ProblemSpec, p_gamma
from utils.log import get_logger

logger = get_logger("velocity")

DEFAULT_BAND = 8.0


@dataclass(frozen=True, eq=False)
class VelocityField:
    speed: FeField
    distance: np.ndarray
    reached: np.ndarray
    vector: Optional[FeField] = None


def smooth_gradient(T: FeField, geometry: CutGeometry, gamma_GT: float) -> FeField:
    """Ghost-penalty stabilised L2 projection of grad T onto continuous P1 vectors on the active mesh."""
    if geometry.subtri_corners.shape[0] == 0 or geometry.area <= 0.0:
        raise GeometryError("cannot smooth a gradient on an empty physical domain")
    space = T.space
    mesh = space.mesh
    matrix = assemble_bulk(geometry, space, BulkKernel(mass=1.0)) + assemble_ghost_penalty(
        geometry, space, gamma_GT * mesh.h_max
    )
    parents = geometry.subtri_parent
    grad = T.gradient(parents)
    centroids = geometry.subtri_corners.mean(axis=1)
    lam = mesh.barycentric(parents, centroids)
    local = geometry.subtri_areas[:, None, None] * lam[:, :, None] * grad[:, None, :]
    rhs = np.zeros((space.n_dofs, 2))
    np.add.at(rhs, space.dof_map[parents], local)
    values = solve_sparse(matrix, rhs)
    return FeField(space.vector(), values)


def normal_velocity(
        T: FeField,
        G_T: FeField,
        normal: NormalField,
        geometry: CutGeometry,
        spec: ProblemSpec,
        t: float,
) -> FeField:
    """Stefan normal speed on the active mesh, gated pointwise by the Heaviside of ``P_gamma``."""
    space = T.space
    mesh = space.mesh
    mat, nit = spec.material, spec.nitsche
    gamma = nit.gamma(mesh.h_max)
    cells = geometry.active_cells

    rule = triangle_rule(4)
    corners = mesh.cell_points(cells)
    points = np.einsum("qk,skd->sqd", rule.points, corners).reshape(-1, 2)
    qcells = np.repeat(cells, rule.weights.size)
    lam = np.tile(rule.points, (cells.size, 1))
    n = normal.evaluate(qcells, lam)
    T_val = T.evaluate(qcells, lam)
    grad_T = T.gradient(qcells)
    G_val = G_T.evaluate(qcells, lam)
    i_dot_n = np.einsum("ij,ij->i", np.atleast_2d(spec.beam.flux(points, t, n)), n)
    gate = p_gamma(T_val, np.einsum("ij,ij->i", grad_T, n), i_dot_n, mat, gamma) > 0.0
    integrand = gate * (mat.k * np.einsum("ij,ij->i", G_val, n) - i_dot_n) / (mat.rho * mat.L)

    weights = (mesh.areas[cells][:, None] * rule.weights[None, :]).ravel()
    rhs = np.zeros(space.n_dofs)
    np.add.at(rhs, space.dof_map[qcells], (weights * integrand)[:, None] * lam)

    if nit.theta1 != 0:
        tr = interface_traces(geometry, space)
        T_gamma = tr.value @ T.coefficients
        dTdn = tr.normal_derivative @ T.coefficients
        n_proj = normal.evaluate(tr.cells, mesh.barycentric(tr.cells, tr.points))
        flux = np.einsum("ij,ij->i", np.atleast_2d(spec.beam.flux(tr.points, t, n_proj)), tr.normals)
        gate_gamma = p_gamma(T_gamma, dTdn, flux, mat, gamma) > 0.0
        rhs -= nit.theta1 / (gamma * mat.rho * mat.L) * tr.load(gate_gamma * (T_gamma - mat.T_m), tr.value)

    mass = assemble_cells(space, cells, BulkKernel(mass=1.0))
    values = solve_sparse(mass, rhs)
    logger.debug("normal_velocity", hot_fraction=float(gate.mean()), v_min=float(values.min()),
                 v_max=float(values.max()))
    return FeField(space, values)


def fast_march_extend(v_n: FeField, geometry: CutGeometry, band: float = DEFAULT_BAND) -> VelocityField:
    """Extend the interface speed to background P1 nodes within ``band * h`` of the interface.

    Nodes of cut cells take the value at their closest point on the interface;
    the rest follow by fast marching with value transport. Unreached nodes get 0.
    """
    mesh = geometry.mesh
    if geometry.is_empty_interface():
        raise MarchingError("velocity extension needs a non-empty interface")
    near = np.unique(mesh.triangles[geometry.cut_cells])
    xy = mesh.vertices[near]
    dist, seg, param = closest_points(xy, geometry.segments)
    ends = geometry.segments[seg]
    foot = ends[:, 0] + param[:, None] * (ends[:, 1] - ends[:, 0])
    parents = geometry.segment_parent[seg]
    seed_values = v_n.evaluate(parents, mesh.barycentric(parents, foot))

    marcher = FastMarcher(mesh.vertices, mesh.triangles)
    result = marcher.march(near, dist, seed_values, band=band * mesh.h_max)
    space = p1_background(mesh)
    speed = FeField(space, np.where(result.reached, result.values, 0.0))
    logger.debug("velocity_extended", seeds=int(near.size), reached=int(result.reached.sum()),
                 band=band * mesh.h_max)
    return VelocityField(speed=speed, distance=result.distance, reached=result.reached)


def vectorize(v: VelocityField, n: NormalField) -> FeField:
    space = v.speed.space
    return FeField(space.vector(), v.speed.coefficients[:, None] * n.values[space.node_ids])


def with_vector(v: VelocityField, n: NormalField) -> VelocityField:
    return replace(v, vector=vectorize(v, n))
