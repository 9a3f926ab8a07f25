"""Backward-Euler Stefan-Signorini step with the Nitsche projection formulation.

The interface constraint enters through the positive part of
``P(T) = (T - T_m) - gamma (k dT/dn - I.n)`` tested with
``theta1 v - gamma theta2 k dv/dn``; the nonlinearity is resolved with a
semi-smooth Newton method whose tangent uses the Heaviside of ``P``.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Protocol

import numpy as np
import scipy.sparse as sp

from core.exceptions import AssemblyError, ConfigError, NewtonConvergenceError
from fem.assembly import (
    BulkKernel,
    SparseSystem,
    Traces,
    assemble_bulk,
    assemble_ghost_penalty,
    assemble_load,
    assemble_neumann,
    assemble_nitsche_dirichlet,
    interface_traces,
    solve_sparse,
)
from fem.geometry import BoundaryMarker, CutGeometry
from fem.levelset import NormalField
from fem.spaces import FeField, FunctionSpace, interpolate, p1_active, transfer
from utils.log import get_logger

logger = get_logger("stefan")

SpaceTimeFunction = Callable[[np.ndarray, float], np.ndarray]
VARIANTS = {(1, 1), (1, -1), (1, 0), (0, -1)}


class BeamLike(Protocol):
    def flux(self, x: np.ndarray, t: float, projected_normal: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class MaterialParams:
    rho: float = 1.0
    c: float = 1.0
    k: float = 1.0
    L: float = 1.0
    T_m: float = 0.0

    def __post_init__(self) -> None:
        bad = [f"material.{name}: must be positive" for name in ("rho", "c", "k", "L") if getattr(self, name) <= 0]
        if bad:
            raise ConfigError(bad)


@dataclass(frozen=True)
class NitscheParams:
    theta1: int = 0
    theta2: int = -1
    gamma_hat: float = 1.0
    gamma_T: float = 0.1
    gamma_b: float = 100.0
    gamma_GT: float = 1e-3

    def __post_init__(self) -> None:
        errors = []
        if (self.theta1, self.theta2) not in VARIANTS:
            errors.append(f"nitsche.theta: ({self.theta1}, {self.theta2}) is not one of {sorted(VARIANTS)}")
        for name in ("gamma_hat", "gamma_T", "gamma_b", "gamma_GT"):
            if getattr(self, name) <= 0:
                errors.append(f"nitsche.{name}: must be positive")
        if errors:
            raise ConfigError(errors)

    def gamma(self, h: float) -> float:
        return self.gamma_hat * h


def _zero(x: np.ndarray, t: float) -> np.ndarray:
    return np.zeros(np.atleast_2d(x).shape[0])


@dataclass(frozen=True)
class ProblemSpec:
    material: MaterialParams
    nitsche: NitscheParams
    beam: BeamLike
    T0: Callable[[np.ndarray], np.ndarray]
    dt: float
    t0: float
    tf: float
    source: SpaceTimeFunction = _zero
    neumann_flux: Optional[SpaceTimeFunction] = None
    dirichlet_data: Optional[SpaceTimeFunction] = None
    dirichlet: Optional[BoundaryMarker] = None

    def __post_init__(self) -> None:
        errors = []
        if self.dt <= 0:
            errors.append("time.dt: must be positive")
        if not self.t0 <= self.tf:
            errors.append("time.tf: must not precede t0")
        if errors:
            raise ConfigError(errors)


@dataclass
class NewtonReport:
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)
    converged: bool = False
    active_set_changes: List[int] = field(default_factory=list)
    active_counts: List[int] = field(default_factory=list)
    fast_tail: Optional[bool] = None
    max_violation: float = float("nan")

    def as_dict(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "residual_history": list(self.residual_history),
            "converged": self.converged,
            "active_set_changes": list(self.active_set_changes),
            "active_counts": list(self.active_counts),
            "fast_tail": self.fast_tail,
            "max_violation": self.max_violation,
        }


def p_gamma(T_val, dTdn_val, I_dot_n, material: MaterialParams, gamma: float):
    return (np.asarray(T_val) - material.T_m) - gamma * (material.k * np.asarray(dTdn_val) - np.asarray(I_dot_n))


def signorini_kkt_equivalence_check(T_minus_Tm: float, sigma: float, gamma: float, tol: float = 1e-12) -> bool:
    """True when the complementarity triple and the projection identity agree.

    Both conditions are checked in the scaled variable ``s = gamma * sigma``
    with one relative tolerance, so enumeration of the sign cases is exact.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    x, s = float(T_minus_Tm), gamma * float(sigma)
    eps = tol * max(abs(x), abs(s))
    kkt = s <= eps and x <= eps and min(abs(x), abs(s)) <= eps
    # s + [x - s]_+ equals x when x > s and s otherwise
    residual = x if x > s else s
    proj = abs(residual) <= eps
    return kkt == proj


@dataclass(eq=False)
class StepOperator:
    """Linear part, load and interface traces of one time step on a frozen geometry."""
    space: FunctionSpace
    geometry: CutGeometry
    material: MaterialParams
    gamma: float
    linear: sp.csr_matrix
    load: np.ndarray
    traces: Traces
    i_dot_n: np.ndarray
    p_trial: sp.csr_matrix
    p_test: sp.csr_matrix

    def p_values(self, T: np.ndarray) -> np.ndarray:
        return self.p_trial @ T - self.material.T_m + self.gamma * self.i_dot_n

    def residual(self, T: np.ndarray) -> np.ndarray:
        positive = np.maximum(self.p_values(T), 0.0)
        nonlinear = self.p_test.T @ (self.traces.weights * positive / self.gamma)
        return self.load - self.linear @ T - nonlinear

    def tangent(self, T: np.ndarray) -> sp.csr_matrix:
        active = (self.p_values(T) > 0.0).astype(float)
        gate = sp.diags(self.traces.weights * active / self.gamma)
        return (self.linear + self.p_test.T @ gate @ self.p_trial).tocsr()

    def system(self, T: np.ndarray) -> SparseSystem:
        return SparseSystem(self.tangent(T), self.residual(T))

    def interface_temperature(self, T: np.ndarray) -> np.ndarray:
        return self.traces.value @ T


def interface_normal_samples(normal: NormalField, traces: Traces) -> np.ndarray:
    lam = normal.mesh.barycentric(traces.cells, traces.points)
    return normal.evaluate(traces.cells, lam)


def build_step_operator(
        geometry: CutGeometry,
        space: FunctionSpace,
        spec: ProblemSpec,
        T_prev: FeField,
        normal: NormalField,
        t_next: float,
) -> StepOperator:
    mat, nit = spec.material, spec.nitsche
    h = geometry.mesh.h_max
    gamma = nit.gamma(h)
    if not T_prev.space.is_compatible(space):
        raise AssemblyError("previous temperature is not on the current active space")

    mass = assemble_bulk(geometry, space, BulkKernel(mass=mat.rho * mat.c / spec.dt))
    stiffness = assemble_bulk(geometry, space, BulkKernel(stiffness=mat.k))
    ghost = assemble_ghost_penalty(geometry, space, nit.gamma_T * mat.k * h)
    data = None if spec.dirichlet_data is None else (lambda x: spec.dirichlet_data(x, t_next))
    bc_matrix, bc_rhs = assemble_nitsche_dirichlet(geometry, space, mat.k, nit.gamma_b, data)

    tr = interface_traces(geometry, space)
    val, dn = tr.value, tr.normal_derivative
    p_test = (nit.theta1 * val - gamma * nit.theta2 * mat.k * dn).tocsr()
    p_trial = (val - gamma * mat.k * dn).tocsr()
    consistency = ((p_test - val).T @ sp.diags(tr.weights * mat.k) @ dn).tocsr()

    flux = spec.beam.flux(tr.points, t_next, interface_normal_samples(normal, tr))
    i_dot_n = np.einsum("ij,ij->i", np.atleast_2d(flux), tr.normals) if tr.points.shape[0] else np.zeros(0)
    if not np.all(np.isfinite(i_dot_n)):
        bad = int(tr.cells[~np.isfinite(i_dot_n)][0])
        raise AssemblyError(f"non-finite beam flux on the interface segment of cell {bad}")

    load = (
            assemble_load(geometry, space, lambda x: spec.source(x, t_next))
            + assemble_neumann(geometry, space, None if spec.neumann_flux is None
                               else (lambda x: spec.neumann_flux(x, t_next)))
            + mass @ T_prev.coefficients
            + bc_rhs
            + p_test.T @ (tr.weights * i_dot_n)
    )
    if not np.all(np.isfinite(load)):
        raise AssemblyError("non-finite load vector in the temperature step")
    linear = (mass + stiffness + bc_matrix + ghost + consistency).tocsr()
    return StepOperator(space, geometry, mat, gamma, linear, load, tr, i_dot_n, p_trial, p_test)


def assemble_step_system(
        geometry: CutGeometry,
        spec: ProblemSpec,
        T_prev: FeField,
        T_iter: FeField,
        normal: NormalField,
        t_next: float,
) -> SparseSystem:
    """Newton tangent and residual at ``T_iter``."""
    op = build_step_operator(geometry, T_iter.space, spec, T_prev, normal, t_next)
    return op.system(T_iter.coefficients)


def initial_temperature(geometry: CutGeometry, spec: ProblemSpec) -> FeField:
    space = p1_active(geometry.mesh, geometry.active_cells)
    T = interpolate(space, spec.T0)
    tr = interface_traces(geometry, space)
    hot = tr.value @ T.coefficients >= spec.material.T_m
    if tr.points.shape[0] and np.any(hot):
        logger.warning("initial_temperature_above_melting", points=int(hot.sum()), of=int(hot.size))
    return T


def newton_solve(
        geometry: CutGeometry,
        spec: ProblemSpec,
        T_prev: FeField,
        normal: NormalField,
        t_next: float,
        atol: float = 1e-11,
        rtol: float = 1e-9,
        max_iterations: int = 30,
) -> tuple[FeField, NewtonReport]:
    """Semi-smooth Newton for the temperature at ``t_next`` on the geometry frozen at ``t_n``.

    ``T_prev`` may live on an older active space; it is transferred first and
    serves as the initial guess.
    """
    space = p1_active(geometry.mesh, geometry.active_cells)
    T_prev = transfer(T_prev, space)
    op = build_step_operator(geometry, space, spec, T_prev, normal, t_next)
    T = T_prev.coefficients.copy()
    report = NewtonReport()

    r = op.residual(T)
    r0 = float(np.linalg.norm(r))
    report.residual_history.append(r0)
    target = max(atol, rtol * r0)
    previous_active = op.p_values(T) > 0
    report.active_counts.append(int(previous_active.sum()))
    stable_for = 0

    while report.residual_history[-1] > target:
        if report.iterations >= max_iterations:
            report.max_violation = float(np.max(op.interface_temperature(T) - spec.material.T_m, initial=-np.inf))
            logger.error("newton_failed", **report.as_dict())
            raise NewtonConvergenceError(report)
        T = T + solve_sparse(op.tangent(T), r)
        report.iterations += 1
        r = op.residual(T)
        norm = float(np.linalg.norm(r))
        active = op.p_values(T) > 0
        changes = int(np.count_nonzero(active != previous_active))
        report.active_set_changes.append(changes)
        report.active_counts.append(int(active.sum()))
        stable_for = stable_for + 1 if changes == 0 else 0
        if stable_for >= 2 and report.residual_history[-1] > target:
            ratio = norm / report.residual_history[-1]
            report.fast_tail = (report.fast_tail is not False) and ratio <= 0.1
        report.residual_history.append(norm)
        previous_active = active
        logger.debug("newton_iteration", iteration=report.iterations, residual=norm, active_changes=changes)

    report.converged = True
    report.max_violation = float(np.max(op.interface_temperature(T) - spec.material.T_m, initial=-np.inf))
    logger.info(
        "newton_converged",
        iterations=report.iterations,
        residual=report.residual_history[-1],
        active=report.active_counts[-1],
        max_violation=report.max_violation,
    )
    return FeField(space, T), report
