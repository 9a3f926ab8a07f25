"""Turn a validated ``RunConfig`` into meshes, initial level set and solver parameters."""
from __future__ import annotations
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from benchmark.manufactured import ManufacturedBeam, ManufacturedCase
from core.config import LevelSetConfig, RunConfig, compile_expression
from core.exceptions import ConfigError
from core.orchestrator_stefan import StefanOrchestrator
from fem.geometry import BoundaryMarker, boundary_marker
from fem.levelset import LevelSetField
from fem.mesh import BackgroundMesh, build_structured, cells_for_size
from physics.laser import BeamSource, BeamSpec, FocalPath
from physics.stefan_nitsche import BeamLike, MaterialParams, NitscheParams, ProblemSpec
from stages import (
    AdvectionStage,
    CutStage,
    ExtensionStage,
    GradientStage,
    NormalStage,
    RedistanceStage,
    TemperatureStage,
    VelocityStage,
)


@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    config: RunConfig
    mesh: BackgroundMesh
    phi0: LevelSetField
    spec: ProblemSpec
    dirichlet: Optional[BoundaryMarker] = None
    case: Optional[ManufacturedCase] = None

    def orchestrator(self) -> StefanOrchestrator:
        ls, newton = self.config.levelset, self.config.newton
        return StefanOrchestrator(
            cut=CutStage(self.dirichlet, max_walk=ls.max_walk),
            normal=NormalStage(),
            temperature=TemperatureStage(
                self.spec, atol=newton.atol, rtol=newton.rtol, max_iterations=newton.max_iterations
            ),
            gradient=GradientStage(self.spec.nitsche.gamma_GT),
            velocity=VelocityStage(self.spec),
            extension=ExtensionStage(ls.band),
            advection=AdvectionStage(ls.theta),
            redistance=RedistanceStage(ls.redistance_threshold),
        )


def build_mesh(config: RunConfig) -> BackgroundMesh:
    x0, x1, y0, y1 = config.domain.bounds
    h = config.domain.h
    return build_structured(
        config.domain.bounds, cells_for_size(x1 - x0, h), cells_for_size(y1 - y0, h), config.domain.pattern
    )


def level_set_function(ls: LevelSetConfig, t0: float) -> Callable[[np.ndarray], np.ndarray]:
    """Initial level set, negative in the material."""
    if ls.kind == "plane":
        n = np.asarray(ls.normal, dtype=float)
        n = n / np.linalg.norm(n)
        p = np.asarray(ls.point, dtype=float)
        return lambda x: (np.atleast_2d(x) - p) @ n
    if ls.kind == "circle":
        c = np.asarray(ls.center, dtype=float)
        sign = 1.0 if ls.material_inside else -1.0
        return lambda x: sign * (np.linalg.norm(np.atleast_2d(x) - c, axis=1) - ls.radius)
    expr = compile_expression(ls.expression)
    return lambda x: expr(x, t0)


def build_beam(config: RunConfig) -> BeamSource:
    if config.beam is None:
        return BeamSource()
    b, p = config.beam, config.beam.path
    path = FocalPath(
        mode=p.mode,
        start=tuple(p.start),
        velocity=tuple(p.velocity),
        t_change=p.t_change,
        waypoints=tuple(tuple(w) for w in p.waypoints),
        t0=config.time.t0,
        tf=config.time.tf,
    )
    return BeamSource(BeamSpec(
        sigma=b.sigma,
        amplitude=b.amplitude,
        e_ray=tuple(b.e_ray),
        path=path,
        pulse_period=b.pulse_period,
        epsilon=b.epsilon,
        t_on=-np.inf if b.t_on is None else b.t_on,
        t_off=np.inf if b.t_off is None else b.t_off,
    ))


def _params(config: RunConfig) -> tuple[MaterialParams, NitscheParams]:
    return MaterialParams(**config.material.model_dump()), NitscheParams(**config.nitsche.model_dump())


def _manufactured(config: RunConfig, mesh: BackgroundMesh) -> Problem:
    material, nitsche = _params(config)
    case = ManufacturedCase(material)
    t0 = config.time.t0
    dirichlet = boundary_marker(("all",), config.domain.bounds)
    spec = ProblemSpec(
        material=material,
        nitsche=nitsche,
        beam=ManufacturedBeam(case),
        T0=lambda x: case.temperature(x, t0),
        dt=config.time.dt,
        t0=t0,
        tf=config.time.tf,
        source=case.source,
        dirichlet_data=case.temperature,
        dirichlet=dirichlet,
    )
    phi0 = LevelSetField.from_function(mesh, lambda x: case.level_set(x, t0))
    return Problem(config.name, config, mesh, phi0, spec, dirichlet, case)


def _general(config: RunConfig, mesh: BackgroundMesh, beam: BeamLike) -> Problem:
    material, nitsche = _params(config)
    t0 = config.time.t0
    bc = config.boundary
    dirichlet = boundary_marker(tuple(bc.dirichlet), config.domain.bounds) if bc.dirichlet else None
    T0 = compile_expression(config.initial_temperature)
    spec = ProblemSpec(
        material=material,
        nitsche=nitsche,
        beam=beam,
        T0=lambda x: T0(x, t0),
        dt=config.time.dt,
        t0=t0,
        tf=config.time.tf,
        source=compile_expression(config.source),
        neumann_flux=None if bc.flux is None else compile_expression(bc.flux),
        dirichlet_data=compile_expression(bc.temperature) if dirichlet is not None else None,
        dirichlet=dirichlet,
    )
    phi0 = LevelSetField.from_function(mesh, level_set_function(config.levelset, t0))
    return Problem(config.name, config, mesh, phi0, spec, dirichlet)


def build_problem(config: RunConfig) -> Problem:
    mesh = build_mesh(config)
    if config.scenario == "manufactured":
        if config.time.tf >= 2.0 / 3.0:
            raise ConfigError(["time.tf: the manufactured case is defined for t < 2/3"])
        return _manufactured(config, mesh)
    if config.scenario == "ablation" and config.beam is None:
        raise ConfigError(["beam: the ablation scenario needs a beam block"])
    return _general(config, mesh, build_beam(config))
