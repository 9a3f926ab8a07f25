"""Run configuration: YAML files validated by pydantic models.

Space-time expressions (initial level set, temperatures, sources) are plain
strings in ``x``, ``y`` and ``t`` parsed by sympy and compiled to numpy.
"""
from __future__ import annotations
import os
from functools import lru_cache
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
import sympy
import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, field_validator, model_validator

from core.exceptions import ConfigError

SYMBOLS = sympy.symbols("x y t")
ALLOWED = {s.name for s in SYMBOLS}
Sides = Literal["left", "right", "bottom", "top", "all"]


@lru_cache(maxsize=None)
def _parse(expression: str) -> sympy.Expr:
    expr = sympy.sympify(expression, locals={s.name: s for s in SYMBOLS})
    unknown = {s.name for s in expr.free_symbols} - ALLOWED
    if unknown:
        raise ValueError(f"unknown symbol(s) {sorted(unknown)} in '{expression}'; use x, y, t")
    return expr


def compile_expression(expression: str) -> Callable[[np.ndarray, float], np.ndarray]:
    """Compile ``expression`` into ``fn(points (N, 2), t) -> values (N,)``."""
    fn = sympy.lambdify(SYMBOLS, _parse(expression), modules="numpy")

    def evaluate(points: np.ndarray, t: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        values = fn(points[:, 0], points[:, 1], t)
        return np.broadcast_to(np.asarray(values, dtype=float), (points.shape[0],)).copy()

    return evaluate


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Block):
    bounds: Tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    h: PositiveFloat = 0.05
    pattern: Literal["right", "crossed"] = "right"

    @model_validator(mode="after")
    def _rectangle(self) -> "DomainConfig":
        x0, x1, y0, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError("bounds must be (x0, x1, y0, y1) with x1 > x0 and y1 > y0")
        return self


class TimeConfig(_Block):
    t0: float = 0.0
    tf: float = 0.1
    dt: PositiveFloat = 1e-3

    @model_validator(mode="after")
    def _interval(self) -> "TimeConfig":
        if self.tf < self.t0:
            raise ValueError("tf must not precede t0")
        return self


class MaterialConfig(_Block):
    rho: PositiveFloat = 1.0
    c: PositiveFloat = 1.0
    k: PositiveFloat = 1.0
    L: PositiveFloat = 1.0
    T_m: float = 0.0


class NitscheConfig(_Block):
    theta1: int = 0
    theta2: int = -1
    gamma_hat: PositiveFloat = 1.0
    gamma_T: PositiveFloat = 0.1
    gamma_b: PositiveFloat = 100.0
    gamma_GT: PositiveFloat = 1e-3

    @model_validator(mode="after")
    def _variant(self) -> "NitscheConfig":
        if (self.theta1, self.theta2) not in {(1, 1), (1, -1), (1, 0), (0, -1)}:
            raise ValueError(f"(theta1, theta2) = ({self.theta1}, {self.theta2}) is not a supported variant")
        return self


class PathConfig(_Block):
    mode: Literal["fixed", "raster", "waypoints"] = "fixed"
    start: Tuple[float, float] = (0.0, 0.0)
    velocity: Tuple[float, float] = (0.0, 0.0)
    t_change: float = 0.0
    waypoints: List[Tuple[float, float, float]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _schedule(self) -> "PathConfig":
        if self.mode == "raster" and self.t_change <= 0:
            raise ValueError("raster paths need t_change > 0")
        if self.mode == "waypoints":
            times = [w[0] for w in self.waypoints]
            if len(times) < 2 or any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("waypoints need at least two rows with strictly increasing times")
        return self


class BeamConfig(_Block):
    sigma: PositiveFloat = 0.1
    amplitude: float = 2.0
    e_ray: Tuple[float, float] = (0.0, -1.0)
    epsilon: PositiveFloat = 1.0
    pulse_period: float = Field(default=0.0, ge=0.0)
    t_on: Optional[float] = None
    t_off: Optional[float] = None
    path: PathConfig = Field(default_factory=PathConfig)

    @field_validator("e_ray")
    @classmethod
    def _unit(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        norm = float(np.hypot(*value))
        if norm == 0.0:
            raise ValueError("e_ray must be non-zero")
        return (value[0] / norm, value[1] / norm)


class LevelSetConfig(_Block):
    kind: Literal["plane", "circle", "expression"] = "plane"
    point: Tuple[float, float] = (0.0, 0.0)
    normal: Tuple[float, float] = (0.0, 1.0)
    center: Tuple[float, float] = (0.0, 0.0)
    radius: PositiveFloat = 1.0
    material_inside: bool = True
    expression: Optional[str] = None
    theta: float = Field(default=0.5, ge=0.0, le=1.0)
    redistance_threshold: PositiveFloat = 0.5
    band: PositiveFloat = 8.0
    max_walk: Optional[int] = 5

    @model_validator(mode="after")
    def _expression(self) -> "LevelSetConfig":
        if self.kind == "expression":
            if not self.expression:
                raise ValueError("kind 'expression' needs an expression")
            _parse(self.expression)
        if self.kind == "plane" and np.hypot(*self.normal) == 0.0:
            raise ValueError("plane normal must be non-zero")
        return self


class BoundaryConfig(_Block):
    dirichlet: List[Sides] = Field(default_factory=list)
    temperature: str = "0"
    flux: Optional[str] = None

    @field_validator("temperature", "flux")
    @classmethod
    def _parses(cls, value: Optional[str]) -> Optional[str]:
        if value is not None:
            _parse(value)
        return value


class NewtonConfig(_Block):
    atol: PositiveFloat = 1e-11
    rtol: PositiveFloat = 1e-9
    max_iterations: int = Field(default=30, ge=1)


class OutputConfig(_Block):
    directory: str = Field(default_factory=lambda: os.getenv("STEFAN_OUTPUT_DIR", "output"))
    every: int = Field(default=10, ge=1)
    vtk: bool = True
    snapshot: bool = True


class RunConfig(_Block):
    scenario: Literal["manufactured", "ablation", "custom"] = "custom"
    name: str = "run"
    domain: DomainConfig = Field(default_factory=DomainConfig)
    time: TimeConfig = Field(default_factory=TimeConfig)
    material: MaterialConfig = Field(default_factory=MaterialConfig)
    nitsche: NitscheConfig = Field(default_factory=NitscheConfig)
    beam: Optional[BeamConfig] = None
    levelset: LevelSetConfig = Field(default_factory=LevelSetConfig)
    boundary: BoundaryConfig = Field(default_factory=BoundaryConfig)
    initial_temperature: str = "0"
    source: str = "0"
    newton: NewtonConfig = Field(default_factory=NewtonConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("initial_temperature", "source")
    @classmethod
    def _parses(cls, value: str) -> str:
        _parse(value)
        return value


def _messages(exc: ValidationError) -> List[str]:
    return [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()]


def parse_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigError(_messages(exc)) from exc


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError([f"{path}: YAML syntax error at {where}"]) from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return parse_config(data)


def with_overrides(config: RunConfig, **flags: Any) -> RunConfig:
    """Apply CLI flags such as ``h``, ``dt``, ``tf``, ``theta1``, ``gamma_b`` or ``output_dir``.

    ``None`` values are ignored; the result is validated again.
    """
    routes = {
        "h": ("domain", "h"),
        "pattern": ("domain", "pattern"),
        "dt": ("time", "dt"),
        "tf": ("time", "tf"),
        "theta1": ("nitsche", "theta1"),
        "theta2": ("nitsche", "theta2"),
        "gamma_hat": ("nitsche", "gamma_hat"),
        "gamma_T": ("nitsche", "gamma_T"),
        "gamma_b": ("nitsche", "gamma_b"),
        "gamma_GT": ("nitsche", "gamma_GT"),
        "output_dir": ("output", "directory"),
        "every": ("output", "every"),
    }
    data = config.model_dump()
    for key, value in flags.items():
        if value is None:
            continue
        if key not in routes:
            raise ConfigError([f"{key}: unknown override"])
        block, field_name = routes[key]
        data[block][field_name] = value
    return parse_config(data)
