"""Prescribed laser heat flux: Gaussian profile, incidence-angle absorption, pulse gating and focal path."""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ConfigError


@dataclass(frozen=True)
class FocalPath:
    """Focal point schedule.

    ``fixed`` keeps ``start``; ``raster`` moves with ``velocity`` and reverses
    every ``t_change``; ``waypoints`` interpolates ``(time, x, y)`` rows linearly.
    """
    mode: str = "fixed"
    start: Tuple[float, float] = (0.0, 0.0)
    velocity: Tuple[float, float] = (0.0, 0.0)
    t_change: float = 0.0
    waypoints: Tuple[Tuple[float, float, float], ...] = ()
    t0: float = 0.0
    tf: float = np.inf

    def __post_init__(self) -> None:
        errors = []
        if self.mode not in ("fixed", "raster", "waypoints"):
            errors.append(f"path.mode: unknown mode '{self.mode}'")
        if self.mode == "raster" and self.t_change <= 0:
            errors.append("path.t_change: must be positive for raster paths")
        if self.mode == "waypoints":
            times = [w[0] for w in self.waypoints]
            if len(times) < 2:
                errors.append("path.waypoints: need at least two waypoints")
            elif np.any(np.diff(times) <= 0):
                errors.append("path.waypoints: times must increase strictly")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class BeamSpec:
    sigma: float
    amplitude: float
    e_ray: Tuple[float, float]
    path: FocalPath = field(default_factory=FocalPath)
    pulse_period: float = 0.0
    epsilon: float = 1.0
    t_on: float = -np.inf
    t_off: float = np.inf

    def __post_init__(self) -> None:
        errors = []
        if self.sigma <= 0:
            errors.append("beam.sigma: must be positive")
        if abs(float(np.linalg.norm(self.e_ray)) - 1.0) > 1e-10:
            errors.append("beam.e_ray: must be a unit vector")
        if self.pulse_period < 0:
            errors.append("beam.pulse_period: must be non-negative")
        if self.epsilon <= 0:
            errors.append("beam.epsilon: must be positive")
        if errors:
            raise ConfigError(errors)


def _clamp_time(t: float, path: FocalPath) -> float:
    return float(min(max(t, path.t0), path.tf))


def focal_path(t: float, path: FocalPath) -> np.ndarray:
    t = _clamp_time(t, path)
    start = np.asarray(path.start, dtype=float)
    if path.mode == "fixed":
        return start
    if path.mode == "raster":
        tc = path.t_change
        tau = t - path.t0
        # triangle wave: distance travelled along the reversing direction
        travelled = tc - abs((tau % (2.0 * tc)) - tc)
        return start + np.asarray(path.velocity, dtype=float) * travelled
    rows = np.asarray(path.waypoints, dtype=float)
    return np.array([np.interp(t, rows[:, 0], rows[:, 1]), np.interp(t, rows[:, 0], rows[:, 2])])


def pulse(t: float, period: float) -> float:
    if period <= 0:
        return 1.0
    return 1.0 if t - np.floor(t / period) * period <= 0.5 * period else 0.0


def time_factor(t: float, spec: BeamSpec) -> float:
    if t < spec.t_on or t > spec.t_off:
        return 0.0
    return pulse(t, spec.pulse_period)


def spatial_profile(x: np.ndarray, t: float, spec: BeamSpec) -> np.ndarray:
    """Gaussian intensity ``f(x, t)`` for points ``x`` (N, 2), pulse factor included."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e = np.asarray(spec.e_ray, dtype=float)
    offset = x - focal_path(t, spec.path)
    transverse = offset - np.outer(offset @ e, e)
    norm = spec.amplitude / np.sqrt(2.0 * np.pi * spec.sigma ** 2)
    return norm * np.exp(-np.einsum("ij,ij->i", transverse, transverse) / (2.0 * spec.sigma ** 2)) * time_factor(t, spec)


def absorption(normal: np.ndarray, spec: BeamSpec) -> np.ndarray:
    """Absorbed fraction for surface normals (N, 2); normals are renormalised first."""
    normal = np.atleast_2d(np.asarray(normal, dtype=float))
    length = np.linalg.norm(normal, axis=1)
    unit = normal / np.where(length > 0, length, 1.0)[:, None]
    cos = np.clip(-(unit @ np.asarray(spec.e_ray, dtype=float)), -1.0, 1.0)
    cos = np.where(length > 0, cos, 0.0)
    eps = spec.epsilon
    ratio = (2 * cos ** 2 - 2 * eps * cos + eps ** 2) / (2 * cos ** 2 + 2 * eps * cos + eps ** 2)
    return np.where(cos > 0, 1.0 - ratio, 0.0)


def beam_flux(x: np.ndarray, t: float, normal: np.ndarray, spec: BeamSpec) -> np.ndarray:
    """Heat-flux vector ``I = -A_p f e_ray`` at points ``x`` (N, 2)."""
    strength = absorption(normal, spec) * spatial_profile(x, t, spec)
    return -strength[:, None] * np.asarray(spec.e_ray, dtype=float)[None, :]


def flux_dot_normal(x: np.ndarray, t: float, projected_normal: np.ndarray, normal: np.ndarray,
                    spec: BeamSpec) -> np.ndarray:
    """``I . n`` with the absorption angle taken from ``projected_normal``."""
    return np.einsum("ij,ij->i", beam_flux(x, t, projected_normal, spec), np.atleast_2d(normal))


@dataclass(frozen=True)
class BeamSource:
    """Beam as seen by the solver: flux vectors at interface points."""
    spec: Optional[BeamSpec] = None

    def flux(self, x: np.ndarray, t: float, projected_normal: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.spec is None:
            return np.zeros_like(x, dtype=float)
        return beam_flux(x, t, projected_normal, self.spec)


def delivered_power(spec: BeamSpec, times: Sequence[float], x: np.ndarray) -> float:
    """Time-average of the profile at ``x`` sampled over ``times``."""
    return float(np.mean([spatial_profile(x, t, spec)[0] for t in times]))
