"""Radially symmetric manufactured ablation case with a growing circular hole.

The material occupies ``r > R(t)`` with ``R(t) = log(alpha(t))`` and
``alpha(t) = 3 / (2 - 3t)``, so the hole grows with speed ``alpha``. The
temperature equals the melting temperature on the circle; the source term
below is the closed form of ``rho c dT/dt - k lap T``.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from physics.stefan_nitsche import MaterialParams

T_POLE = 2.0 / 3.0
DOMAIN: Tuple[float, float, float, float] = (-1.5, 1.5, -1.5, 1.5)


def _check_time(t) -> None:
    if np.any(np.asarray(t) >= T_POLE):
        raise ValueError(f"manufactured case is defined for t < {T_POLE:.6f}")


def alpha(t):
    _check_time(t)
    return 3.0 / (2.0 - 3.0 * np.asarray(t, dtype=float))


def radius(t):
    return np.log(alpha(t))


def _r(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.hypot(x[:, 0], x[:, 1])
    if np.any(r == 0.0):
        raise ValueError("manufactured fields are singular at the origin")
    return r


@dataclass(frozen=True)
class ManufacturedCase:
    material: MaterialParams = MaterialParams(rho=1.0, c=1.0, k=1.0, L=1.0, T_m=-0.01)

    def temperature(self, x: np.ndarray, t: float) -> np.ndarray:
        r = _r(x)
        R = radius(t)
        return -np.exp(r) + np.cos(0.5 * np.pi * r / R) + alpha(t) + self.material.T_m

    def temperature_gradient(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = _r(x)
        R = radius(t)
        dT_dr = -np.exp(r) - 0.5 * np.pi / R * np.sin(0.5 * np.pi * r / R)
        return (dT_dr / r)[:, None] * x

    def temperature_rate(self, x: np.ndarray, t: float) -> np.ndarray:
        r = _r(x)
        a, R = alpha(t), radius(t)
        # dR/dt = alpha, dalpha/dt = alpha^2
        return np.sin(0.5 * np.pi * r / R) * 0.5 * np.pi * r * a / R ** 2 + a ** 2

    def temperature_laplacian(self, x: np.ndarray, t: float) -> np.ndarray:
        r = _r(x)
        R = radius(t)
        z = 0.5 * np.pi * r / R
        c = 0.5 * np.pi / R
        return -np.exp(r) - c ** 2 * np.cos(z) + (-np.exp(r) - c * np.sin(z)) / r

    def source(self, x: np.ndarray, t: float) -> np.ndarray:
        m = self.material
        return m.rho * m.c * self.temperature_rate(x, t) - m.k * self.temperature_laplacian(x, t)

    def beam_amplitude(self, t: float) -> float:
        m = self.material
        a, R = alpha(t), radius(t)
        return float(-((m.rho * m.L + 1.0) * a + 0.5 * np.pi / R))

    def ray_direction(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x / _r(x)[:, None]

    def beam(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.beam_amplitude(t) * self.ray_direction(x)

    def level_set(self, x: np.ndarray, t: float) -> np.ndarray:
        # regular at the origin, which is a vertex of the usual meshes
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return radius(t) - np.hypot(x[:, 0], x[:, 1])

    def normal(self, x: np.ndarray) -> np.ndarray:
        return -self.ray_direction(x)

    def normal_speed(self, t: float) -> float:
        return float(-alpha(t))


@dataclass(frozen=True)
class ManufacturedBeam:
    """Beam override supplying the exact interface flux, independent of the surface normal."""
    case: ManufacturedCase

    def flux(self, x: np.ndarray, t: float, projected_normal: np.ndarray) -> np.ndarray:
        return self.case.beam(x, t)


def manufactured_source(x: np.ndarray, t: float, case: ManufacturedCase | None = None) -> np.ndarray:
    return (case or ManufacturedCase()).source(x, t)


def manufactured_beam(x: np.ndarray, t: float, case: ManufacturedCase | None = None) -> np.ndarray:
    return (case or ManufacturedCase()).beam(x, t)
