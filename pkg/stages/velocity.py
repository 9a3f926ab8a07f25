from __future__ import annotations
from typing import Any, Dict

from fem.geometry import CutGeometry
from fem.levelset import NormalField
from fem.spaces import FeField
from physics.interface_velocity import DEFAULT_BAND, fast_march_extend, normal_velocity, smooth_gradient, with_vector
from physics.stefan_nitsche import ProblemSpec
from .base import Stage


class GradientStage(Stage):
    outputs = ("gradient",)

    def __init__(self, gamma_GT: float, name: str = "gradient") -> None:
        super().__init__(name)
        self.gamma_GT = gamma_GT

    def run(self, temperature: FeField, geometry: CutGeometry, **_: Any) -> Dict[str, Any]:
        return {"gradient": smooth_gradient(temperature, geometry, self.gamma_GT)}


class VelocityStage(Stage):
    """Stefan normal speed from the smoothed gradient, switched off where the interface is not ablating."""

    outputs = ("normal_speed",)

    def __init__(self, spec: ProblemSpec, name: str = "velocity") -> None:
        super().__init__(name)
        self.spec = spec

    def run(
            self,
            temperature: FeField,
            gradient: FeField,
            normal: NormalField,
            geometry: CutGeometry,
            t_next: float,
            **_: Any,
    ) -> Dict[str, Any]:
        return {"normal_speed": normal_velocity(temperature, gradient, normal, geometry, self.spec, t_next)}


class ExtensionStage(Stage):
    outputs = ("velocity",)

    def __init__(self, band: float = DEFAULT_BAND, name: str = "extension") -> None:
        super().__init__(name)
        self.band = band

    def run(self, normal_speed: FeField, geometry: CutGeometry, normal: NormalField, **_: Any) -> Dict[str, Any]:
        velocity = fast_march_extend(normal_speed, geometry, band=self.band)
        return {"velocity": with_vector(velocity, normal)}
