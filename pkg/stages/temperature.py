from __future__ import annotations
from dataclasses import replace
from typing import Any, Dict

from fem.geometry import CutGeometry
from fem.levelset import NormalField
from fem.spaces import FeField
from physics.stefan_nitsche import ProblemSpec, newton_solve
from .base import Stage


class TemperatureStage(Stage):
    outputs = ("temperature", "newton")

    def __init__(
            self,
            spec: ProblemSpec,
            atol: float = 1e-11,
            rtol: float = 1e-9,
            max_iterations: int = 30,
            name: str = "temperature",
    ) -> None:
        super().__init__(name)
        self.spec = spec
        self.atol = atol
        self.rtol = rtol
        self.max_iterations = max_iterations

    def run(
            self,
            geometry: CutGeometry,
            normal: NormalField,
            T_prev: FeField,
            t_next: float,
            dt: float,
            **_: Any,
    ) -> Dict[str, Any]:
        spec = self.spec if dt == self.spec.dt else replace(self.spec, dt=dt)
        T, report = newton_solve(
            geometry, spec, T_prev, normal, t_next,
            atol=self.atol, rtol=self.rtol, max_iterations=self.max_iterations,
        )
        return {"temperature": T, "newton": report}
