from __future__ import annotations
from typing import Any, Dict, Optional

from fem.levelset import LevelSetField
from physics.interface_velocity import VelocityField
from physics.levelset_transport import TransportParams, advect
from .base import Stage


class AdvectionStage(Stage):
    outputs = ("phi_next", "redistanced")

    def __init__(self, theta: float = 0.5, name: str = "advection") -> None:
        super().__init__(name)
        self.theta = theta

    def run(
            self,
            phi: LevelSetField,
            velocity: VelocityField,
            dt: float,
            previous: Optional[VelocityField] = None,
            **_: Any,
    ) -> Dict[str, Any]:
        """Transport ``phi`` over one step; without a previous extension the new one is used at both ends."""
        v_old = (previous or velocity).vector
        phi_next = advect(phi, v_old, velocity.vector, TransportParams(dt=dt, theta=self.theta))
        return {"phi_next": phi_next, "redistanced": False}
