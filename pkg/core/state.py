from __future__ import annotations
from dataclasses import dataclass, replace
from typing import Optional, TypedDict

from fem.geometry import CutGeometry
from fem.levelset import LevelSetField, NormalField
from fem.spaces import FeField
from physics.interface_velocity import VelocityField
from physics.stefan_nitsche import NewtonReport


@dataclass(frozen=True, eq=False)
class StefanState:
    """Solution at ``t``: temperature on the active mesh it was solved on, level set and extended speed."""
    t: float
    step: int
    T: FeField
    phi: LevelSetField
    v_ext: Optional[VelocityField] = None

    def advanced(self, dt: float, **changes) -> "StefanState":
        return replace(self, t=self.t + dt, step=self.step + 1, **changes)


class StepState(TypedDict, total=False):

    # Inputs
    state: StefanState
    dt: float
    t_next: float

    # Geometry at t_n
    geometry: CutGeometry
    normal: NormalField

    # Temperature outputs
    temperature: FeField
    newton: NewtonReport

    # Interface speed
    gradient: FeField
    normal_speed: FeField
    velocity: VelocityField

    # Transport / routing
    phi_next: LevelSetField
    redistanced: bool
    next_state: StefanState
    stage: str
