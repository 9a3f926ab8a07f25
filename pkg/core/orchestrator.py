from __future__ import annotations
from abc import ABC, abstractmethod
from typing import Any

import numpy as np

from core.exceptions import StefanError, StepError
from stages import (
    AdvectionStage,
    CutStage,
    ExtensionStage,
    GradientStage,
    NormalStage,
    RedistanceStage,
    Stage,
    TemperatureStage,
    VelocityStage,
)
from utils.log import get_logger
from .state import StefanState, StepState

logger = get_logger("orchestrator")

STAGE_FAILURES = (StefanError, ValueError, ArithmeticError, np.linalg.LinAlgError)


class Orchestrator(ABC):
    """Owns the stages of one time step and the compiled graph that sequences them."""

    def __init__(
            self,
            cut: CutStage,
            normal: NormalStage,
            temperature: TemperatureStage,
            gradient: GradientStage,
            velocity: VelocityStage,
            extension: ExtensionStage,
            advection: AdvectionStage,
            redistance: RedistanceStage,
    ) -> None:
        self.cut = cut
        self.normal = normal
        self.temperature = temperature
        self.gradient = gradient
        self.velocity = velocity
        self.extension = extension
        self.advection = advection
        self.redistance = redistance
        self._app = self._build()

    def _call(self, stage: Stage, state: StepState, **kwargs: Any) -> StepState:
        step = state["state"].step + 1
        try:
            res = stage(**kwargs)
        except STAGE_FAILURES as exc:
            logger.error("stage_failed", stage=stage.name, step=step, error=str(exc))
            raise StepError(stage.name, step, exc) from exc
        return {**res, "stage": stage.name}

    @abstractmethod
    def _build(self):
        pass

    @abstractmethod
    def run(self, state: StefanState, dt: float) -> StepState:
        pass

    def mermaid(self) -> str:
        return self._app.get_graph().draw_mermaid()

    def print_ascii(self) -> None:
        self._app.get_graph().print_ascii()
