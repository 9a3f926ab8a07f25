from .base import Stage
from .geometry import CutStage, NormalStage, RedistanceStage
from .temperature import TemperatureStage
from .transport import AdvectionStage
from .velocity import ExtensionStage, GradientStage, VelocityStage

__all__ = [
    "Stage",
    "CutStage",
    "NormalStage",
    "RedistanceStage",
    "TemperatureStage",
    "GradientStage",
    "VelocityStage",
    "ExtensionStage",
    "AdvectionStage",
]
