from __future__ import annotations
from abc import ABC, abstractmethod
from typing import Any, ClassVar, Dict, Tuple

StageOutput = Dict[str, Any]


class Stage(ABC):
    """One node of the time-step graph.

    ``run`` receives named inputs picked from the step state and returns the
    keys it contributes; ``outputs`` lists the keys every call must produce.
    """

    outputs: ClassVar[Tuple[str, ...]] = ()

    def __init__(self, name: str) -> None:
        self.name = name

    @abstractmethod
    def run(self, **inputs: Any) -> StageOutput:
        ...

    def __call__(self, **inputs: Any) -> StageOutput:
        produced = self.run(**inputs)
        missing = [key for key in self.outputs if key not in produced]
        if missing:
            raise ValueError(f"stage '{self.name}' did not produce {missing}")
        return produced

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r})"
