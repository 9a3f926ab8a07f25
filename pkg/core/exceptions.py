from __future__ import annotations
from typing import Any, Dict, List, Optional


class StefanError(Exception):
    """Base class for every error raised by the solver."""


class ConfigError(StefanError):
    def __init__(self, messages: List[str]) -> None:
        self.messages = list(messages)
        super().__init__("Invalid configuration:\n" + "\n".join(f"  - {m}" for m in self.messages))


class MeshError(StefanError):
    pass


class MeshQueryError(MeshError):
    pass


class GeometryError(StefanError):
    pass


class EmptyDomainError(GeometryError):
    def __init__(self, message: str = "empty domain: the level set has no negative part") -> None:
        super().__init__(message)


class AssemblyError(StefanError):
    pass


class SolverError(StefanError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None) -> None:
        self.diagnostics = diagnostics or {}
        detail = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        super().__init__(f"{message} ({detail})" if detail else message)


class NewtonConvergenceError(StefanError):
    def __init__(self, report: Any) -> None:
        self.report = report
        super().__init__(
            f"Newton did not converge after {report.iterations} iterations "
            f"(last residual {report.residual_history[-1]:.3e})"
        )


class MarchingError(StefanError):
    pass


class StepError(StefanError):
    def __init__(self, stage: str, step: int, inner: BaseException) -> None:
        self.stage = stage
        self.step = step
        self.inner = inner
        super().__init__(f"step {step} failed in stage '{stage}': {inner}")
