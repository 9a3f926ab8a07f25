from __future__ import annotations
from typing import Any, Dict, Optional

from fem.geometry import BoundaryMarker, build_cut_geometry
from fem.levelset import LevelSetField, needs_redistance, project_normal
from fem.redistance import redistance
from .base import Stage


class CutStage(Stage):
    """Physical sub-triangulation, interface segments and stabilisation faces for the current level set."""

    outputs = ("geometry",)

    def __init__(
            self,
            dirichlet: Optional[BoundaryMarker] = None,
            max_walk: Optional[int] = 5,
            name: str = "geometry",
    ) -> None:
        super().__init__(name)
        self.dirichlet = dirichlet
        self.max_walk = max_walk

    def run(self, phi: LevelSetField, **_: Any) -> Dict[str, Any]:
        return {"geometry": build_cut_geometry(phi, dirichlet=self.dirichlet, max_walk=self.max_walk)}


class NormalStage(Stage):
    outputs = ("normal",)

    def __init__(self, name: str = "normal") -> None:
        super().__init__(name)

    def run(self, phi: LevelSetField, **_: Any) -> Dict[str, Any]:
        return {"normal": project_normal(phi)}


class RedistanceStage(Stage):
    """Reinitialise the level set once its gradient on the cut band drifts past ``threshold``."""

    outputs = ("phi_next", "redistanced")

    def __init__(self, threshold: float = 0.5, name: str = "redistance") -> None:
        super().__init__(name)
        self.threshold = threshold

    def needed(self, phi: LevelSetField) -> bool:
        return needs_redistance(phi, self.threshold)

    def run(self, phi: LevelSetField, **_: Any) -> Dict[str, Any]:
        return {"phi_next": redistance(phi), "redistanced": True}
