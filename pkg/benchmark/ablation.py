"""Cavity post-processing for the 2D ablation runs: surface profile, depth and floor roughness."""
from __future__ import annotations
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import pandas as pd

from core.exceptions import GeometryError
from fem.geometry import CutGeometry
from utils.log import get_logger

logger = get_logger("ablation")

FLOOR_FRACTION = 0.5


def surface_profile(geometry: CutGeometry, x: np.ndarray) -> np.ndarray:
    """Height of the uppermost interface crossing above each abscissa; NaN where no segment spans it."""
    if geometry.is_empty_interface():
        raise GeometryError("surface profile needs a non-empty interface")
    ends = geometry.segments
    x0, x1 = ends[:, 0, 0], ends[:, 1, 0]
    y0, y1 = ends[:, 0, 1], ends[:, 1, 1]
    dx = x1 - x0
    span = np.abs(dx) > 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (x[:, None] - x0[None, :]) / np.where(span, dx, 1.0)[None, :]
    hit = span[None, :] & (s >= 0.0) & (s <= 1.0)
    y = np.where(hit, y0[None, :] + s * (y1 - y0)[None, :], -np.inf)
    top = y.max(axis=1)
    return np.where(np.isfinite(top), top, np.nan)


@dataclass(frozen=True)
class CavityMetrics:
    depth: float
    roughness: float
    floor_width: float
    surface_level: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "depth": self.depth,
            "roughness": self.roughness,
            "floor_width": self.floor_width,
            "surface_level": self.surface_level,
        }


def cavity_metrics(x: np.ndarray, profile: np.ndarray, surface_level: float) -> CavityMetrics:
    """Depth below ``surface_level`` and the spread of the floor, where the floor is deeper than half the depth."""
    ok = np.isfinite(profile)
    if not np.any(ok):
        raise GeometryError("the surface profile has no samples")
    depth_at = surface_level - profile[ok]
    depth = float(max(depth_at.max(), 0.0))
    if depth == 0.0:
        return CavityMetrics(0.0, 0.0, 0.0, surface_level)
    floor = depth_at >= FLOOR_FRACTION * depth
    dx = float(np.median(np.diff(x))) if x.size > 1 else 0.0
    return CavityMetrics(
        depth=depth,
        roughness=float(np.std(profile[ok][floor])),
        floor_width=float(floor.sum() * dx),
        surface_level=surface_level,
    )


def analyse_cavity(
        geometry: CutGeometry,
        surface_level: float,
        n_samples: int = 600,
        out_dir: Optional[str] = None,
) -> tuple[CavityMetrics, pd.DataFrame]:
    x0, x1 = geometry.mesh.bounds[:2]
    x = np.linspace(x0, x1, n_samples)
    profile = surface_profile(geometry, x)
    metrics = cavity_metrics(x, profile, surface_level)
    frame = pd.DataFrame({"x": x, "y_surface": profile})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        frame.to_csv(os.path.join(out_dir, "profile.csv"), index=False)
        pd.DataFrame([metrics.as_dict()]).to_csv(os.path.join(out_dir, "cavity.csv"), index=False)
    logger.info("cavity", **metrics.as_dict())
    return metrics, frame


def compare_cavities(a: CavityMetrics, b: CavityMetrics) -> Dict[str, float]:
    """Relative depth mismatch and roughness ratio of two runs."""
    ref = max(a.depth, b.depth)
    return {
        "depth_mismatch": abs(a.depth - b.depth) / ref if ref > 0 else 0.0,
        "roughness_ratio": a.roughness / b.roughness if b.roughness > 0 else float("inf"),
    }


def write_comparison(
        runs: Dict[str, CavityMetrics],
        out_dir: str,
        filename: str = "comparison.csv",
) -> pd.DataFrame:
    """One-row table of two named runs and their :func:`compare_cavities` result."""
    if len(runs) != 2:
        raise ValueError(f"a comparison needs exactly two runs, got {len(runs)}")
    (name_a, a), (name_b, b) = runs.items()
    row: Dict[str, object] = {"run_a": name_a, "run_b": name_b}
    for label, metrics in (("a", a), ("b", b)):
        row[f"depth_{label}"] = metrics.depth
        row[f"roughness_{label}"] = metrics.roughness
    row.update(compare_cavities(a, b))
    frame = pd.DataFrame([row])
    os.makedirs(out_dir, exist_ok=True)
    frame.to_csv(os.path.join(out_dir, filename), index=False)
    logger.info("cavity_comparison", run_a=name_a, run_b=name_b, **compare_cavities(a, b))
    return frame
