"""Relative error norms on the cut domain and its interface, plus time aggregation."""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from core.exceptions import GeometryError
from fem.geometry import CutGeometry
from fem.quadrature import map_segment_points, map_triangle_points, segment_rule, triangle_rule
from fem.spaces import FeField, transfer

PointFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Norm:
    value: float
    relative: bool = True


def _ratio(num: float, den: float) -> Norm:
    if den <= 0.0:
        return Norm(float(np.sqrt(num)), relative=False)
    return Norm(float(np.sqrt(num / den)), relative=True)


def _bulk_samples(geometry: CutGeometry):
    rule = triangle_rule(4)
    points = map_triangle_points(geometry.subtri_corners, rule)
    cells = np.repeat(geometry.subtri_parent, rule.weights.size)
    weights = (geometry.subtri_areas[:, None] * rule.weights[None, :]).ravel()
    return points.reshape(-1, 2), cells, weights


def _interface_samples(geometry: CutGeometry):
    if geometry.is_empty_interface():
        raise GeometryError("interface norms need a non-empty interface")
    rule = segment_rule(3)
    points = map_segment_points(geometry.segments, rule)
    cells = np.repeat(geometry.segment_parent, rule.weights.size)
    weights = (geometry.segment_lengths[:, None] * rule.weights[None, :]).ravel()
    return points.reshape(-1, 2), cells, weights


def field_at(field_: FeField, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
    return field_.evaluate(cells, field_.space.mesh.barycentric(cells, points))


def error_norms(
        T: FeField,
        exact: PointFunction,
        exact_gradient: PointFunction,
        geometry: CutGeometry,
) -> Dict[str, Norm]:
    """Relative L2 and H1 errors over the physical domain and L2 error over the interface."""
    points, cells, w = _bulk_samples(geometry)
    u_ex = np.asarray(exact(points), dtype=float)
    g_ex = np.asarray(exact_gradient(points), dtype=float)
    diff = field_at(T, cells, points) - u_ex
    gdiff = T.gradient(cells) - g_ex
    l2_num, l2_den = float(w @ diff ** 2), float(w @ u_ex ** 2)
    h1_num = l2_num + float(w @ np.einsum("ij,ij->i", gdiff, gdiff))
    h1_den = l2_den + float(w @ np.einsum("ij,ij->i", g_ex, g_ex))
    out = {"l2_omega": _ratio(l2_num, l2_den), "h1_omega": _ratio(h1_num, h1_den)}
    if not geometry.is_empty_interface():
        out["l2_gamma"] = interface_error(geometry, lambda p, c: field_at(T, c, p), exact)
    return out


def field_difference(geometry: CutGeometry, a: FeField, b: FeField) -> Norm:
    """L2 distance between two temperatures over ``geometry``, relative to the norm of ``a``.

    ``b`` is moved onto the dof set of ``a`` first, so runs with different
    active meshes can be compared on the geometry ``a`` was solved on.
    """
    b = transfer(b, a.space)
    points, cells, w = _bulk_samples(geometry)
    ua, ub = field_at(a, cells, points), field_at(b, cells, points)
    return _ratio(float(w @ (ua - ub) ** 2), float(w @ ua ** 2))


def interface_error(
        geometry: CutGeometry,
        approx: Callable[[np.ndarray, np.ndarray], np.ndarray],
        exact: PointFunction,
) -> Norm:
    """Relative L2(Gamma_h) error; ``approx`` receives interface points and their parent cells."""
    points, cells, w = _interface_samples(geometry)
    u_ex = np.broadcast_to(np.asarray(exact(points), dtype=float), (points.shape[0],))
    diff = np.asarray(approx(points, cells), dtype=float) - u_ex
    return _ratio(float(w @ diff ** 2), float(w @ u_ex ** 2))


def interface_averages(geometry: CutGeometry, v_n: FeField) -> Tuple[float, float]:
    """Line averages of the normal speed and of the distance to the origin over Gamma_h."""
    points, cells, w = _interface_samples(geometry)
    length = float(w.sum())
    v_avg = float(w @ field_at(v_n, cells, points)) / length
    r_avg = float(w @ np.hypot(points[:, 0], points[:, 1])) / length
    return v_avg, r_avg


def l2_in_time(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean(values ** 2)))


@dataclass
class ErrorReport:
    """Per-step error rows of one run with their l2-in-time aggregates."""
    rows: List[Dict[str, float]] = field(default_factory=list)

    def add(self, step: int, t: float, **norms: Norm) -> None:
        row: Dict[str, float] = {"step": step, "t": t}
        for name, norm in norms.items():
            row[name] = norm.value
            if not norm.relative:
                row[f"{name}_absolute"] = 1.0
        self.rows.append(row)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def aggregate(self) -> Dict[str, float]:
        frame = self.frame()
        names = [c for c in frame.columns if c not in ("step", "t") and not c.endswith("_absolute")]
        return {name: l2_in_time(frame[name].dropna().to_numpy()) for name in names}
