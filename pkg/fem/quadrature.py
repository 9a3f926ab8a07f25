from __future__ import annotations
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True, eq=False)
class TriangleRule:
    """Barycentric points (Q, 3) and weights summing to one."""
    degree: int
    points: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class SegmentRule:
    """Points in [0, 1] and weights summing to one."""
    degree: int
    points: np.ndarray
    weights: np.ndarray


def _orbit(a: float, b: float) -> np.ndarray:
    return np.array([[b, a, a], [a, b, a], [a, a, b]])


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> TriangleRule:
    if degree <= 1:
        return TriangleRule(1, np.array([[1.0, 1.0, 1.0]]) / 3.0, np.array([1.0]))
    if degree == 2:
        return TriangleRule(2, _orbit(1.0 / 6.0, 2.0 / 3.0), np.full(3, 1.0 / 3.0))
    if degree in (3, 4):
        a1, a2 = 0.445948490915965, 0.091576213509771
        pts = np.vstack([_orbit(a1, 1.0 - 2.0 * a1), _orbit(a2, 1.0 - 2.0 * a2)])
        w = np.concatenate([np.full(3, 0.223381589678011), np.full(3, 0.109951743655322)])
        return TriangleRule(4, pts, w)
    if degree == 5:
        a1, a2 = 0.470142064105115, 0.101286507323456
        pts = np.vstack([[[1.0 / 3.0] * 3], _orbit(a1, 1.0 - 2.0 * a1), _orbit(a2, 1.0 - 2.0 * a2)])
        w = np.concatenate([[0.225], np.full(3, 0.132394152788506), np.full(3, 0.125939180544827)])
        return TriangleRule(5, pts, w)
    raise ValueError(f"no triangle rule of degree {degree}")


@lru_cache(maxsize=None)
def segment_rule(n_points: int = 3) -> SegmentRule:
    x, w = np.polynomial.legendre.leggauss(n_points)
    return SegmentRule(2 * n_points - 1, 0.5 * (x + 1.0), 0.5 * w)


def map_triangle_points(corners: np.ndarray, rule: TriangleRule) -> np.ndarray:
    """Physical points (S, Q, 2) for sub-triangles given as corners (S, 3, 2)."""
    return np.einsum("qk,skd->sqd", rule.points, corners)


def map_segment_points(ends: np.ndarray, rule: SegmentRule) -> np.ndarray:
    """Physical points (G, Q, 2) for segments given as endpoints (G, 2, 2)."""
    s = rule.points[None, :, None]
    return ends[:, None, 0, :] * (1.0 - s) + ends[:, None, 1, :] * s


def triangle_areas(corners: np.ndarray) -> np.ndarray:
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
