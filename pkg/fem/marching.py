"""Fast marching on triangulations with simultaneous value extension.

The marcher solves |grad d| = 1 from a set of accepted seed nodes and carries a
scalar value along the characteristics. It serves both the velocity
extension of the interface speed (P1 background nodes) and the redistancing
of the level set (refined-mesh nodes).
"""
from __future__ import annotations
import heapq
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from core.exceptions import MarchingError
from utils.log import get_logger

logger = get_logger("marching")


@dataclass(frozen=True, eq=False)
class MarchResult:
    distance: np.ndarray
    values: np.ndarray
    reached: np.ndarray
    accepted_order: np.ndarray


class FastMarcher:
    def __init__(self, points: np.ndarray, triangles: np.ndarray) -> None:
        self.points = np.asarray(points, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.points.shape[0])
        self._indptr = np.concatenate([[0], np.cumsum(counts)])
        self._incident = order // 3
        self._xy = self.points.tolist()
        self._tris = self.triangles.tolist()

    def incident_triangles(self, node: int) -> np.ndarray:
        return self._incident[self._indptr[node]:self._indptr[node + 1]]

    def _edge_update(self, z: int, a: int, dist: list, vals: list) -> Tuple[float, float]:
        zx, zy = self._xy[z]
        ax, ay = self._xy[a]
        return dist[a] + math.hypot(ax - zx, ay - zy), vals[a]

    def _triangle_update(self, z: int, a: int, b: int, dist: list, vals: list) -> Tuple[float, float]:
        zx, zy = self._xy[z]
        e00, e01 = self._xy[a][0] - zx, self._xy[a][1] - zy
        e10, e11 = self._xy[b][0] - zx, self._xy[b][1] - zy
        det = e00 * e11 - e01 * e10
        da, db = dist[a], dist[b]
        if abs(det) > 1e-300:
            # Q = (E E^T)^{-1} for the rows e0, e1
            g00 = e00 * e00 + e01 * e01
            g01 = e00 * e10 + e01 * e11
            g11 = e10 * e10 + e11 * e11
            gdet = g00 * g11 - g01 * g01
            q00, q01, q11 = g11 / gdet, -g01 / gdet, g00 / gdet
            qa = q00 + 2.0 * q01 + q11
            qb = (q00 + q01) * da + (q01 + q11) * db
            qc = q00 * da * da + 2.0 * q01 * da * db + q11 * db * db - 1.0
            disc = qb * qb - qa * qc
            if disc >= 0.0:
                d = (qb + math.sqrt(disc)) / qa
                if d >= max(da, db):
                    ua, ub = da - d, db - d
                    # g = E^{-1} u ; upwind weights w = -E^{-T} g
                    gx = (e11 * ua - e01 * ub) / det
                    gy = (-e10 * ua + e00 * ub) / det
                    wa = -(e11 * gx - e10 * gy) / det
                    wb = -(-e01 * gx + e00 * gy) / det
                    if wa >= -1e-12 and wb >= -1e-12:
                        wa, wb = max(wa, 0.0), max(wb, 0.0)
                        total = wa + wb
                        value = (wa * vals[a] + wb * vals[b]) / total if total > 0.0 else 0.5 * (vals[a] + vals[b])
                        return d, value
        da_cand = self._edge_update(z, a, dist, vals)
        db_cand = self._edge_update(z, b, dist, vals)
        return da_cand if da_cand[0] <= db_cand[0] else db_cand

    def march(
            self,
            seeds: np.ndarray,
            seed_distance: np.ndarray,
            seed_values: Optional[np.ndarray] = None,
            band: float = math.inf,
    ) -> MarchResult:
        """Accept ``seeds`` with the given distances and march outward up to ``band``."""
        n = self.points.shape[0]
        seeds = np.asarray(seeds, dtype=np.int64)
        if seeds.size == 0:
            raise MarchingError("fast marching needs at least one seed node")
        dist = [math.inf] * n
        vals = [0.0] * n
        accepted = [False] * n
        for node, d, v in zip(seeds.tolist(), np.asarray(seed_distance, float).tolist(),
                              (np.zeros(seeds.size) if seed_values is None else np.asarray(seed_values, float)).tolist()):
            dist[node], vals[node], accepted[node] = d, v, True

        heap: list = []

        def relax(node: int) -> None:
            for tri in self.incident_triangles(node).tolist():
                corners = self._tris[tri]
                for z in corners:
                    if accepted[z]:
                        continue
                    a, b = (c for c in corners if c != z)
                    if accepted[a] and accepted[b]:
                        cand = self._triangle_update(z, a, b, dist, vals)
                    elif accepted[a]:
                        cand = self._edge_update(z, a, dist, vals)
                    elif accepted[b]:
                        cand = self._edge_update(z, b, dist, vals)
                    else:
                        continue
                    if cand[0] < dist[z]:
                        dist[z], vals[z] = cand
                        heapq.heappush(heap, (cand[0], z))

        for node in seeds.tolist():
            relax(node)

        order = []
        last = -math.inf
        tol = 1e-12 * max(1.0, float(np.ptp(self.points, axis=0).max()))
        while heap:
            d, z = heapq.heappop(heap)
            if accepted[z] or d > dist[z]:
                continue
            if d > band:
                break
            if d < last - tol:
                raise MarchingError(f"non-monotone marching: accepted {d:.6e} after {last:.6e}")
            last = max(last, d)
            accepted[z] = True
            order.append(z)
            relax(z)

        reached = np.asarray(accepted)
        distance = np.where(reached, np.asarray(dist), np.inf)
        values = np.where(reached, np.asarray(vals), 0.0)
        logger.debug("march_done", seeds=int(seeds.size), accepted=len(order), band=band)
        return MarchResult(distance, values, reached, np.asarray(order, dtype=np.int64))


def closest_points(points: np.ndarray, segments: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact closest point on a polyline of ``segments`` (G, 2, 2) for every query point.

    Returns the distance, the index of the closest segment and the local
    parameter in [0, 1] along that segment.
    """
    points = np.asarray(points, dtype=float)
    if segments.shape[0] == 0:
        raise MarchingError("closest-point search on an empty interface")
    p, q = segments[:, 0], segments[:, 1]
    mids = 0.5 * (p + q)
    half = 0.5 * np.linalg.norm(q - p, axis=1)
    tree = cKDTree(mids)
    d0, _ = tree.query(points)
    radius = d0 + half.max() + 1e-14
    candidates = tree.query_ball_point(points, radius)

    dist = np.empty(points.shape[0])
    seg = np.empty(points.shape[0], dtype=np.int64)
    param = np.empty(points.shape[0])
    for i, cand in enumerate(candidates):
        cand = np.asarray(cand, dtype=np.int64)
        a, ab = p[cand], q[cand] - p[cand]
        len2 = np.einsum("ij,ij->i", ab, ab)
        t = np.einsum("ij,ij->i", points[i] - a, ab) / np.where(len2 > 0, len2, 1.0)
        t = np.clip(t, 0.0, 1.0)
        foot = a + t[:, None] * ab
        dd = np.linalg.norm(points[i] - foot, axis=1)
        k = int(np.argmin(dd))
        dist[i], seg[i], param[i] = dd[k], cand[k], t[k]
    return dist, seg, param
