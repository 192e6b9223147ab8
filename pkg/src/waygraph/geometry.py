"""Low-level 2D geometry: polygons, segment/capsule distances, ray intersection.

All batch routines are vectorized over stacked obstacle edges so that the
collision queries in the simulator stay cheap. Points are plain ``(2,)``
float arrays (or anything ``np.asarray`` accepts); polygons are ``(K, 2)``
arrays in counter-clockwise order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    return float(theta % TWO_PI)


def angle_diff(a: float, b: float) -> float:
    """Signed smallest difference a - b, in (-pi, pi]."""
    d = (a - b) % TWO_PI
    if d > math.pi:
        d -= TWO_PI
    return d


def as_point(p) -> np.ndarray:
    q = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(q)):
        raise ValueError(f"non-finite point {p!r}")
    return q


@dataclass
class Pose:
    """Agent position plus heading (radians, normalized to [0, 2*pi))."""

    position: np.ndarray
    heading: float = 0.0

    def __post_init__(self):
        self.position = as_point(self.position)
        self.heading = normalize_angle(self.heading)

    @property
    def x(self) -> float:
        return float(self.position[0])

    @property
    def y(self) -> float:
        return float(self.position[1])

    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.heading)


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise polygons."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def ensure_ccw(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    if p.ndim != 2 or p.shape[0] < 3 or p.shape[1] != 2:
        raise ValueError(f"polygon must be (K,2) with K>=3, got {p.shape}")
    if polygon_area(p) < 0:
        p = p[::-1].copy()
    return p


def rect_polygon(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def cross2(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


class EdgeSet:
    """Stacked edges of a polygon soup, grouped per polygon.

    Precomputed once per environment; every collision query broadcasts
    against these arrays.
    """

    def __init__(self, polygons):
        polys = [ensure_ccw(p) for p in polygons]
        self.polygons = polys
        if polys:
            self.a = np.concatenate([p for p in polys])
            self.b = np.concatenate([np.roll(p, -1, axis=0) for p in polys])
            counts = [len(p) for p in polys]
            self.offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
        else:
            self.a = np.zeros((0, 2))
            self.b = np.zeros((0, 2))
            self.offsets = np.zeros(0, dtype=int)
        self.v = self.b - self.a
        vv = np.einsum("ij,ij->i", self.v, self.v)
        self.inv_vv = np.where(vv > 0, 1.0 / np.maximum(vv, 1e-30), 0.0)
        self.bb_lo = np.minimum(self.a, self.b)
        self.bb_hi = np.maximum(self.a, self.b)

    def __len__(self):
        return len(self.a)

    def points_inside(self, ps: np.ndarray) -> np.ndarray:
        """For each point, whether it lies inside any polygon (boundary counts)."""
        ps = np.atleast_2d(ps)
        if len(self) == 0:
            return np.zeros(len(ps), dtype=bool)
        # cross >= 0 for every edge of a CCW polygon <=> inside it
        d = ps[:, None, :] - self.a[None, :, :]
        cr = self.v[None, :, 0] * d[:, :, 1] - self.v[None, :, 1] * d[:, :, 0]
        per_poly_min = np.minimum.reduceat(cr, self.offsets, axis=1)
        return np.any(per_poly_min >= -1e-12, axis=1)

    def point_inside(self, p) -> bool:
        return bool(self.points_inside(np.asarray(p, float).reshape(1, 2))[0])

    def points_edge_dist(self, ps: np.ndarray) -> np.ndarray:
        """Min distance from each point to any edge (ignores containment)."""
        ps = np.atleast_2d(ps)
        if len(self) == 0:
            return np.full(len(ps), np.inf)
        d = ps[:, None, :] - self.a[None, :, :]
        t = np.einsum("nej,ej->ne", d, self.v) * self.inv_vv[None, :]
        t = np.clip(t, 0.0, 1.0)
        closest = self.a[None, :, :] + t[:, :, None] * self.v[None, :, :]
        dist = np.linalg.norm(ps[:, None, :] - closest, axis=2)
        return dist.min(axis=1)

    def points_clearance(self, ps: np.ndarray) -> np.ndarray:
        """Distance to the polygon soup; zero for points inside a polygon."""
        ps = np.atleast_2d(ps)
        dist = self.points_edge_dist(ps)
        if len(self):
            dist = np.where(self.points_inside(ps), 0.0, dist)
        return dist

    def segment_dist(self, p0, p1) -> float:
        """Min distance between segment p0-p1 and any edge (0 on crossing)."""
        if len(self) == 0:
            return math.inf
        p0 = np.asarray(p0, float)
        p1 = np.asarray(p1, float)
        w = p1 - p0
        # proper-crossing test via orientation signs
        d0 = self.a - p0
        d1 = self.b - p0
        o1 = cross2(np.broadcast_to(w, d0.shape), d0)
        o2 = cross2(np.broadcast_to(w, d1.shape), d1)
        da = p0 - self.a
        db = p1 - self.a
        o3 = cross2(self.v, da)
        o4 = cross2(self.v, db)
        crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
        if np.any(crossing):
            return 0.0
        ends = np.stack([p0, p1])
        d_ends = self._dist_points_to_edges(ends).min()
        d_ab = self._dist_points_to_segment(self.a, p0, w)
        d_bb = self._dist_points_to_segment(self.b, p0, w)
        return float(min(d_ends, d_ab.min(), d_bb.min()))

    def segments_dist(self, p0s: np.ndarray, p1s: np.ndarray,
                      cutoff: float | None = None) -> np.ndarray:
        """Min distance from each segment p0s[n]-p1s[n] to any edge (0 on crossing).

        With ``cutoff`` set, edges farther than that from the query bounding
        box are skipped; reported distances above the cutoff are then lower
        bounds only (callers compare against thresholds below the cutoff).
        """
        p0s = np.atleast_2d(p0s)
        p1s = np.atleast_2d(p1s)
        n = len(p0s)
        if len(self) == 0:
            return np.full(n, math.inf)
        if cutoff is not None and len(self) > 16:
            lo = np.minimum(p0s.min(axis=0), p1s.min(axis=0)) - cutoff
            hi = np.maximum(p0s.max(axis=0), p1s.max(axis=0)) + cutoff
            keep = ~((self.bb_hi[:, 0] < lo[0]) | (self.bb_lo[:, 0] > hi[0])
                     | (self.bb_hi[:, 1] < lo[1]) | (self.bb_lo[:, 1] > hi[1]))
            if not keep.all():
                if not keep.any():
                    return np.full(n, cutoff)
                sub = EdgeSet.__new__(EdgeSet)
                sub.polygons = []
                sub.a = self.a[keep]
                sub.b = self.b[keep]
                sub.offsets = np.zeros(0, dtype=int)
                sub.v = self.v[keep]
                sub.inv_vv = self.inv_vv[keep]
                sub.bb_lo = self.bb_lo[keep]
                sub.bb_hi = self.bb_hi[keep]
                return sub.segments_dist(p0s, p1s)
        w = p1s - p0s  # (N,2)
        d0 = self.a[None, :, :] - p0s[:, None, :]  # (N,E,2)
        d1 = self.b[None, :, :] - p0s[:, None, :]
        o1 = w[:, None, 0] * d0[:, :, 1] - w[:, None, 1] * d0[:, :, 0]
        o2 = w[:, None, 0] * d1[:, :, 1] - w[:, None, 1] * d1[:, :, 0]
        o3 = self.v[None, :, 0] * (-d0[:, :, 1]) - self.v[None, :, 1] * (-d0[:, :, 0])
        da1 = p1s[:, None, :] - self.a[None, :, :]
        o4 = self.v[None, :, 0] * da1[:, :, 1] - self.v[None, :, 1] * da1[:, :, 0]
        crossing = (o1 * o2 < 0) & (o3 * o4 < 0)  # (N,E)
        # endpoint-to-edge distances
        d_p0 = self._dist_points_to_edges(p0s)
        d_p1 = self._dist_points_to_edges(p1s)
        # edge-endpoint-to-query-segment distances
        ww = np.einsum("nj,nj->n", w, w)
        inv_ww = np.where(ww > 0, 1.0 / np.maximum(ww, 1e-30), 0.0)
        t_a = np.clip(np.einsum("nej,nj->ne", d0, w) * inv_ww[:, None], 0.0, 1.0)
        t_b = np.clip(np.einsum("nej,nj->ne", d1, w) * inv_ww[:, None], 0.0, 1.0)
        ca = p0s[:, None, :] + t_a[:, :, None] * w[:, None, :]
        cb = p0s[:, None, :] + t_b[:, :, None] * w[:, None, :]
        d_a = np.linalg.norm(self.a[None, :, :] - ca, axis=2)
        d_b = np.linalg.norm(self.b[None, :, :] - cb, axis=2)
        dist = np.minimum(np.minimum(d_p0, d_p1), np.minimum(d_a, d_b))
        dist[crossing] = 0.0
        return dist.min(axis=1)

    def _dist_points_to_edges(self, ps):
        d = ps[:, None, :] - self.a[None, :, :]
        t = np.einsum("nej,ej->ne", d, self.v) * self.inv_vv[None, :]
        t = np.clip(t, 0.0, 1.0)
        closest = self.a[None, :, :] + t[:, :, None] * self.v[None, :, :]
        return np.linalg.norm(ps[:, None, :] - closest, axis=2)

    @staticmethod
    def _dist_points_to_segment(ps, p0, w):
        ww = float(w @ w)
        if ww < 1e-30:
            return np.linalg.norm(ps - p0, axis=1)
        t = np.clip((ps - p0) @ w / ww, 0.0, 1.0)
        closest = p0 + t[:, None] * w
        return np.linalg.norm(ps - closest, axis=1)

    def ray_hit(self, origin, direction) -> float:
        """Distance along the ray to the first edge hit; inf if none."""
        if len(self) == 0:
            return math.inf
        o = np.asarray(origin, float)
        d = np.asarray(direction, float)
        ao = self.a - o
        denom = cross2(np.broadcast_to(d, self.v.shape), self.v)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = cross2(ao, self.v) / denom
            s = cross2(ao, np.broadcast_to(d, ao.shape)) / denom
        ok = (np.abs(denom) > 1e-12) & (t >= 0.0) & (s >= -1e-12) & (s <= 1.0 + 1e-12)
        best = np.min(t[ok]) if np.any(ok) else math.inf
        # collinear grazing: ray running along an edge hits its near endpoint
        par = np.abs(denom) <= 1e-12
        if np.any(par):
            col = par & (np.abs(cross2(ao, np.broadcast_to(d, ao.shape))) <= 1e-9)
            if np.any(col):
                for a_pt, b_pt in zip(self.a[col], self.b[col]):
                    for e in (a_pt, b_pt):
                        te = float((e - o) @ d)
                        if te >= 0.0:
                            best = min(best, te)
        return float(best)


@dataclass
class Bounds:
    """Axis-aligned world rectangle."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate bounds {self.as_tuple()}")

    def as_tuple(self):
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, p, margin: float = 0.0) -> bool:
        x, y = float(p[0]), float(p[1])
        return (
            self.x0 + margin <= x <= self.x1 - margin
            and self.y0 + margin <= y <= self.y1 - margin
        )

    def contains_many(self, ps: np.ndarray, margin: float = 0.0) -> np.ndarray:
        ps = np.atleast_2d(ps)
        return (
            (ps[:, 0] >= self.x0 + margin)
            & (ps[:, 0] <= self.x1 - margin)
            & (ps[:, 1] >= self.y0 + margin)
            & (ps[:, 1] <= self.y1 - margin)
        )

    def interior_dist(self, p) -> float:
        """Distance from an interior point to the nearest boundary edge."""
        x, y = float(p[0]), float(p[1])
        return min(x - self.x0, self.x1 - x, y - self.y0, self.y1 - y)

    def interior_dist_many(self, ps: np.ndarray) -> np.ndarray:
        ps = np.atleast_2d(ps)
        return np.minimum.reduce(
            [ps[:, 0] - self.x0, self.x1 - ps[:, 0], ps[:, 1] - self.y0, self.y1 - ps[:, 1]]
        )

    def ray_exit(self, origin, direction) -> float:
        """Distance along the ray to the boundary (origin assumed inside)."""
        o = np.asarray(origin, float)
        d = np.asarray(direction, float)
        best = math.inf
        for axis, lo, hi in ((0, self.x0, self.x1), (1, self.y0, self.y1)):
            if abs(d[axis]) > 1e-12:
                for edge in (lo, hi):
                    t = (edge - o[axis]) / d[axis]
                    if t >= 0:
                        best = min(best, t)
        return best


def polyline_length(points) -> float:
    pts = np.asarray(points, float)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def resample_polyline(points, step: float) -> np.ndarray:
    """Subdivide each segment into equal pieces no longer than ``step``.

    Original vertices are preserved.
    """
    pts = np.asarray(points, float)
    if len(pts) < 2:
        return pts.copy()
    out = [pts[0]]
    for p, q in zip(pts[:-1], pts[1:]):
        seg = float(np.linalg.norm(q - p))
        n = max(1, int(math.ceil(seg / step - 1e-9)))
        for k in range(1, n + 1):
            out.append(p + (q - p) * (k / n))
    return np.asarray(out)
