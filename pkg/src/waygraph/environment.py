"""Continuous 2D environments with exact collision queries and raster geodesics.

An :class:`Environment` is an axis-aligned rectangle minus a set of convex
polygon obstacles. Exact queries (``is_free``, ``raycast``, ``segment_free``)
run against the true polygons; geodesic queries run on a derived free-space
raster (cell size 0.05 m by default) shared by all consumers so that metrics,
oracles and graph refinement agree on one collision model.

The raster is eroded by ``agent_radius`` plus half a cell diagonal. The extra
half-diagonal guarantees that segments between centers of adjacent free cells
pass the exact capsule test, which the shortest-path follower relies on.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import EndpointBlocked, GenerationFailed, NoPath, OriginBlocked
from .geometry import (
    Bounds,
    EdgeSet,
    as_point,
    ensure_ccw,
    polyline_length,
    rect_polygon,
    resample_polyline,
)

SQRT2 = math.sqrt(2.0)

# profile name -> integer mixed into the generator seed
_PROFILE_CODES = {"rooms": 1, "corridors": 2, "clutter": 3}


class GeodesicField:
    """Raster of geodesic distances (meters) from a source point.

    ``distances[i, j]`` is the 8-connected shortest-path length from the
    source cell to cell ``(i, j)``; ``inf`` inside obstacles or unreachable
    regions. Immutable after construction.
    """

    def __init__(self, env: "Environment", source: np.ndarray, source_cell,
                 distances: np.ndarray, predecessors: np.ndarray):
        self.env = env
        self.source = source
        self.source_cell = source_cell
        self.distances = distances
        self.predecessors = predecessors  # flat cell index of previous cell, -1 at source

    def at(self, p) -> float:
        """Geodesic distance from the source to the cell containing ``p``."""
        cell = self.env.snap_to_free_cell(p)
        if cell is None:
            return math.inf
        return float(self.distances[cell])

    def at_many(self, ps) -> np.ndarray:
        """Vectorized :meth:`at`: direct cell lookup, snap fallback where blocked."""
        ps = np.atleast_2d(np.asarray(ps, float))
        env = self.env
        ni, nj = self.distances.shape
        i = np.clip(((ps[:, 0] - env.bounds.x0) / env.cell_size).astype(int), 0, ni - 1)
        j = np.clip(((ps[:, 1] - env.bounds.y0) / env.cell_size).astype(int), 0, nj - 1)
        d = self.distances[i, j].copy()
        for k in np.flatnonzero(~np.isfinite(d)):
            d[k] = self.at(ps[k])
        return d

    def cell_path_to(self, p):
        """Cell path source -> p (list of (i, j)), or None if unreachable."""
        cell = self.env.snap_to_free_cell(p)
        if cell is None or not math.isfinite(self.distances[cell]):
            return None
        ni, nj = self.distances.shape
        flat = cell[0] * nj + cell[1]
        src_flat = self.source_cell[0] * nj + self.source_cell[1]
        chain = [flat]
        while flat != src_flat:
            flat = int(self.predecessors[flat])
            if flat < 0:
                return None
            chain.append(flat)
        return [(f // nj, f % nj) for f in reversed(chain)]


class Environment:
    """Static 2D world: bounds, convex obstacles, and derived rasters."""

    def __init__(self, bounds, obstacles=(), cell_size: float = 0.05,
                 agent_radius: float = 0.10):
        if isinstance(bounds, Bounds):
            self.bounds = bounds
        else:
            self.bounds = Bounds(*[float(v) for v in bounds])
        self.obstacles = [ensure_ccw(p) for p in obstacles]
        self.cell_size = float(cell_size)
        self.agent_radius = float(agent_radius)
        if self.cell_size <= 0 or self.agent_radius < 0:
            raise ValueError("cell_size must be > 0 and agent_radius >= 0")
        for k, poly in enumerate(self.obstacles):
            if not np.all(self.bounds.contains_many(poly)):
                raise ValueError(f"obstacle {k} extends outside bounds")
        self.edges = EdgeSet(self.obstacles)
        self._poly_edges = [EdgeSet([p]) for p in self.obstacles]
        # raster / geodesic machinery built lazily
        self._free = None
        self._graph = None
        self._cell_ids = None
        self._field_cache: OrderedDict = OrderedDict()
        self._field_cache_cap = 64

    # ------------------------------------------------------------------ exact

    def clearance(self, p) -> float:
        """Distance from ``p`` to the nearest obstacle or boundary wall.

        Zero inside an obstacle, negative outside the bounds.
        """
        p = as_point(p)
        d = self.bounds.interior_dist(p)
        if len(self.edges):
            d = min(d, float(self.edges.points_clearance(p[None, :])[0]))
        return d

    def clearance_many(self, ps) -> np.ndarray:
        ps = np.atleast_2d(np.asarray(ps, float))
        d = self.bounds.interior_dist_many(ps)
        if len(self.edges):
            d = np.minimum(d, self.edges.points_clearance(ps))
        return d

    def is_free(self, p) -> bool:
        """Whether the agent disc at ``p`` fits inside bounds clear of obstacles."""
        return bool(self.clearance(p) >= self.agent_radius)

    def free_many(self, ps) -> np.ndarray:
        return self.clearance_many(ps) >= self.agent_radius

    def raycast(self, origin, angle: float, max_range: float) -> float:
        """Distance to the first obstacle/bounds surface along the ray, capped."""
        origin = as_point(origin)
        if not self.is_free(origin):
            raise OriginBlocked(f"raycast origin {origin.tolist()} is blocked")
        d = np.array([math.cos(angle), math.sin(angle)])
        t = self.bounds.ray_exit(origin, d)
        if len(self.edges):
            t = min(t, self.edges.ray_hit(origin, d))
        return float(min(t, max_range))

    def scan(self, origin, n_rays: int = 120, max_range: float = 3.25,
             heading: float = 0.0) -> np.ndarray:
        """Ray distances at ``n_rays`` bin centers starting from ``heading``."""
        angles = heading + (np.arange(n_rays) + 0.5) * (2.0 * math.pi / n_rays)
        return np.array([self.raycast(origin, a, max_range) for a in angles])

    def segment_free(self, a, b) -> bool:
        """Whether the agent can sweep straight from ``a`` to ``b``.

        True iff the capsule of ``agent_radius`` around segment ab intersects
        no obstacle and stays inside bounds.
        """
        a = as_point(a)
        b = as_point(b)
        r = self.agent_radius
        if not (self.bounds.contains(a, r) and self.bounds.contains(b, r)):
            return False
        if len(self.edges) == 0:
            return True
        if self.edges.point_inside(a) or self.edges.point_inside(b):
            return False
        return self.edges.segment_dist(a, b) >= r

    def segments_free(self, p0s, p1s, endpoints_known_free: bool = False) -> np.ndarray:
        """Vectorized :meth:`segment_free` over N segment pairs.

        ``endpoints_known_free`` skips the polygon-containment check when the
        caller has already validated both endpoints.
        """
        p0s = np.atleast_2d(np.asarray(p0s, float))
        p1s = np.atleast_2d(np.asarray(p1s, float))
        if len(p1s) == 1 and len(p0s) > 1:
            p1s = np.broadcast_to(p1s, p0s.shape)
        r = self.agent_radius
        ok = self.bounds.contains_many(p0s, r) & self.bounds.contains_many(p1s, r)
        if len(self.edges) == 0 or not ok.any():
            return ok
        sub = np.flatnonzero(ok)
        dist = self.edges.segments_dist(p0s[sub], p1s[sub], cutoff=r + 0.05)
        good = dist >= r
        if not endpoints_known_free:
            good &= ~(self.edges.points_inside(p0s[sub]) | self.edges.points_inside(p1s[sub]))
        ok[sub] &= good
        return ok

    # ----------------------------------------------------------------- raster

    @property
    def raster_margin(self) -> float:
        return self.agent_radius + self.cell_size * SQRT2 / 2.0

    @property
    def shape(self):
        ni = max(1, int(math.ceil(self.bounds.width / self.cell_size - 1e-9)))
        nj = max(1, int(math.ceil(self.bounds.height / self.cell_size - 1e-9)))
        return ni, nj

    def cell_of(self, p):
        p = np.asarray(p, float)
        ni, nj = self.shape
        i = int((p[0] - self.bounds.x0) / self.cell_size)
        j = int((p[1] - self.bounds.y0) / self.cell_size)
        return min(max(i, 0), ni - 1), min(max(j, 0), nj - 1)

    def cell_center(self, cell) -> np.ndarray:
        i, j = cell
        return np.array([
            self.bounds.x0 + (i + 0.5) * self.cell_size,
            self.bounds.y0 + (j + 0.5) * self.cell_size,
        ])

    @property
    def free_raster(self) -> np.ndarray:
        """Boolean free-space mask over cell centers (eroded, see module doc)."""
        if self._free is None:
            self._free = self._build_free_raster()
            if not self._free.any():
                raise ValueError("environment has empty free space")
        return self._free

    def _build_free_raster(self) -> np.ndarray:
        ni, nj = self.shape
        margin = self.raster_margin
        xs = self.bounds.x0 + (np.arange(ni) + 0.5) * self.cell_size
        ys = self.bounds.y0 + (np.arange(nj) + 0.5) * self.cell_size
        free = np.zeros((ni, nj), dtype=bool)
        free[(xs >= self.bounds.x0 + margin) & (xs <= self.bounds.x1 - margin), :] = True
        free[:, ~((ys >= self.bounds.y0 + margin) & (ys <= self.bounds.y1 - margin))] = False
        for poly, es in zip(self.obstacles, self._poly_edges):
            lo = poly.min(axis=0) - margin - self.cell_size
            hi = poly.max(axis=0) + margin + self.cell_size
            i0 = max(0, int((lo[0] - self.bounds.x0) / self.cell_size))
            i1 = min(ni, int((hi[0] - self.bounds.x0) / self.cell_size) + 1)
            j0 = max(0, int((lo[1] - self.bounds.y0) / self.cell_size))
            j1 = min(nj, int((hi[1] - self.bounds.y0) / self.cell_size) + 1)
            if i0 >= i1 or j0 >= j1:
                continue
            gx, gy = np.meshgrid(xs[i0:i1], ys[j0:j1], indexing="ij")
            pts = np.column_stack([gx.ravel(), gy.ravel()])
            blocked = es.points_clearance(pts) < margin
            sub = free[i0:i1, j0:j1]
            sub[blocked.reshape(gx.shape)] = False
        return free

    def snap_to_free_cell(self, p, max_rings: int = 8):
        """Nearest free cell to ``p``, searching outward up to ``max_rings``."""
        free = self.free_raster
        ci, cj = self.cell_of(p)
        if free[ci, cj]:
            return ci, cj
        ni, nj = free.shape
        p = np.asarray(p, float)
        for ring in range(1, max_rings + 1):
            best = None
            best_d = math.inf
            i0, i1 = max(0, ci - ring), min(ni - 1, ci + ring)
            j0, j1 = max(0, cj - ring), min(nj - 1, cj + ring)
            for i in range(i0, i1 + 1):
                for j in (j0, j1) if j1 > j0 else (j0,):
                    if free[i, j]:
                        d = float(np.linalg.norm(self.cell_center((i, j)) - p))
                        if d < best_d:
                            best, best_d = (i, j), d
            for j in range(j0 + 1, j1):
                for i in (i0, i1) if i1 > i0 else (i0,):
                    if free[i, j]:
                        d = float(np.linalg.norm(self.cell_center((i, j)) - p))
                        if d < best_d:
                            best, best_d = (i, j), d
            if best is not None:
                return best
        return None

    # --------------------------------------------------------------- geodesic

    def _cell_graph(self):
        if self._graph is None:
            free = self.free_raster
            ni, nj = free.shape
            idx = -np.ones((ni, nj), dtype=np.int64)
            flat_ids = np.flatnonzero(free.ravel())
            idx.ravel()[flat_ids] = np.arange(len(flat_ids))
            rows, cols, wts = [], [], []
            for di, dj, w in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, SQRT2), (1, -1, SQRT2)):
                i0, i1 = max(0, -di), ni - max(0, di)
                j0, j1 = max(0, -dj), nj - max(0, dj)
                src = idx[i0:i1, j0:j1]
                dst = idx[i0 + di:i1 + di, j0 + dj:j1 + dj]
                m = (src >= 0) & (dst >= 0)
                rows.append(src[m])
                cols.append(dst[m])
                wts.append(np.full(int(m.sum()), w * self.cell_size))
            n = len(flat_ids)
            g = csr_matrix(
                (np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n, n),
            )
            self._graph = (g, idx, flat_ids)
        return self._graph

    def geodesic_field(self, source) -> GeodesicField:
        """Geodesic distance field from ``source`` (cached per source cell)."""
        source = as_point(source)
        if not self.is_free(source):
            raise EndpointBlocked(f"field source {source.tolist()} is blocked")
        cell = self.snap_to_free_cell(source)
        if cell is None:
            raise EndpointBlocked(f"no free raster cell near {source.tolist()}")
        cached = self._field_cache.get(cell)
        if cached is not None:
            self._field_cache.move_to_end(cell)
            return cached
        g, idx, flat_ids = self._cell_graph()
        src_id = int(idx[cell])
        dist, pred = dijkstra(g, directed=False, indices=src_id, return_predecessors=True)
        ni, nj = self.free_raster.shape
        distances = np.full(ni * nj, np.inf)
        distances[flat_ids] = dist
        predecessors = np.full(ni * nj, -1, dtype=np.int64)
        reach = pred >= 0
        predecessors[flat_ids[reach]] = flat_ids[pred[reach]]
        field = GeodesicField(self, source, cell, distances.reshape(ni, nj), predecessors)
        self._field_cache[cell] = field
        if len(self._field_cache) > self._field_cache_cap:
            self._field_cache.popitem(last=False)
        return field

    def geodesic_distance(self, a, b) -> float:
        """8-connected shortest free-space path length between ``a`` and ``b``."""
        a = as_point(a)
        b = as_point(b)
        if not self.is_free(a):
            raise EndpointBlocked(f"endpoint {a.tolist()} is blocked")
        if not self.is_free(b):
            raise EndpointBlocked(f"endpoint {b.tolist()} is blocked")
        if np.allclose(a, b):
            return 0.0
        return self.geodesic_field(b).at(a)

    def shortest_path_follower(self, a, b, step: float = 0.25) -> np.ndarray:
        """Free polyline from ``a`` to ``b`` with gaps no larger than ``step``.

        Descends the geodesic field of ``b`` and simplifies the raster path by
        string pulling; every consecutive segment passes ``segment_free``.
        """
        a = as_point(a)
        b = as_point(b)
        if not self.is_free(a) or not self.is_free(b):
            raise EndpointBlocked("follower endpoints must be free")
        if np.linalg.norm(b - a) < 1e-12:
            return np.array([a])
        field = self.geodesic_field(b)
        cells = field.cell_path_to(a)
        if cells is None:
            raise NoPath(f"{a.tolist()} and {b.tolist()} are disconnected")
        pts = [a] + [self.cell_center(c) for c in reversed(cells)] + [b]
        pts = self._string_pull(np.asarray(pts))
        out = resample_polyline(pts, step)
        for p, q in zip(out[:-1], out[1:]):
            if not self.segment_free(p, q):
                raise NoPath("follower produced an invalid segment (degenerate clearance)")
        return out

    def _string_pull(self, pts: np.ndarray) -> np.ndarray:
        """Greedy shortcut simplification keeping all segments capsule-free."""
        n = len(pts)
        out = [pts[0]]
        i = 0
        while i < n - 1:
            # exponential probe then binary search for the farthest visible vertex
            lo = i + 1
            gap = 1
            while i + gap < n and self.segment_free(pts[i], pts[i + gap]):
                lo = i + gap
                gap *= 2
            hi = min(n - 1, i + gap)
            while lo < hi:
                mid = (lo + hi + 1) // 2
                if self.segment_free(pts[i], pts[mid]):
                    lo = mid
                else:
                    hi = mid - 1
            out.append(pts[lo])
            i = lo
        return np.asarray(out)

    # ---------------------------------------------------------------- helpers

    def sample_free_point(self, rng: np.random.Generator, min_clearance: float = 0.0
                          ) -> np.ndarray:
        """Uniform-ish random free point (free raster cell center + jitter)."""
        free = self.free_raster
        cand = np.argwhere(free)
        for _ in range(1000):
            i, j = cand[rng.integers(len(cand))]
            p = self.cell_center((i, j)) + rng.uniform(-0.3, 0.3, 2) * self.cell_size
            if self.clearance(p) >= max(self.agent_radius, min_clearance):
                return p
        raise GenerationFailed("could not sample a free point")

    # --------------------------------------------------------------------- io

    def to_dict(self) -> dict:
        return {
            "bounds": list(self.bounds.as_tuple()),
            "cell_size": self.cell_size,
            "agent_radius": self.agent_radius,
            "obstacles": [p.tolist() for p in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        return cls(d["bounds"], d.get("obstacles", ()),
                   cell_size=d.get("cell_size", 0.05),
                   agent_radius=d.get("agent_radius", 0.10))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "Environment":
        with open(path) as f:
            return cls.from_dict(json.load(f))


# --------------------------------------------------------------- generation


def _rotated_rect(cx, cy, hx, hy, angle) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    rot = local @ np.array([[c, s], [-s, c]])
    return rot + np.array([cx, cy])


def _wall_with_doors(x0, y0, x1, y1, axis, doors):
    """Split a wall rectangle by door intervals along ``axis`` (0=x, 1=y)."""
    lo, hi = (x0, x1) if axis == 0 else (y0, y1)
    cuts = sorted(doors)
    pieces = []
    cur = lo
    for d0, d1 in cuts:
        if d0 > cur + 1e-9:
            pieces.append((cur, d0))
        cur = max(cur, d1)
    if cur < hi - 1e-9:
        pieces.append((cur, hi))
    rects = []
    for p0, p1 in pieces:
        if p1 - p0 < 1e-6:
            continue
        if axis == 0:
            rects.append(rect_polygon(p0, y0, p1, y1))
        else:
            rects.append(rect_polygon(x0, p0, x1, p1))
    return rects


def _gen_rooms(rng: np.random.Generator):
    w = rng.uniform(10.0, 13.0)
    h = rng.uniform(8.0, 11.0)
    nx = int(rng.integers(2, 4))
    ny = 2
    t = 0.2  # wall thickness
    obstacles = []
    xs = [w * (k + 1) / nx for k in range(nx - 1)]
    ys = [h * (k + 1) / ny for k in range(ny - 1)]
    for xw in xs:
        doors = []
        for k in range(ny):
            ylo, yhi = h * k / ny, h * (k + 1) / ny
            dw = rng.uniform(1.2, 1.6)
            d0 = rng.uniform(ylo + 0.6, yhi - 0.6 - dw)
            doors.append((d0, d0 + dw))
        obstacles += _wall_with_doors(xw - t / 2, 0.0, xw + t / 2, h, 1, doors)
    for yw in ys:
        doors = []
        for k in range(nx):
            xlo, xhi = w * k / nx, w * (k + 1) / nx
            dw = rng.uniform(1.2, 1.6)
            d0 = rng.uniform(xlo + 0.6, xhi - 0.6 - dw)
            doors.append((d0, d0 + dw))
        obstacles += _wall_with_doors(0.0, yw - t / 2, w, yw + t / 2, 0, doors)
    # clutter inside rooms, kept clear of walls and doors
    for ix in range(nx):
        for iy in range(ny):
            for _ in range(int(rng.integers(0, 3))):
                rx0, rx1 = w * ix / nx, w * (ix + 1) / nx
                ry0, ry1 = h * iy / ny, h * (iy + 1) / ny
                hx = rng.uniform(0.15, 0.35)
                hy = rng.uniform(0.15, 0.35)
                pad = 1.1 + max(hx, hy)
                if rx1 - rx0 < 2 * pad or ry1 - ry0 < 2 * pad:
                    continue
                cx = rng.uniform(rx0 + pad, rx1 - pad)
                cy = rng.uniform(ry0 + pad, ry1 - pad)
                obstacles.append(_rotated_rect(cx, cy, hx, hy, rng.uniform(0, math.pi)))
    return (0.0, 0.0, w, h), obstacles


def _gen_corridors(rng: np.random.Generator):
    # pitch stays below twice the default graph spacing so junction-to-junction
    # hops survive the Delaunay edge truncation
    pitch = rng.uniform(2.3, 2.6)
    nx = int(rng.integers(4, 6))
    ny = int(rng.integers(4, 6))
    w, h = nx * pitch, ny * pitch
    obstacles = []
    for ix in range(nx):
        for iy in range(ny):
            if rng.random() < 0.25:
                continue  # leave open plazas
            cx = (ix + 0.5) * pitch + rng.uniform(-0.08, 0.08)
            cy = (iy + 0.5) * pitch + rng.uniform(-0.08, 0.08)
            half = (pitch - rng.uniform(1.1, 1.4)) / 2.0
            if half < 0.3:
                continue
            obstacles.append(_rotated_rect(cx, cy, half, half, 0.0))
    return (0.0, 0.0, w, h), obstacles


def _gen_clutter(rng: np.random.Generator):
    w = rng.uniform(10.0, 13.0)
    h = rng.uniform(10.0, 13.0)
    obstacles = []
    centers = []
    radii = []
    n_target = int(rng.integers(10, 16))
    for _ in range(200):
        if len(obstacles) >= n_target:
            break
        r = rng.uniform(0.3, 0.7)
        cx = rng.uniform(1.2 + r, w - 1.2 - r)
        cy = rng.uniform(1.2 + r, h - 1.2 - r)
        ok = all(math.hypot(cx - px, cy - py) >= r + pr + 1.2
                 for (px, py), pr in zip(centers, radii))
        if not ok:
            continue
        k = int(rng.integers(3, 7))
        angles = np.sort(rng.uniform(0, 2 * math.pi, k))
        if np.min(np.diff(angles, append=angles[0] + 2 * math.pi)) < 0.3:
            continue
        poly = np.column_stack([cx + r * np.cos(angles), cy + r * np.sin(angles)])
        obstacles.append(poly)
        centers.append((cx, cy))
        radii.append(r)
    return (0.0, 0.0, w, h), obstacles


_GENERATORS = {"rooms": _gen_rooms, "corridors": _gen_corridors, "clutter": _gen_clutter}


def generate_environment(seed: int, profile: str = "rooms", cell_size: float = 0.05,
                         agent_radius: float = 0.10, max_attempts: int = 100
                         ) -> Environment:
    """Procedural environment, deterministic in ``seed``.

    Regenerates internally (up to ``max_attempts``) until the free space is a
    single connected component covering a reasonable share of the bounds.
    """
    if profile not in _GENERATORS:
        raise ValueError(f"unknown profile {profile!r}; expected one of {sorted(_GENERATORS)}")
    gen = _GENERATORS[profile]
    for attempt in range(max_attempts):
        rng = np.random.default_rng([int(seed), attempt, _PROFILE_CODES[profile]])
        bounds, obstacles = gen(rng)
        try:
            env = Environment(bounds, obstacles, cell_size=cell_size,
                              agent_radius=agent_radius)
            free = env.free_raster
        except ValueError:
            continue
        labels, n_comp = ndimage.label(free)
        if n_comp != 1:
            continue
        if free.mean() < 0.25:
            continue
        return env
    raise GenerationFailed(
        f"no connected {profile!r} layout for seed {seed} in {max_attempts} attempts")
