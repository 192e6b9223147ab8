"""Connectivity graphs over free space and the refinement pipeline.

A raw graph (Poisson-disc nodes + truncated Delaunay edges, sampled over the
whole bounds so some of it lands inside obstacles) is iteratively repaired:
blocked or badly-connected nodes are re-sampled inside a 0.35 m ring set,
blocked edges are replaced by detours along shortest free paths, and nearby
nodes are merged, until every node is free, every edge passes the capsule
test, no edge is shorter than the merge distance and the graph is connected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .environment import Environment
from .errors import (
    CandidateBlocked,
    EndpointBlocked,
    NoPath,
    RefinementDiverged,
    UnreachableEndpoint,
)
from .geometry import polyline_length

# (radius m, sample count) rings; 264 candidate positions total
DEFAULT_RING_SPEC = ((0.10, 18), (0.15, 30), (0.20, 36),
                     (0.25, 48), (0.30, 60), (0.35, 72))


@dataclass
class RefineConfig:
    ring_spec: tuple = DEFAULT_RING_SPEC
    score_weights: tuple = (1.0, 1.0, 1.0)  # clearance, node-count, straightness
    merge_dist: float = 0.5
    fit_dist: float = 0.8
    max_iterations: int = 20
    detour_steps: tuple = (0.5, 0.75, 1.0, 1.5)
    clearance_norm: float = 0.35  # clearance saturates at the outer ring radius

    def __post_init__(self):
        if sum(n for _, n in self.ring_spec) != 264:
            raise ValueError("ring_spec sample counts must total 264")
        if any(w < 0 for w in self.score_weights):
            raise ValueError("score weights must be non-negative")


@dataclass
class GraphStats:
    node_count: int
    edge_count: int
    mean_degree: float
    mean_edge_length: float
    degree_histogram: dict
    edge_length_histogram: dict  # 0.25 m bins, keyed by bin lower edge

    def to_dict(self):
        return {
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "mean_degree": self.mean_degree,
            "mean_edge_length": self.mean_edge_length,
            "degree_histogram": {str(k): v for k, v in sorted(self.degree_histogram.items())},
            "edge_length_histogram": {f"{k:.2f}": v for k, v in
                                      sorted(self.edge_length_histogram.items())},
        }


class NavGraph:
    """Undirected graph of 2D nodes; node ids are opaque integers."""

    def __init__(self, nodes=None, edges=None, env_id: str | None = None):
        self.nodes: dict[int, np.ndarray] = {}
        if nodes:
            for k, p in nodes.items():
                self.nodes[int(k)] = np.asarray(p, float).reshape(2)
        self.edges: set[tuple[int, int]] = set()
        if edges:
            for a, b in edges:
                self.add_edge(int(a), int(b))
        self.env_id = env_id
        self._next = max(self.nodes, default=-1) + 1

    # ------------------------------------------------------------- mutation

    def new_node(self, p) -> int:
        nid = self._next
        self._next += 1
        self.nodes[nid] = np.asarray(p, float).reshape(2)
        return nid

    def add_edge(self, a: int, b: int):
        if a == b:
            return
        self.edges.add((a, b) if a < b else (b, a))

    def remove_edge(self, a: int, b: int):
        self.edges.discard((a, b) if a < b else (b, a))

    def remove_node(self, n: int):
        self.nodes.pop(n, None)
        self.edges = {e for e in self.edges if n not in e}

    def neighbors(self, n: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == n:
                out.append(b)
            elif b == n:
                out.append(a)
        return sorted(out)

    def degree(self, n: int) -> int:
        return sum(1 for e in self.edges if n in e)

    def edge_length(self, e) -> float:
        a, b = e
        return float(np.linalg.norm(self.nodes[a] - self.nodes[b]))

    def copy(self) -> "NavGraph":
        g = NavGraph(env_id=self.env_id)
        g.nodes = {k: v.copy() for k, v in self.nodes.items()}
        g.edges = set(self.edges)
        g._next = self._next
        return g

    def positions(self) -> np.ndarray:
        return np.array([self.nodes[k] for k in sorted(self.nodes)])

    def node_ids(self) -> list[int]:
        return sorted(self.nodes)

    def components(self) -> list[set]:
        adj = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen, comps = set(), []
        for start in self.nodes:
            if start in seen:
                continue
            comp, stack = set(), [start]
            while stack:
                n = stack.pop()
                if n in comp:
                    continue
                comp.add(n)
                stack.extend(adj[n] - comp)
            seen |= comp
            comps.append(comp)
        return comps

    def nearest_node(self, p) -> int:
        ids = self.node_ids()
        pos = np.array([self.nodes[i] for i in ids])
        return ids[int(np.argmin(np.linalg.norm(pos - np.asarray(p, float), axis=1)))]

    # ------------------------------------------------------------------- io

    def to_dict(self, env_ref: str | None = None) -> dict:
        return {
            "env": env_ref if env_ref is not None else (self.env_id or ""),
            "nodes": {str(k): self.nodes[k].tolist() for k in sorted(self.nodes)},
            "edges": [[str(a), str(b)] for a, b in sorted(self.edges)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NavGraph":
        return cls(nodes=d.get("nodes", {}), edges=d.get("edges", []),
                   env_id=d.get("env") or None)

    def save(self, path, env_ref: str | None = None):
        with open(path, "w") as f:
            json.dump(self.to_dict(env_ref), f)

    @classmethod
    def load(cls, path) -> "NavGraph":
        with open(path) as f:
            return cls.from_dict(json.load(f))


# ----------------------------------------------------------------- validity


def node_valid(env: Environment, graph: NavGraph, n: int) -> bool:
    return env.is_free(graph.nodes[n])


def edge_valid(env: Environment, graph: NavGraph, e) -> bool:
    a, b = e
    return env.segment_free(graph.nodes[a], graph.nodes[b])


def invalid_nodes(env, graph) -> list[int]:
    return [n for n in graph.node_ids() if not node_valid(env, graph, n)]


def invalid_edges(env, graph) -> list[tuple]:
    edges = sorted(graph.edges)
    if not edges:
        return []
    p0 = np.array([graph.nodes[a] for a, _ in edges])
    p1 = np.array([graph.nodes[b] for _, b in edges])
    ok = env.segments_free(p0, p1)
    return [e for e, good in zip(edges, ok) if not good]


def navigable_violations(env, graph, cfg: RefineConfig | None = None):
    """(bad_nodes, bad_edges, short_edges, n_components) for the invariants."""
    cfg = cfg or RefineConfig()
    bad_nodes = invalid_nodes(env, graph)
    bad_edges = invalid_edges(env, graph)
    short = [e for e in sorted(graph.edges) if graph.edge_length(e) < cfg.merge_dist - 1e-9]
    return bad_nodes, bad_edges, short, len(graph.components())


def is_navigable(env, graph, cfg: RefineConfig | None = None) -> bool:
    bad_n, bad_e, short, n_comp = navigable_violations(env, graph, cfg)
    return not bad_n and not bad_e and not short and n_comp <= 1


# ------------------------------------------------------------------ seeding


def _poisson_disc(rng: np.random.Generator, bounds, spacing: float, k: int = 30):
    """Bridson blue-noise sampling over the bounds rectangle."""
    x0, y0, x1, y1 = bounds
    cell = spacing / math.sqrt(2)
    gw = int(math.ceil((x1 - x0) / cell))
    gh = int(math.ceil((y1 - y0) / cell))
    grid = -np.ones((gw, gh), dtype=int)
    pts = []
    active = []

    def grid_idx(p):
        return (min(int((p[0] - x0) / cell), gw - 1), min(int((p[1] - y0) / cell), gh - 1))

    def fits(p):
        gi, gj = grid_idx(p)
        for i in range(max(0, gi - 2), min(gw, gi + 3)):
            for j in range(max(0, gj - 2), min(gh, gj + 3)):
                q = grid[i, j]
                if q >= 0 and np.linalg.norm(pts[q] - p) < spacing:
                    return False
        return True

    p0 = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
    pts.append(p0)
    active.append(0)
    grid[grid_idx(p0)] = 0
    while active:
        ai = int(rng.integers(len(active)))
        base = pts[active[ai]]
        for _ in range(k):
            r = spacing * (1 + rng.random())
            ang = rng.uniform(0, 2 * math.pi)
            p = base + r * np.array([math.cos(ang), math.sin(ang)])
            if not (x0 <= p[0] < x1 and y0 <= p[1] < y1) or not fits(p):
                continue
            grid[grid_idx(p)] = len(pts)
            pts.append(p)
            active.append(len(pts) - 1)
            break
        else:
            active.pop(ai)
    return np.array(pts)


def seed_graph(env: Environment, seed: int, target_spacing: float = 1.4) -> NavGraph:
    """Raw graph: Poisson-disc nodes over bounds, Delaunay edges <= 2x spacing.

    Deliberately not filtered to free space, so refinement has work to do.
    Sampling respects the agent-radius margin at the outer bounds (nodes on
    the boundary wall carry no information), but ignores obstacles.
    """
    rng = np.random.default_rng([int(seed), 101])
    x0, y0, x1, y1 = env.bounds.as_tuple()
    r = env.agent_radius + 1e-6
    pts = _poisson_disc(rng, (x0 + r, y0 + r, x1 - r, y1 - r), target_spacing)
    g = NavGraph()
    for p in pts:
        g.new_node(p)
    if len(pts) >= 3:
        tri = Delaunay(pts)
        for simplex in tri.simplices:
            for i in range(3):
                a, b = int(simplex[i]), int(simplex[(i + 1) % 3])
                if np.linalg.norm(pts[a] - pts[b]) <= 2.0 * target_spacing:
                    g.add_edge(a, b)
    return g


# ------------------------------------------------------------------ scoring


def ring_candidates(center, cfg: RefineConfig) -> np.ndarray:
    """The 264 candidate positions on concentric rings around ``center``."""
    center = np.asarray(center, float)
    out = []
    for radius, count in cfg.ring_spec:
        ang = np.arange(count) * (2 * math.pi / count)
        out.append(center + radius * np.column_stack([np.cos(ang), np.sin(ang)]))
    return np.concatenate(out)


def _detour_estimate(env: Environment, p, q) -> tuple[int, float]:
    """(extra nodes needed, path length) estimate for reconnecting p to q.

    Uses the geodesic field of ``q``; one detour node is assumed per 1.5 m of
    path beyond a single hop. Returns (0, inf) when disconnected or when the
    far endpoint is itself blocked (fixing it is that node's own adjustment).
    """
    try:
        d = env.geodesic_field(q).at(p)
    except EndpointBlocked:
        return 0, math.inf
    if not math.isfinite(d):
        return 0, math.inf
    return max(0, int(math.ceil(d / 1.5)) - 1), d


def _score_candidates(env: Environment, graph: NavGraph, node_id: int,
                      cands: np.ndarray, cfg: RefineConfig) -> np.ndarray:
    """Vectorized :func:`score_candidate` over an (N, 2) candidate array."""
    cands = np.atleast_2d(np.asarray(cands, float))
    n = len(cands)
    w_c, w_n, w_s = cfg.score_weights
    clear_term = np.clip(env.clearance_many(cands) / cfg.clearance_norm, 0.0, 1.0)
    new_nodes = np.zeros(n)
    orig_len = np.zeros(n)
    new_len = np.zeros(n)
    for nb in graph.neighbors(node_id):
        q = graph.nodes[nb]
        e_len = graph.edge_length(tuple(sorted((node_id, nb))))
        free = env.segments_free(cands, q[None, :],
                                 endpoints_known_free=env.is_free(q))
        path_len = np.where(free, np.linalg.norm(cands - q, axis=1), np.inf)
        extra = np.zeros(n)
        blocked = ~free
        if blocked.any():
            try:
                geo = env.geodesic_field(q).at_many(cands[blocked])
            except EndpointBlocked:
                geo = np.full(int(blocked.sum()), np.inf)
            path_len[blocked] = geo
            with np.errstate(invalid="ignore"):
                extra[blocked] = np.where(
                    np.isfinite(geo), np.maximum(0, np.ceil(geo / 1.5) - 1), 0)
        valid = np.isfinite(path_len)
        new_nodes += np.where(valid, extra, 0.0)
        orig_len += np.where(valid, e_len, 0.0)
        new_len += np.where(valid, path_len, 0.0)
    straight = np.where(new_len > 0, orig_len / np.maximum(new_len, 1e-12), 1.0)
    return w_c * clear_term + w_n / (1.0 + new_nodes) + w_s * straight


def score_candidate(env: Environment, graph: NavGraph, node_id: int, candidate,
                    cfg: RefineConfig | None = None) -> float:
    """Weighted quality of moving ``node_id`` to ``candidate``.

    score = w_c * clip(clearance/0.35, 0, 1)
          + w_n * 1 / (1 + nodes_needed_to_revalidate_incident_edges)
          + w_s * (sum of original incident edge lengths) / (sum of new path lengths)

    Incident edges that stay straight keep their Euclidean length; blocked
    ones are costed by detour planning on the geodesic raster (one extra node
    per 1.5 m of detour beyond a single hop). Geodesically disconnected
    neighbors are skipped on both sides of the straightness ratio.
    """
    cfg = cfg or RefineConfig()
    candidate = np.asarray(candidate, float)
    if not env.is_free(candidate):
        raise CandidateBlocked(f"candidate {candidate.tolist()} is blocked")
    return float(_score_candidates(env, graph, node_id, candidate[None, :], cfg)[0])


# --------------------------------------------------------------- operations


def adjust_node(env: Environment, graph: NavGraph, node_id: int,
                cfg: RefineConfig | None = None) -> NavGraph:
    """Move an invalid node to the best-scoring free ring candidate.

    Falls back to deleting the node (reconnecting its former neighbors in
    ring order) when no candidate is free. Mutates and returns ``graph``.
    """
    cfg = cfg or RefineConfig()
    cands = ring_candidates(graph.nodes[node_id], cfg)
    free = env.free_many(cands)
    if not free.any():
        _delete_and_reconnect(env, graph, node_id, cfg)
        return graph
    scores = _score_candidates(env, graph, node_id, cands[free], cfg)
    graph.nodes[node_id] = cands[free][int(np.argmax(scores))].copy()
    return graph


def _delete_and_reconnect(env, graph, node_id, cfg):
    center = graph.nodes[node_id]
    nbs = graph.neighbors(node_id)
    graph.remove_node(node_id)
    if len(nbs) < 2:
        return
    # chain former neighbors in angular order around the deleted node
    nbs = sorted(nbs, key=lambda n: math.atan2(*(graph.nodes[n] - center)[::-1]))
    pairs = list(zip(nbs, nbs[1:]))
    for a, b in pairs:
        if (min(a, b), max(a, b)) in graph.edges:
            continue
        if env.segment_free(graph.nodes[a], graph.nodes[b]):
            graph.add_edge(a, b)
        else:
            graph.add_edge(a, b)
            add_detour(env, graph, a, b, cfg)


def _chain_points(path: np.ndarray, step: float) -> np.ndarray:
    """Resample a pulled polyline into chain vertices with spacing >= step.

    Pulled segments shorter than ``step`` are kept whole, longer ones are
    divided into equal pieces no shorter than ``step``.
    """
    out = [path[0]]
    for p, q in zip(path[:-1], path[1:]):
        seg = float(np.linalg.norm(q - p))
        n = max(1, int(seg / step))
        for k in range(1, n + 1):
            out.append(p + (q - p) * (k / n))
    return np.asarray(out)


def _improve_chain_clearance(env: Environment, chain: np.ndarray,
                             cfg: RefineConfig) -> np.ndarray:
    """Nudge interior chain vertices away from walls where edges allow it.

    String-pulled vertices hug obstacle corners at raster clearance; nodes
    should not adhere to obstacles, so each interior vertex tries small ring
    offsets and keeps the best-clearance position whose two adjacent
    segments stay capsule-free.
    """
    chain = chain.copy()
    offsets = []
    for radius in (0.10, 0.20, 0.30):
        ang = np.arange(12) * (2 * math.pi / 12)
        offsets.append(radius * np.column_stack([np.cos(ang), np.sin(ang)]))
    offsets = np.concatenate(offsets)
    for k in range(1, len(chain) - 1):
        cands = np.vstack([chain[k][None, :], chain[k] + offsets])
        clear = env.clearance_many(cands)
        for i in np.argsort(-clear, kind="stable"):
            if i == 0 or clear[i] <= clear[0] + 1e-9:
                break  # nothing strictly better than the current vertex
            p = cands[i]
            if env.segment_free(chain[k - 1], p) and env.segment_free(p, chain[k + 1]):
                chain[k] = p
                break
    return chain


def add_detour(env: Environment, graph: NavGraph, a: int, b: int,
               cfg: RefineConfig | None = None) -> NavGraph:
    """Replace the blocked edge (a, b) by a detour chain of new nodes.

    Candidate chains come from the shortest-path follower at several step
    lengths; the chain maximizing clearance / node-count / straightness wins.
    Geodesically disconnected endpoints just lose the edge.
    """
    cfg = cfg or RefineConfig()
    graph.remove_edge(a, b)
    pa, pb = graph.nodes[a], graph.nodes[b]
    try:
        pulled = env.shortest_path_follower(pa, pb, step=max(cfg.detour_steps))
    except (NoPath, EndpointBlocked):
        return graph
    direct = float(np.linalg.norm(pa - pb))
    w_c, w_n, w_s = cfg.score_weights
    best_chain, best_score = None, -math.inf
    for step in cfg.detour_steps:
        chain = _chain_points(pulled, step)
        interior = chain[1:-1]
        if len(interior):
            clear = env.clearance_many(interior) / cfg.clearance_norm
            clear_term = float(np.clip(clear, 0, 1).mean())
        else:
            clear_term = 1.0
        score = (w_c * clear_term
                 + w_n * 1.0 / (1 + len(interior))
                 + w_s * direct / max(polyline_length(chain), 1e-9))
        if score > best_score:
            best_chain, best_score = chain, score
    best_chain = _improve_chain_clearance(env, best_chain, cfg)
    prev = a
    for p in best_chain[1:-1]:
        nid = graph.new_node(p)
        graph.add_edge(prev, nid)
        prev = nid
    graph.add_edge(prev, b)
    return graph


def _nearest_free_point(env: Environment, p, cfg: RefineConfig) -> np.ndarray:
    p = np.asarray(p, float)
    if env.is_free(p):
        return p
    for radius, count in cfg.ring_spec:
        ang = np.arange(count) * (2 * math.pi / count)
        cands = p + radius * np.column_stack([np.cos(ang), np.sin(ang)])
        free = env.free_many(cands)
        if free.any():
            d = np.linalg.norm(cands[free] - p, axis=1)
            return cands[free][int(np.argmin(d))]
    cell = env.snap_to_free_cell(p, max_rings=20)
    if cell is None:
        raise CandidateBlocked(f"no free point near {p.tolist()}")
    return env.cell_center(cell)


def _merge_position(env, graph, a, b, nbs, cfg) -> np.ndarray:
    """Merged-node position: midpoint, adjusted so valid edges stay valid.

    Prefers the free candidate nearest the midpoint (midpoint itself first,
    then the ring samples) from which every previously-valid incident edge
    still passes the capsule test; plain free-snapping is the fallback.
    """
    midpoint = (graph.nodes[a] + graph.nodes[b]) / 2.0
    keep = [graph.nodes[nb] for nb in nbs
            if env.segments_free(
                np.array([graph.nodes[x] for x in (a, b) if
                          (min(x, nb), max(x, nb)) in graph.edges]),
                graph.nodes[nb][None, :]).any()]
    cands = np.vstack([midpoint[None, :], ring_candidates(midpoint, cfg)])
    order = np.argsort(np.linalg.norm(cands - midpoint, axis=1), kind="stable")
    cands = cands[order]
    free = env.free_many(cands)
    if free.any():
        good = free.copy()
        for q in keep:
            good &= env.segments_free(cands, q[None, :])
        pick = np.flatnonzero(good)
        if len(pick):
            return cands[pick[0]].copy()
        return cands[np.flatnonzero(free)[0]].copy()
    return _nearest_free_point(env, midpoint, cfg)


def merge_nodes(env: Environment, graph: NavGraph,
                cfg: RefineConfig | None = None) -> NavGraph:
    """Greedily merge the closest node pair until all pairs >= merge_dist apart.

    Merged nodes land on their midpoint (snapped to free space, preferring
    positions that keep the rewired edges valid); incident edges are rewired,
    self-loops and duplicates dropped.
    """
    cfg = cfg or RefineConfig()
    while len(graph.nodes) >= 2:
        ids = graph.node_ids()
        pos = np.array([graph.nodes[i] for i in ids])
        tree = cKDTree(pos)
        dist, idx = tree.query(pos, k=2)
        closest = int(np.argmin(dist[:, 1]))
        if dist[closest, 1] >= cfg.merge_dist:
            break
        # coincident nodes make the query return the point itself; pick the twin
        partner = next(int(j) for j in idx[closest] if int(j) != closest)
        a, b = ids[closest], ids[partner]
        nbs = (set(graph.neighbors(a)) | set(graph.neighbors(b))) - {a, b}
        mid = _merge_position(env, graph, a, b, nbs, cfg)
        graph.remove_node(a)
        graph.remove_node(b)
        nid = graph.new_node(mid)
        for nb in nbs:
            graph.add_edge(nid, nb)
    return graph


def fit_endpoints(env: Environment, graph: NavGraph, points,
                  cfg: RefineConfig | None = None) -> NavGraph:
    """Ensure every point has a node within geodesic ``fit_dist``.

    Points farther than that get a new node at their position, connected to
    the geodesically-nearest node (direct edge or detour chain).
    """
    cfg = cfg or RefineConfig()
    for p in points:
        p = np.asarray(p, float)
        field = env.geodesic_field(p)
        ids = graph.node_ids()
        dists = np.array([field.at(graph.nodes[i]) for i in ids])
        if not np.isfinite(dists).any():
            raise UnreachableEndpoint(f"point {p.tolist()} is disconnected from the graph")
        if dists.min() <= cfg.fit_dist:
            continue
        nearest = ids[int(np.argmin(dists))]
        nid = graph.new_node(p)
        if env.segment_free(p, graph.nodes[nearest]):
            graph.add_edge(nid, nearest)
        else:
            graph.add_edge(nid, nearest)
            add_detour(env, graph, nid, nearest, cfg)
    return graph


def _bridge_components(env, graph, cfg) -> bool:
    """Connect the closest pair of components; True if anything changed."""
    comps = graph.components()
    if len(comps) <= 1:
        return False
    comps.sort(key=len, reverse=True)
    main = [n for n in comps[0] if node_valid(env, graph, n)]
    other = [n for n in comps[1] if node_valid(env, graph, n)]
    if not main or not other:
        return False  # blocked nodes get adjusted before bridging makes sense
    best = None
    best_d = math.inf
    for n in other:
        for m in main:
            d = float(np.linalg.norm(graph.nodes[n] - graph.nodes[m]))
            if d < best_d:
                best_d, best = d, (n, m)
    n, m = best
    graph.add_edge(n, m)
    if not env.segment_free(graph.nodes[n], graph.nodes[m]):
        add_detour(env, graph, n, m, cfg)
    return len(graph.components()) < len(comps)


def refine(env: Environment, graph: NavGraph, endpoints=(),
           cfg: RefineConfig | None = None) -> NavGraph:
    """Full repair loop: adjust -> detour -> merge (+ bridging), then fitting.

    Returns a new graph satisfying the navigable-state invariants or raises
    :class:`RefinementDiverged` listing the offenders.
    """
    cfg = cfg or RefineConfig()
    g = graph.copy()
    for it in range(cfg.max_iterations):
        targets = set(invalid_nodes(env, g))
        if it > 0:
            # later passes may also re-seat endpoints of stubborn edges
            # (adjust_node's precondition covers both cases)
            for e in invalid_edges(env, g):
                targets.update(e)
        for n in sorted(targets):
            if n in g.nodes:
                adjust_node(env, g, n, cfg)
        for e in invalid_edges(env, g):
            # endpoints may still be blocked (no free ring candidate yet);
            # leave those edges for the next pass
            if e in g.edges and node_valid(env, g, e[0]) and node_valid(env, g, e[1]):
                add_detour(env, g, e[0], e[1], cfg)
        merge_nodes(env, g, cfg)
        while _bridge_components(env, g, cfg):
            pass
        if is_navigable(env, g, cfg):
            break
    bad_n, bad_e, short, n_comp = navigable_violations(env, g, cfg)
    if bad_n or bad_e or short or n_comp > 1:
        raise RefinementDiverged(
            f"not navigable after {cfg.max_iterations} iterations "
            f"({len(bad_n)} bad nodes, {len(bad_e)} bad edges, "
            f"{len(short)} short edges, {n_comp} components)",
            bad_nodes=bad_n, bad_edges=bad_e + short)
    if len(endpoints):
        fit_endpoints(env, g, endpoints, cfg)
    return g


# ------------------------------------------------------------------- stats


def graph_stats(graph: NavGraph) -> GraphStats:
    n = len(graph.nodes)
    e = len(graph.edges)
    lengths = [graph.edge_length(edge) for edge in graph.edges]
    deg_hist: dict[int, int] = {}
    for node in graph.nodes:
        d = graph.degree(node)
        deg_hist[d] = deg_hist.get(d, 0) + 1
    len_hist: dict[float, int] = {}
    for L in lengths:
        k = math.floor(L / 0.25) * 0.25
        len_hist[k] = len_hist.get(k, 0) + 1
    return GraphStats(
        node_count=n,
        edge_count=e,
        mean_degree=(2.0 * e / n) if n else 0.0,
        mean_edge_length=float(np.mean(lengths)) if lengths else 0.0,
        degree_histogram=deg_hist,
        edge_length_histogram=len_hist,
    )
