import math

import numpy as np
import pytest

from waygraph.environment import Environment, generate_environment
from waygraph.errors import CandidateBlocked, UnreachableEndpoint
from waygraph import navgraph as ng


@pytest.fixture(scope="module")
def clutter_env():
    return generate_environment(11, "clutter")


def grid_graph(spacing=1.0, n=4, offset=2.0):
    g = ng.NavGraph()
    ids = {}
    for i in range(n):
        for j in range(n):
            ids[(i, j)] = g.new_node((offset + i * spacing, offset + j * spacing))
    for i in range(n):
        for j in range(n):
            if i + 1 < n:
                g.add_edge(ids[(i, j)], ids[(i + 1, j)])
            if j + 1 < n:
                g.add_edge(ids[(i, j)], ids[(i, j + 1)])
    return g, ids


class TestSeedGraph:
    def test_deterministic(self, clutter_env):
        g1 = ng.seed_graph(clutter_env, 3, 1.4)
        g2 = ng.seed_graph(clutter_env, 3, 1.4)
        assert g1.to_dict() == g2.to_dict()

    def test_empty_env_all_valid(self, empty_env):
        g = ng.seed_graph(empty_env, 0, 1.5)
        assert not ng.invalid_nodes(empty_env, g)
        assert not ng.invalid_edges(empty_env, g)

    def test_cluttered_envs_have_invalid_parts(self, clutter_env):
        dirty = 0
        for seed in range(100):
            g = ng.seed_graph(clutter_env, seed, 1.5)
            if ng.invalid_nodes(clutter_env, g) or ng.invalid_edges(clutter_env, g):
                dirty += 1
        assert dirty >= 95

    def test_edge_truncation(self, empty_env):
        g = ng.seed_graph(empty_env, 1, 1.5)
        for e in g.edges:
            assert g.edge_length(e) <= 3.0 + 1e-9


class TestScoreCandidate:
    def test_identity_candidate_terms(self, empty_env):
        g, ids = grid_graph()
        n = ids[(1, 1)]
        # candidate = current valid position: straightness 1, node-count 1
        s = ng.score_candidate(empty_env, g, n, g.nodes[n])
        clear = min(empty_env.clearance(g.nodes[n]) / 0.35, 1.0)
        assert s == pytest.approx(clear + 1.0 + 1.0, abs=1e-9)

    def test_clearance_monotonicity(self, square_env):
        g = ng.NavGraph()
        n = g.new_node((2.0, 4.5))
        near_wall = ng.score_candidate(square_env, g, n, (3.8, 4.5))   # 0.10 clearance
        open_space = ng.score_candidate(square_env, g, n, (2.0, 2.0))  # >0.35 clearance
        assert open_space > near_wall

    def test_blocked_candidate(self, square_env):
        g = ng.NavGraph()
        n = g.new_node((2.0, 4.5))
        with pytest.raises(CandidateBlocked):
            ng.score_candidate(square_env, g, n, (4.5, 4.5))

    def test_argmax_matches_bruteforce(self, square_env):
        # doorway-ish scene: node with neighbors on both sides of the square
        g = ng.NavGraph()
        mid = g.new_node((3.85, 4.5))   # hugs the obstacle wall
        left = g.new_node((2.5, 4.5))
        top = g.new_node((4.5, 6.0))
        g.add_edge(mid, left)
        g.add_edge(mid, top)
        cfg = ng.RefineConfig()
        cands = ng.ring_candidates(g.nodes[mid], cfg)
        free = [p for p in cands if square_env.is_free(p)]
        # independent brute-force rescoring of the documented formula
        def brute(p):
            clear = min(max(square_env.clearance(p) / 0.35, 0), 1)
            extra, orig, new = 0, 0.0, 0.0
            for nb in (left, top):
                q = g.nodes[nb]
                if square_env.segment_free(p, q):
                    plen = float(np.linalg.norm(np.asarray(p) - q))
                else:
                    plen = square_env.geodesic_distance(p, q)
                    if not math.isfinite(plen):
                        continue
                    extra += max(0, math.ceil(plen / 1.5) - 1)
                orig += g.edge_length(tuple(sorted((mid, nb))))
                new += plen
            straight = orig / new if new else 1.0
            return clear + 1.0 / (1 + extra) + straight
        brute_scores = np.array([brute(p) for p in free])
        lib_scores = np.array([ng.score_candidate(square_env, g, mid, p, cfg)
                               for p in free])
        assert int(np.argmax(brute_scores)) == int(np.argmax(lib_scores))
        assert np.allclose(brute_scores, lib_scores, atol=1e-6)


class TestAdjustNode:
    def test_blocked_node_moves_free(self, square_env):
        g = ng.NavGraph()
        bad = g.new_node((4.05, 4.5))   # just inside the square
        nb = g.new_node((2.5, 4.5))
        g.add_edge(bad, nb)
        ng.adjust_node(square_env, g, bad)
        assert square_env.is_free(g.nodes[bad])

    def test_deep_inside_obstacle_deleted(self):
        env = Environment((0, 0, 10, 10), [[[3, 3], [7, 3], [7, 7], [3, 7]]])
        g = ng.NavGraph()
        deep = g.new_node((5.0, 5.0))   # >0.35 m from any free space
        a = g.new_node((2.0, 2.0))
        b = g.new_node((2.0, 8.0))
        g.add_edge(deep, a)
        g.add_edge(deep, b)
        ng.adjust_node(env, g, deep)
        assert deep not in g.nodes

    def test_picks_brute_force_best(self, square_env):
        g = ng.NavGraph()
        n = g.new_node((3.95, 4.5))
        nb = g.new_node((2.5, 4.5))
        g.add_edge(n, nb)
        cfg = ng.RefineConfig()
        cands = ng.ring_candidates(g.nodes[n], cfg)
        best, best_s = None, -np.inf
        for p in cands:
            if not square_env.is_free(p):
                continue
            s = ng.score_candidate(square_env, g, n, p, cfg)
            if s > best_s:
                best, best_s = p, s
        ng.adjust_node(square_env, g, n, cfg)
        assert np.allclose(g.nodes[n], best)


class TestAddDetour:
    def test_corner_clip(self, square_env):
        g = ng.NavGraph()
        a = g.new_node((3.5, 3.5))
        b = g.new_node((5.5, 5.5))   # diagonal through the square corner area
        g.add_edge(a, b)
        assert not ng.edge_valid(square_env, g, (a, b))
        ng.add_detour(square_env, g, a, b)
        assert (a, b) not in g.edges
        assert not ng.invalid_edges(square_env, g)
        added = len(g.nodes) - 2
        assert 1 <= added <= 3

    def test_disconnected_rooms(self):
        env = Environment((0, 0, 10, 10), [[[4.8, 0], [5.2, 0], [5.2, 10], [4.8, 10]]])
        g = ng.NavGraph()
        a = g.new_node((2, 5))
        b = g.new_node((8, 5))
        g.add_edge(a, b)
        ng.add_detour(env, g, a, b)
        assert g.edges == set()
        assert len(g.nodes) == 2

    def test_l_corridor_near_optimal(self, u_env):
        g = ng.NavGraph()
        a = g.new_node((5.0, 5.0))   # inside the U
        b = g.new_node((5.0, 2.0))   # below
        g.add_edge(a, b)
        ng.add_detour(u_env, g, a, b)
        # walk the chain a -> b and compare with the raster optimum
        path = [a]
        seen = {a}
        while path[-1] != b:
            nxt = [x for x in g.neighbors(path[-1]) if x not in seen]
            assert nxt, "chain broken"
            path.append(nxt[0])
            seen.add(nxt[0])
        chain_len = sum(g.edge_length((p, q)) for p, q in zip(path[:-1], path[1:]))
        opt = u_env.geodesic_distance(g.nodes[a], g.nodes[b])
        assert chain_len <= 1.10 * opt


class TestMergeNodes:
    def test_simple_pair(self, empty_env):
        g = ng.NavGraph()
        a = g.new_node((5.0, 5.0))
        b = g.new_node((5.0, 5.3))
        c = g.new_node((5.0, 7.0))
        d = g.new_node((3.0, 5.0))
        g.add_edge(a, c)
        g.add_edge(b, d)
        ng.merge_nodes(empty_env, g)
        assert len(g.nodes) == 3
        merged = [n for n in g.nodes if n not in (c, d)][0]
        assert np.allclose(g.nodes[merged], (5.0, 5.15))
        assert set(g.neighbors(merged)) == {c, d}

    def test_identity_when_far(self, empty_env):
        g, _ = grid_graph(spacing=1.0)
        before = g.to_dict()
        ng.merge_nodes(empty_env, g)
        assert g.to_dict() == before

    def test_chain_matches_greedy_simulation(self, empty_env):
        # independent greedy closest-pair simulation on plain coordinates
        pts = [np.array([2.0 + 0.3 * k, 5.0]) for k in range(4)]

        def greedy(points, thresh=0.5):
            points = [p.copy() for p in points]
            while len(points) >= 2:
                best, bd = None, np.inf
                for i in range(len(points)):
                    for j in range(i + 1, len(points)):
                        d = np.linalg.norm(points[i] - points[j])
                        if d < bd:
                            bd, best = d, (i, j)
                if bd >= thresh:
                    break
                i, j = best
                mid = (points[i] + points[j]) / 2
                points = [p for k, p in enumerate(points) if k not in (i, j)] + [mid]
            return points

        expect = greedy(pts)
        g = ng.NavGraph()
        for p in pts:
            g.new_node(p)
        ng.merge_nodes(empty_env, g)
        assert len(g.nodes) == len(expect)
        dists = [np.linalg.norm(p - q) for i, p in enumerate(g.positions())
                 for q in g.positions()[i + 1:]]
        assert all(d >= 0.5 for d in dists)


class TestFitEndpoints:
    def test_close_point_noop(self, empty_env):
        g, _ = grid_graph()
        before = g.to_dict()
        ng.fit_endpoints(empty_env, g, [np.array([2.3, 2.0])])
        assert g.to_dict() == before

    def test_far_point_direct_edge(self, empty_env):
        g, ids = grid_graph()
        n_before = len(g.nodes)
        ng.fit_endpoints(empty_env, g, [np.array([8.0, 2.0])])
        assert len(g.nodes) == n_before + 1
        new = max(g.nodes)
        assert np.allclose(g.nodes[new], (8.0, 2.0))
        assert len(g.neighbors(new)) >= 1

    def test_geodesic_vs_euclidean_discrimination(self):
        # partition wall: the point is 0.6 m from a node through the wall but
        # several meters around it
        env = Environment((0, 0, 10, 10),
                          [[[4.8, 2.0], [5.2, 2.0], [5.2, 8.0], [4.8, 8.0]]])
        g = ng.NavGraph()
        a = g.new_node((4.4, 5.0))
        b = g.new_node((4.4, 8.7))
        g.add_edge(a, b)
        point = np.array([5.6, 5.0])  # 0.6 m from node a euclidean, far geodesic
        assert np.linalg.norm(point - g.nodes[a]) < 0.8 * 1.6
        first_new = max(g.nodes) + 1
        ng.fit_endpoints(env, g, [point])
        assert np.allclose(g.nodes[first_new], point)

    def test_unreachable(self):
        env = Environment((0, 0, 10, 10), [[[4.6, 0], [5.4, 0], [5.4, 10], [4.6, 10]]])
        g = ng.NavGraph()
        g.new_node((2, 5))
        with pytest.raises(UnreachableEndpoint):
            ng.fit_endpoints(env, g, [np.array([8.0, 5.0])])


class TestRefine:
    def test_valid_graph_fixpoint(self, empty_env):
        g, _ = grid_graph(spacing=1.0)
        r = ng.refine(empty_env, g)
        assert r.to_dict()["nodes"] == g.to_dict()["nodes"]
        assert r.to_dict()["edges"] == g.to_dict()["edges"]

    def test_perturbed_node_only_changes_that_node(self):
        env = Environment((0, 0, 10, 10), [[[5.5, 5.5], [6.5, 5.5], [6.5, 6.5], [5.5, 6.5]]])
        g, ids = grid_graph(spacing=1.2, n=3, offset=1.4)
        victim = ids[(2, 2)]
        g.nodes[victim] = np.array([5.6, 5.6])  # pushed just inside the box
        r = ng.refine(env, g)
        moved = [n for n in g.nodes if n in r.nodes
                 and not np.allclose(g.nodes[n], r.nodes[n])]
        assert moved == [victim]
        assert env.is_free(r.nodes[victim])

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_seeded_graphs_refine_navigable(self, seed):
        env = generate_environment(seed, ["rooms", "corridors", "clutter"][seed % 3])
        r = ng.refine(env, ng.seed_graph(env, seed, 1.4))
        bad_n, bad_e, short, n_comp = ng.navigable_violations(env, r)
        assert not bad_n and not bad_e and not short and n_comp == 1
        for e in r.edges:
            assert r.edge_length(e) >= 0.5 - 1e-9

    def test_idempotent(self, clutter_env):
        r1 = ng.refine(clutter_env, ng.seed_graph(clutter_env, 5, 1.4))
        r2 = ng.refine(clutter_env, r1)
        p1 = sorted(map(tuple, np.round(r1.positions(), 9).tolist()))
        p2 = sorted(map(tuple, np.round(r2.positions(), 9).tolist()))
        assert p1 == p2
        assert len(r1.edges) == len(r2.edges)

    def test_graph_paths_iff_geodesic(self, clutter_env):
        r = ng.refine(clutter_env, ng.seed_graph(clutter_env, 6, 1.4))
        # single free component + connected graph: every node pair reachable
        assert len(r.components()) == 1
        ids = r.node_ids()
        field = clutter_env.geodesic_field(r.nodes[ids[0]])
        for n in ids[1:]:
            assert math.isfinite(field.at(r.nodes[n]))

    def test_fit_endpoints_kept(self, clutter_env):
        rng = np.random.default_rng(0)
        eps = [clutter_env.sample_free_point(rng) for _ in range(4)]
        r = ng.refine(clutter_env, ng.seed_graph(clutter_env, 7, 1.4), endpoints=eps)
        cfg = ng.RefineConfig()
        for p in eps:
            field = clutter_env.geodesic_field(p)
            d = min(field.at(r.nodes[n]) for n in r.node_ids())
            assert d <= cfg.fit_dist + 1e-9


class TestGraphStats:
    def test_triangle(self):
        g = ng.NavGraph()
        a = g.new_node((0.0, 0.0))
        b = g.new_node((1.0, 0.0))
        c = g.new_node((0.5, math.sqrt(3) / 2))
        g.add_edge(a, b)
        g.add_edge(b, c)
        g.add_edge(a, c)
        s = ng.graph_stats(g)
        assert s.mean_degree == pytest.approx(2.0)
        assert s.mean_edge_length == pytest.approx(1.0)
        assert s.degree_histogram == {2: 3}

    def test_single_node(self):
        g = ng.NavGraph()
        g.new_node((1.0, 1.0))
        s = ng.graph_stats(g)
        assert s.mean_degree == 0.0
        assert s.mean_edge_length == 0.0
        assert s.edge_count == 0

    def test_refined_stats_in_band(self, clutter_env):
        r = ng.refine(clutter_env, ng.seed_graph(clutter_env, 8, 1.4))
        s = ng.graph_stats(r)
        assert 2.5 <= s.mean_degree <= 4.5
        assert 1.0 <= s.mean_edge_length <= 2.5
        assert sum(s.degree_histogram.values()) == s.node_count
        assert sum(s.edge_length_histogram.values()) == s.edge_count


class TestGraphIO:
    def test_json_roundtrip(self, clutter_env, tmp_path):
        g = ng.seed_graph(clutter_env, 9, 1.4)
        path = tmp_path / "graph.json"
        g.save(path, env_ref="env.json")
        loaded = ng.NavGraph.load(path)
        assert loaded.env_id == "env.json"
        assert loaded.to_dict()["nodes"] == g.to_dict()["nodes"]
        assert set(map(tuple, loaded.to_dict()["edges"])) == set(
            map(tuple, g.to_dict()["edges"]))
