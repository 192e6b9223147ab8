import math

import numpy as np
import pytest

from waygraph.environment import Environment, generate_environment
from waygraph.errors import EndpointBlocked, OriginBlocked
from waygraph.geometry import polyline_length

from conftest import raster_dijkstra

R = 0.10  # default agent radius


class TestIsFree:
    def test_empty_center(self, empty_env):
        assert empty_env.is_free((5.0, 5.0))

    def test_inside_obstacle(self, square_env):
        assert not square_env.is_free((4.5, 4.5))

    def test_exact_clearance_threshold(self, square_env):
        # exact point-polygon distance for the unit square: distance from
        # (4.5, 5 + d) to the top edge is d
        eps = 1e-4
        assert not square_env.is_free((4.5, 5.0 + R - eps))
        assert square_env.is_free((4.5, 5.0 + R + eps))

    def test_bounds_erosion(self, empty_env):
        assert not empty_env.is_free((0.05, 5.0))
        assert empty_env.is_free((R + 0.01, 5.0))


class TestRaycast:
    def test_cap_in_empty_env(self, empty_env):
        for ang in np.linspace(0, 2 * math.pi, 17):
            assert empty_env.raycast((5, 5), ang, 3.25) == pytest.approx(3.25)

    def test_axis_aligned_wall(self, square_env):
        # wall face x=4 is 2 m ahead of (2, 4.5) at angle 0
        assert square_env.raycast((2, 4.5), 0.0, 10.0) == pytest.approx(2.0)

    def test_diagonal_corner_hit(self, square_env):
        # analytic ray-segment intersection: from 1 m away along the diagonal,
        # the ray at 45 degrees hits the (4,4) corner at exactly t=1
        o = np.array([4.0, 4.0]) - np.array([math.cos(math.pi / 4), math.sin(math.pi / 4)])
        t = square_env.raycast(o, math.pi / 4, 10.0)
        assert t == pytest.approx(1.0, abs=1e-9)

    def test_oblique_edge_hit(self, square_env):
        # ray from (3, 4.2) at angle atan2(0.5, 1.0) crosses the x=4 edge at
        # y = 4.2 + 0.5; closed-form t = 1.0 / cos(angle)
        ang = math.atan2(0.5, 1.0)
        t = square_env.raycast((3.0, 4.2), ang, 10.0)
        assert t == pytest.approx(1.0 / math.cos(ang), abs=1e-9)

    def test_blocked_origin(self, square_env):
        with pytest.raises(OriginBlocked):
            square_env.raycast((4.5, 4.5), 0.0, 3.25)

    def test_bounds_hit(self, empty_env):
        assert empty_env.raycast((5, 5), 0.0, 100.0) == pytest.approx(5.0)

    def test_stepback_point_outside_obstacles(self, square_env, rooms_env):
        # the point just short of the hit distance never lies inside an
        # obstacle; with the extra agent_radius + cell step-back it is free
        # except for grazing rays (checked via clearance, not assumed)
        rng = np.random.default_rng(0)
        for env in (square_env, rooms_env):
            for _ in range(200):
                p = env.sample_free_point(rng)
                ang = rng.uniform(0, 2 * math.pi)
                t = env.raycast(p, ang, 3.25)
                d = np.array([math.cos(ang), math.sin(ang)])
                back = p + (t - 1e-6) * d
                assert len(env.edges) == 0 or not env.edges.point_inside(back)
                q = p + max(0.0, t - env.agent_radius - env.cell_size) * d
                # free whenever the ray is not grazing a side wall
                if env.clearance(q) >= env.agent_radius:
                    assert env.is_free(q)


class TestSegmentFree:
    def test_degenerate_point(self, empty_env):
        assert empty_env.segment_free((5, 5), (5, 5))

    def test_crossing_obstacle(self, square_env):
        assert not square_env.segment_free((3, 4.5), (6, 4.5))

    def test_grazing_clearance(self, square_env):
        y_ok = 5.0 + R + 0.01
        y_bad = 5.0 + R - 0.01
        assert square_env.segment_free((3, y_ok), (6, y_ok))
        assert not square_env.segment_free((3, y_bad), (6, y_bad))

    def test_against_dense_sampling_oracle(self, square_env):
        # capsule test vs point sampling at 1 mm steps
        rng = np.random.default_rng(1)
        agree = 0
        for _ in range(100):
            a = rng.uniform(1, 9, 2)
            b = rng.uniform(1, 9, 2)
            n = max(2, int(np.linalg.norm(b - a) / 0.001))
            ts = np.linspace(0, 1, n)
            pts = a[None] + ts[:, None] * (b - a)[None]
            sampled_free = bool(np.all(square_env.clearance_many(pts) >= R))
            exact = square_env.segment_free(a, b)
            # sampling can only miss by under 1 mm of penetration depth
            if exact == sampled_free:
                agree += 1
            else:
                assert abs(square_env.edges.segment_dist(a, b) - R) < 2e-3
        assert agree >= 98

    def test_out_of_bounds(self, empty_env):
        assert not empty_env.segment_free((5, 5), (5, 9.99))


class TestGeodesic:
    def test_same_point(self, empty_env):
        assert empty_env.geodesic_distance((5, 5), (5, 5)) == 0.0

    def test_straight_line(self, empty_env):
        d = empty_env.geodesic_distance((4, 5), (6, 5))
        assert d == pytest.approx(2.0, abs=empty_env.cell_size)

    def test_blocked_endpoint(self, square_env):
        with pytest.raises(EndpointBlocked):
            square_env.geodesic_distance((4.5, 4.5), (1, 1))

    def test_matches_independent_dijkstra(self, u_env):
        a = np.array([5.0, 5.0])   # inside the U pocket
        b = np.array([5.0, 2.0])   # below the opening
        d = u_env.geodesic_distance(a, b)
        oracle = raster_dijkstra(u_env, u_env.snap_to_free_cell(b))
        assert d == pytest.approx(oracle[u_env.snap_to_free_cell(a)], abs=1e-9)
        assert d > 6.0  # forced around the U

    def test_lower_bound_and_empty_env_tightness(self, empty_env):
        rng = np.random.default_rng(2)
        diag = empty_env.cell_size * math.sqrt(2)
        for _ in range(50):
            a = rng.uniform(1, 9, 2)
            b = rng.uniform(1, 9, 2)
            d = empty_env.geodesic_distance(a, b)
            eu = float(np.linalg.norm(a - b))
            assert d >= eu - diag
            # 8-connectivity overhead is at most 1/cos(pi/8) ~ 8.2%
            assert d <= 1.09 * eu + diag

    def test_symmetry(self, u_env):
        rng = np.random.default_rng(3)
        diag = u_env.cell_size * math.sqrt(2)
        for _ in range(20):
            a = u_env.sample_free_point(rng)
            b = u_env.sample_free_point(rng)
            assert abs(u_env.geodesic_distance(a, b)
                       - u_env.geodesic_distance(b, a)) <= diag


class TestShortestPathFollower:
    def test_straight_corridor(self, empty_env):
        path = empty_env.shortest_path_follower((2, 5), (7, 5), step=0.25)
        assert np.allclose(path[0], (2, 5)) and np.allclose(path[-1], (7, 5))
        gaps = np.linalg.norm(np.diff(path, axis=0), axis=1)
        assert np.all(gaps <= 0.25 + 1e-9)
        # stays on the straight segment
        assert np.all(np.abs(path[:, 1] - 5.0) < empty_env.cell_size * 2)

    def test_same_point(self, empty_env):
        path = empty_env.shortest_path_follower((5, 5), (5, 5))
        assert len(path) == 1 and np.allclose(path[0], (5, 5))

    def test_detour_near_optimal(self, square_env):
        a, b = np.array([3.0, 4.5]), np.array([6.0, 4.5])
        path = square_env.shortest_path_follower(a, b, step=0.25)
        oracle = raster_dijkstra(square_env, square_env.snap_to_free_cell(a))
        opt = oracle[square_env.snap_to_free_cell(b)]
        assert polyline_length(path) <= 1.05 * opt + 2 * square_env.cell_size

    def test_output_contract(self, u_env):
        rng = np.random.default_rng(4)
        for _ in range(10):
            a = u_env.sample_free_point(rng)
            b = u_env.sample_free_point(rng)
            path = u_env.shortest_path_follower(a, b, step=0.5)
            for p in path:
                assert u_env.is_free(p)
            for p, q in zip(path[:-1], path[1:]):
                assert u_env.segment_free(p, q)
            # string pulling may legally undercut the raster distance by the
            # 8-connectivity overhead factor, never more
            d = u_env.geodesic_distance(a, b)
            assert polyline_length(path) >= d / 1.0824 - 4 * u_env.cell_size


class TestGeneration:
    def test_deterministic(self):
        e1 = generate_environment(11, "clutter")
        e2 = generate_environment(11, "clutter")
        assert len(e1.obstacles) == len(e2.obstacles)
        for p, q in zip(e1.obstacles, e2.obstacles):
            assert np.array_equal(p, q)

    @pytest.mark.parametrize("profile", ["rooms", "corridors", "clutter"])
    def test_single_component(self, profile):
        from scipy import ndimage

        env = generate_environment(5, profile)
        _, n = ndimage.label(env.free_raster)
        assert n == 1

    def test_random_pairs_connected(self, rooms_env):
        rng = np.random.default_rng(5)
        pts = [rooms_env.sample_free_point(rng) for _ in range(80)]
        field = rooms_env.geodesic_field(pts[0])
        for p in pts[1:]:
            assert math.isfinite(field.at(p))


class TestEnvironmentIO:
    def test_json_roundtrip(self, square_env, tmp_path):
        path = tmp_path / "env.json"
        square_env.save(path)
        loaded = Environment.load(path)
        assert loaded.bounds.as_tuple() == square_env.bounds.as_tuple()
        assert loaded.cell_size == square_env.cell_size
        assert loaded.agent_radius == square_env.agent_radius
        assert len(loaded.obstacles) == 1
        assert np.allclose(loaded.obstacles[0], square_env.obstacles[0])

    def test_obstacle_outside_bounds_rejected(self):
        with pytest.raises(ValueError):
            Environment((0, 0, 5, 5), [[[4, 4], [6, 4], [6, 6], [4, 6]]])
