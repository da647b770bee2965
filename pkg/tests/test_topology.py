"""Map parsing, route enumeration, and spline geometry against analytic and
brute-force oracles."""

import json

import numpy as np
import pytest

from crossplan.fixtures import fixture_path
from conftest import minimal_map_dict

from crossplan.topology import (DanglingReference, DegeneratePolyline,
                                LaneGraph, ParseError, UnreachableExit,
                                build_path_set, enumerate_paths,
                                enumerate_routes, fit_spline,
                                overlap_coefficients, parse_map)


class TestParseMap:
    def test_minimal_single_lane(self, minimal_map_json):
        g = parse_map(minimal_map_json)
        assert len(g.lanes) == 1
        assert g.entrances == ["ab"]
        assert g.exits == ["ab"]

    def test_tjunction_fixture(self, tjunction_graph):
        g = tjunction_graph
        assert len(g.lanes) == 6
        assert len(g.entrances) == 3
        assert len(g.exits) == 3
        assert set(g.lanes["in_n"].successors) == {"out_e", "out_w"}

    def test_dangling_successor(self):
        m = minimal_map_dict()
        m["lanes"]["ab"]["successors"] = ["99"]
        with pytest.raises(DanglingReference):
            parse_map(json.dumps(m))

    def test_dangling_node(self):
        m = minimal_map_dict()
        m["lanes"]["ab"]["nodes"] = ["a", "zz"]
        with pytest.raises(DanglingReference):
            parse_map(json.dumps(m))

    def test_unknown_top_level_key_rejected(self):
        m = minimal_map_dict()
        m["extra"] = 1
        with pytest.raises(ParseError):
            parse_map(json.dumps(m))

    def test_unknown_lane_key_rejected(self):
        m = minimal_map_dict()
        m["lanes"]["ab"]["color"] = "red"
        with pytest.raises(ParseError):
            parse_map(json.dumps(m))

    def test_unreachable_exit(self):
        m = {
            "nodes": {"a": [0, 0], "b": [10, 0], "c": [0, 5], "d": [10, 5]},
            "lanes": {"ab": {"nodes": ["a", "b"], "successors": []},
                      "cd": {"nodes": ["c", "d"], "successors": []}},
            "entrances": ["ab"],
            "exits": ["cd"],
        }
        with pytest.raises(UnreachableExit):
            parse_map(json.dumps(m))

    def test_malformed_json(self):
        with pytest.raises(ParseError):
            parse_map(b"{nope")

    def test_short_polyline_rejected(self):
        m = minimal_map_dict()
        m["lanes"]["ab"]["nodes"] = ["a"]
        with pytest.raises(ParseError):
            parse_map(json.dumps(m))


def exhaustive_routes(graph: LaneGraph):
    """Independent DFS oracle for simple entrance-to-exit lane sequences."""
    found = set()
    exits = set(graph.exits)

    def dfs(seq):
        if seq[-1] in exits:
            found.add(tuple(seq))
        for succ in graph.lanes[seq[-1]].successors:
            if succ not in seq:
                dfs(seq + [succ])

    for ent in set(graph.entrances):
        dfs([ent])
    return found


class TestEnumeratePaths:
    def test_single_lane_single_path(self, minimal_map_json):
        polys = enumerate_paths(parse_map(minimal_map_json))
        assert len(polys) == 1

    def test_tjunction_route_count(self, tjunction_graph):
        routes = enumerate_routes(tjunction_graph)
        assert len(routes) == 6
        assert set(routes) == exhaustive_routes(tjunction_graph)

    def test_roundabout_matches_dfs_oracle(self):
        g = parse_map(fixture_path("roundabout_map.json").read_bytes())
        routes = enumerate_routes(g)
        oracle = exhaustive_routes(g)
        assert set(routes) == oracle
        # 4 entrances, each reaching all 4 exits without repeating a ring arc
        assert len(routes) == 16

    def test_cycle_terminates_without_lane_repeats(self):
        m = {
            "nodes": {"a": [0, 0], "b": [20, 0], "c": [20, 20], "d": [0, 20],
                      "x": [-20, 0], "y": [40, 20]},
            "lanes": {
                "enter": {"nodes": ["x", "a"], "successors": ["ab"]},
                "ab": {"nodes": ["a", "b"], "successors": ["bc"]},
                "bc": {"nodes": ["b", "c"], "successors": ["cd", "leave"]},
                "cd": {"nodes": ["c", "d"], "successors": ["da"]},
                "da": {"nodes": ["d", "a"], "successors": ["ab"]},
                "leave": {"nodes": ["c", "y"], "successors": []},
            },
            "entrances": ["enter"],
            "exits": ["leave"],
        }
        g = parse_map(json.dumps(m))
        routes = enumerate_routes(g)
        assert set(routes) == exhaustive_routes(g)
        for r in routes:
            assert len(set(r)) == len(r)

    def test_insertion_order_invariance(self):
        m = minimal_map_dict()
        m["nodes"].update({"c": [50, 50], "d": [0, 50]})
        m["lanes"]["ab"]["successors"] = ["bc"]
        m["lanes"]["bc"] = {"nodes": ["b", "c"], "successors": []}
        m["lanes"]["bd"] = {"nodes": ["b", "d"], "successors": []}
        m["lanes"]["ab"]["successors"] = ["bd", "bc"]
        m["exits"] = ["bc", "bd"]
        routes1 = enumerate_routes(parse_map(json.dumps(m)))
        m2 = dict(m)
        m2["lanes"] = dict(reversed(list(m["lanes"].items())))
        routes2 = enumerate_routes(parse_map(json.dumps(m2)))
        assert routes1 == routes2


class TestFitSpline:
    def test_collinear_points_exact(self):
        sp = fit_spline(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
        assert sp.length == pytest.approx(2.0, abs=1e-9)
        pos, heading, kappa = sp.eval(1.3)
        assert pos == pytest.approx([1.3, 0.0], abs=1e-9)
        assert heading == pytest.approx([1.0, 0.0], abs=1e-9)
        assert kappa == pytest.approx(0.0, abs=1e-9)

    def test_quarter_circle_length_and_curvature(self, circle_path):
        exact = 5.0 * np.pi
        assert abs(circle_path.length - exact) / exact < 1e-3
        ps = np.linspace(0.1 * circle_path.length, 0.9 * circle_path.length, 50)
        _, _, kappa = circle_path.eval(ps)
        assert np.abs(kappa - 0.1).max() / 0.1 < 0.02

    def test_two_point_polyline_is_straight_segment(self):
        sp = fit_spline(np.array([[1.0, 1.0], [4.0, 5.0]]))
        assert sp.length == pytest.approx(5.0, abs=1e-6)
        pos = sp.position(2.5)
        assert pos == pytest.approx([2.5, 3.0], abs=1e-6)

    def test_degenerate_polyline(self):
        with pytest.raises(DegeneratePolyline):
            fit_spline(np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_endpoints_interpolated(self, circle_path):
        assert circle_path.position(0.0) == pytest.approx([10.0, 0.0], abs=1e-6)
        assert circle_path.position(circle_path.length) == pytest.approx(
            [0.0, 10.0], abs=1e-6)

    def test_arc_length_parameterization_quality(self, circle_path):
        ps = np.linspace(0, circle_path.length, 500)
        pos, _, _ = circle_path.eval(ps)
        speed = np.linalg.norm(np.diff(pos, axis=0), axis=1) / np.diff(ps)
        assert speed.min() > 0.95
        assert speed.max() < 1.05

    def test_c2_continuity_at_knots(self, circle_path):
        sp = circle_path
        for p in sp.knots[1:-1]:
            left = sp.eval(p - 1e-6)
            right = sp.eval(p + 1e-6)
            assert np.abs(left[0] - right[0]).max() < 1e-5
            assert np.abs(left[1] - right[1]).max() < 1e-5
            assert abs(left[2] - right[2]) < 1e-3


class TestEvalPath:
    def test_straight_constant_heading(self, straight_path):
        ps = np.linspace(0, straight_path.length, 20)
        _, headings, kappas = straight_path.eval(ps)
        assert np.allclose(headings, [1.0, 0.0], atol=1e-9)
        assert np.allclose(kappas, 0.0, atol=1e-9)

    def test_circle_curvature(self, circle_path):
        assert circle_path.curvature(circle_path.length / 2) == pytest.approx(
            0.1, rel=0.02)

    def test_end_clamping(self, straight_path):
        assert straight_path.position(straight_path.length + 5.0) == \
            pytest.approx([200.0, 0.0], abs=1e-9)
        assert straight_path.position(-3.0) == pytest.approx([0.0, 0.0],
                                                             abs=1e-9)

    def test_heading_consistency_with_finite_difference(self, circle_path):
        h = 1e-4
        for p in np.linspace(1.0, circle_path.length - 1.0, 25):
            heading = circle_path.heading(p)
            delta = (circle_path.position(p + h) - circle_path.position(p)) / h
            delta /= np.linalg.norm(delta)
            assert heading @ delta > 1.0 - 1e-3


class TestProject:
    def test_point_on_path(self, straight_path):
        p, dist = straight_path.project((5.0, 0.0))
        assert p == pytest.approx(5.0, abs=1e-3)
        assert dist == pytest.approx(0.0, abs=1e-3)

    def test_perpendicular_foot(self, straight_path):
        p, dist = straight_path.project((5.0, 2.0))
        assert p == pytest.approx(5.0, abs=1e-3)
        assert dist == pytest.approx(2.0, abs=1e-3)

    def test_matches_dense_grid_oracle(self, circle_path):
        rng = np.random.default_rng(0)
        grid = np.arange(0.0, circle_path.length, 0.001)
        pos, _, _ = circle_path.eval(grid)
        for _ in range(200):
            q = rng.uniform([-2, -2], [14, 14])
            _, dist = circle_path.project(q)
            oracle = np.linalg.norm(pos - q, axis=1).min()
            assert dist <= oracle + 1e-3

    def test_round_trip_on_fixture_paths(self, roundabout_scenario):
        paths = roundabout_scenario.paths
        for sp in paths.paths[:4]:
            for p in np.arange(0.0, sp.length, 0.5):
                p2, dist = sp.project(sp.position(p))
                assert abs(p2 - p) <= 1e-3
                assert dist <= 1e-3


class TestOverlapCoefficients:
    def test_single_path(self, straight_path):
        q = overlap_coefficients([straight_path])
        assert q == pytest.approx([1.0])

    def test_identical_paths_halve(self):
        a = fit_spline(np.array([[0.0, 0.0], [20.0, 0.0]]), index=0)
        b = fit_spline(np.array([[0.0, 0.0], [20.0, 0.0]]), index=1)
        assert overlap_coefficients([a, b]) == pytest.approx([0.5, 0.5])

    def test_partial_overlap_bounds(self):
        a = fit_spline(np.array([[0.0, 0.0], [20.0, 0.0]]), index=0)
        b = fit_spline(np.array([[10.0, 0.0], [30.0, 0.0]]), index=1)
        q = overlap_coefficients([a, b])
        assert np.all(q > 1 / 2)
        assert np.all(q < 1.0)

    def test_counts_match_brute_force(self, roundabout_scenario):
        paths = roundabout_scenario.paths.paths[:3]
        q = overlap_coefficients(paths, grid=1.0)
        for i, sp in enumerate(paths):
            ps = np.arange(0.0, sp.length, 1.0)
            ps = np.append(ps, sp.length)
            counts = []
            for p in ps:
                point = sp.position(p)
                counts.append(sum(
                    1 for other in paths if other.project(point)[1] <= 0.5))
            assert q[i] == pytest.approx(1.0 / np.mean(counts))

    def test_in_unit_interval(self, roundabout_scenario):
        q = roundabout_scenario.paths.q
        assert np.all(q > 0.0)
        assert np.all(q <= 1.0)


class TestBuildPathSet:
    def test_roundabout_pack_consistency(self, roundabout_scenario):
        paths = roundabout_scenario.paths
        assert len(paths) == 16
        assert len(paths.q) == 16
        for mu in range(len(paths)):
            sp = paths.paths[mu]
            p, dist = paths.project(mu, sp.position(10.0))
            assert p == pytest.approx(10.0, abs=1e-3)
            assert dist < 1e-3
