"""Tests for the bounded Čech filtration."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from morselab import cech
from morselab.cech import build_filtration, one_skeleton
from morselab.errors import LiftOutOfRange
from morselab.geometry import lift_simplex, min_enclosing_ball, torus_distance
from morselab.sampler import from_points, sample


def _cloud(points, r_max=0.125):
    return from_points(points, r_max=r_max)


class TestSmallComplexes:
    def test_edge_value_is_half_distance(self):
        cloud = _cloud([[0.1, 0.5], [0.4, 0.5]], r_max=0.2)
        filt = build_filtration(cloud, max_dim=1, r_max=0.2)
        assert len(filt) == 3
        assert filt.value_of((0, 1)) == pytest.approx(0.15)

    def test_edge_across_boundary(self):
        cloud = _cloud([[0.05, 0.5], [0.85, 0.5]], r_max=0.2)
        filt = build_filtration(cloud, r_max=0.2)
        assert filt.value_of((0, 1)) == pytest.approx(0.1)

    def test_single_vertex(self):
        filt = build_filtration(_cloud([[0.3, 0.3]]))
        assert [(s.vertices, s.value) for s in filt] == [((0,), 0.0)]

    def test_triangle_gated_by_enclosing_ball(self):
        side = 0.38
        pts = [[0.1, 0.1], [0.1 + side, 0.1], [0.1 + side / 2, 0.1 + side * math.sqrt(3) / 2]]
        filt = build_filtration(_cloud(pts, r_max=0.2), r_max=0.2)
        assert one_skeleton(filt, 0.2) == {(0, 1), (0, 2), (1, 2)}
        assert (0, 1, 2) not in filt.index

    def test_obtuse_triangle_enters_with_its_long_edge(self):
        pts = [[0.4, 0.5], [0.6, 0.5], [0.5, 0.52]]
        filt = build_filtration(_cloud(pts))
        assert filt.value_of((0, 1, 2)) == filt.value_of((0, 1))
        # Facets precede cofaces even at equal values.
        assert filt.index[(0, 1)] < filt.index[(0, 1, 2)]

    def test_large_cap_rejected(self):
        with pytest.raises(LiftOutOfRange):
            build_filtration(_cloud([[0.1, 0.1]], r_max=0.25), r_max=0.25)

    def test_max_dim_range(self):
        with pytest.raises(ValueError):
            build_filtration(_cloud([[0.1, 0.1]]), max_dim=4)


class TestFiltrationProperties:
    @pytest.fixture(scope="class")
    def filt_and_cloud(self):
        cloud = sample(120, 2, seed=21)
        return build_filtration(cloud), cloud

    def test_sorted_by_value(self, filt_and_cloud):
        filt, _ = filt_and_cloud
        assert np.all(np.diff(filt.values) >= 0)

    def test_faces_monotone(self, filt_and_cloud):
        filt, _ = filt_and_cloud
        for i, s in enumerate(filt):
            for j in filt.boundary(i):
                assert j < i
                assert filt[j].value <= s.value

    def test_values_bounded(self, filt_and_cloud):
        filt, _ = filt_and_cloud
        assert filt.values.max() <= 0.125
        assert filt.dims.max() <= 3

    def test_edges_match_pairwise_distances(self, filt_and_cloud):
        filt, cloud = filt_and_cloud
        pts = cloud.points
        expected = {
            (i, j)
            for i in range(len(pts))
            for j in range(i + 1, len(pts))
            if torus_distance(pts[i], pts[j]) / 2 <= 0.125
        }
        assert one_skeleton(filt, 0.125) == expected
        for i, j in expected:
            assert filt.value_of((i, j)) == pytest.approx(torus_distance(pts[i], pts[j]) / 2)

    def test_triangle_value_is_enclosing_radius(self, filt_and_cloud):
        filt, cloud = filt_and_cloud
        for s in filt:
            if s.dim != 2:
                continue
            ball = min_enclosing_ball(lift_simplex(cloud.points[list(s.vertices)]))
            assert s.value == pytest.approx(ball.radius, rel=1e-9)

    def test_prefix_views(self, filt_and_cloud):
        filt, cloud = filt_and_cloud
        assert all(s.dim == 0 for s in filt.complex_at(0.0))
        assert len(filt.complex_at(0.0)) == len(cloud)
        assert len(filt.complex_at(0.125)) == len(filt)


class TestBatchedConstruction:
    @pytest.fixture(scope="class", params=[2, 3])
    def filt_and_cloud(self, request):
        d = request.param
        cloud = sample(120 if d == 2 else 90, d, seed=31)
        return build_filtration(cloud), cloud

    def test_values_match_welzl(self, filt_and_cloud):
        filt, cloud = filt_and_cloud
        for i, s in enumerate(filt):
            if s.dim == 0:
                continue
            ball = min_enclosing_ball(lift_simplex(cloud.points[list(s.vertices)]))
            assert s.value == pytest.approx(ball.radius, rel=1e-9)
            assert bool(filt.full_support[i]) is (len(ball.support) == s.dim + 1)

    def test_balls_hold_their_vertices(self, filt_and_cloud):
        filt, cloud = filt_and_cloud
        for i, s in enumerate(filt):
            delta = cloud.points[list(s.vertices)] - filt.centers[i]
            dist = np.linalg.norm(delta - np.round(delta), axis=1)
            assert np.all(dist <= filt.radii[i] * (1 + 1e-9) + 1e-15)
            if filt.full_support[i]:
                np.testing.assert_allclose(dist, filt.radii[i], rtol=1e-9)

    def test_boundary_lists_facets(self, filt_and_cloud):
        filt, _ = filt_and_cloud
        for i, s in enumerate(filt):
            facets = [filt.simplex_vertices(j) for j in filt.boundary(i)]
            assert sorted(facets) == sorted(s.facets())

    def test_top_dimension_never_full_support(self, filt_and_cloud):
        filt, cloud = filt_and_cloud
        assert not np.any(filt.full_support[filt.dims == cloud.d + 1])
        assert np.all(filt.full_support[filt.dims <= 1])

    def test_chunking_does_not_change_result(self, filt_and_cloud, monkeypatch):
        filt, cloud = filt_and_cloud
        monkeypatch.setattr(cech, "CHUNK", 7)
        small = build_filtration(cloud)
        np.testing.assert_array_equal(small.vertices, filt.vertices)
        np.testing.assert_array_equal(small.values, filt.values)
        np.testing.assert_array_equal(small.facets, filt.facets)


def test_matches_brute_force_enumeration():
    rng = np.random.default_rng(44)
    pts = rng.random((25, 2))
    r_max = 0.125
    filt = build_filtration(_cloud(pts), r_max=r_max)
    expected = {(i,) for i in range(len(pts))}
    for size in (2, 3, 4):
        for combo in itertools.combinations(range(len(pts)), size):
            if any(torus_distance(pts[a], pts[b]) > 2 * r_max for a, b in itertools.combinations(combo, 2)):
                continue
            if min_enclosing_ball(lift_simplex(pts[list(combo)])).radius <= r_max:
                expected.add(combo)
    assert set(filt.index) == expected
