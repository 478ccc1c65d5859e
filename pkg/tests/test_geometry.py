"""Tests for torus metric, lifts, circumspheres and spherical volumes."""

from __future__ import annotations

import math

import numpy as np
import pytest

from morselab.errors import (
    AmbiguousBoundary,
    DegenerateConfiguration,
    FacetTie,
    LiftOutOfRange,
    ParameterOutOfRange,
)
from morselab.geometry import (
    SphericalVolumes,
    circumsphere,
    contains_center,
    local_lift,
    min_enclosing_ball,
    phi_and_nearest_face,
    simplex_volume,
    sphere_measure,
    torus_distance,
    unit_ball_volume,
    wrap,
)
from oracles import cayley_menger_volume


class TestTorusMetric:
    def test_wraps_across_boundary(self):
        assert torus_distance([0.05, 0.5], [0.95, 0.5]) == pytest.approx(0.1)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a, b = rng.random(3), rng.random(3)
            dist = torus_distance(a, b)
            assert dist == pytest.approx(torus_distance(b, a))
            assert dist <= math.sqrt(3) / 2 + 1e-12

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_triangle_inequality(self, d):
        rng = np.random.default_rng(40 + d)
        a, b, c = rng.random((3, 10_000, d))

        def dist(x, y):
            return np.linalg.norm(wrap(y - x), axis=1)

        ab, bc, ac = dist(a, b), dist(b, c), dist(a, c)
        assert np.all(ac <= ab + bc + 1e-12)
        np.testing.assert_allclose(ab, dist(b, a))
        assert np.all(ab <= math.sqrt(d) / 2 + 1e-12)

    def test_wrap_range(self):
        out = wrap(np.array([-0.75, -0.5, 0.25, 0.5, 0.9]))
        assert np.all(out > -0.5) and np.all(out <= 0.5)
        np.testing.assert_allclose(out, [0.25, 0.5, 0.25, 0.5, -0.1])


class TestLocalLift:
    def test_lift_shifts_to_anchor(self):
        lift = local_lift([0.0, 0.0], [[0.6, 0.0], [0.1, 0.95]])
        np.testing.assert_allclose(lift.points, [[-0.4, 0.0], [0.1, -0.05]])

    def test_far_point_rejected(self):
        with pytest.raises(LiftOutOfRange):
            local_lift([0.0, 0.0], [[0.45, 0.45]])

    def test_half_coordinate_rejected(self):
        with pytest.raises(LiftOutOfRange):
            local_lift([0.0], [[0.5]])


class TestCircumsphere:
    def test_right_triangle(self):
        cs = circumsphere([[0.0, 0.0], [0.2, 0.0], [0.0, 0.2]])
        np.testing.assert_allclose(cs.center, [0.1, 0.1])
        assert cs.radius == pytest.approx(math.sqrt(0.02))

    def test_equidistance(self):
        rng = np.random.default_rng(4)
        for k in range(1, 4):
            pts = rng.random((k + 1, 3))
            cs = circumsphere(pts)
            dists = np.linalg.norm(pts - cs.center, axis=1)
            assert np.max(np.abs(dists - cs.radius)) <= 1e-9 * cs.radius
            assert cs.barycentric.sum() == pytest.approx(1.0)

    def test_center_in_affine_hull(self):
        pts = np.array([[0.0, 0.0, 0.0], [0.3, 0.1, 0.0], [0.1, 0.2, 0.0]])
        assert circumsphere(pts).center[2] == pytest.approx(0.0, abs=1e-15)

    def test_collinear_is_degenerate(self):
        with pytest.raises(DegenerateConfiguration):
            circumsphere([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]])

    def test_too_many_points(self):
        with pytest.raises(DegenerateConfiguration):
            circumsphere([[0.0], [0.1], [0.3]])


class TestContainsCenter:
    def test_acute_and_obtuse(self):
        acute = circumsphere([[0.0, 0.0], [0.2, 0.0], [0.1, 0.15]])
        obtuse = circumsphere([[0.0, 0.0], [0.2, 0.0], [0.1, 0.02]])
        assert contains_center(acute)
        assert not contains_center(obtuse)

    def test_right_angle_is_ambiguous(self):
        right = circumsphere([[0.0, 0.0], [0.2, 0.0], [0.0, 0.2]])
        with pytest.raises(AmbiguousBoundary):
            contains_center(right)

    def test_classification_is_scale_free(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            tri = rng.random((3, 2))
            expected = contains_center(circumsphere(tri))
            for scale in (1e-6, 1e-3, 10.0):
                assert contains_center(circumsphere(tri * scale)) is expected

    def test_tiny_right_angle_is_ambiguous(self):
        with pytest.raises(AmbiguousBoundary):
            contains_center(circumsphere([[0.0, 0.0], [2e-7, 0.0], [0.0, 2e-7]]))

    def test_edge_always_contains_midpoint(self):
        assert contains_center(circumsphere([[0.0, 0.0], [0.3, 0.1]]))


class TestMinEnclosingBall:
    def test_obtuse_triangle_uses_long_edge(self):
        pts = np.array([[0.0, 0.0], [0.2, 0.0], [0.1, 0.02]])
        ball = min_enclosing_ball(pts)
        assert ball.radius == pytest.approx(0.1)
        assert ball.support == (0, 1)

    def test_acute_triangle_uses_circumsphere(self):
        pts = np.array([[0.0, 0.0], [0.2, 0.0], [0.1, 0.15]])
        ball = min_enclosing_ball(pts)
        assert ball.radius == pytest.approx(circumsphere(pts).radius)
        assert ball.support == (0, 1, 2)

    def test_contains_all_points(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            pts = rng.random((4, 3)) * 0.2
            ball = min_enclosing_ball(pts)
            assert np.all(np.linalg.norm(pts - ball.center, axis=1) <= ball.radius * (1 + 1e-9))


class TestVolumesAndPhi:
    def test_simplex_volume_matches_cayley_menger(self):
        rng = np.random.default_rng(2)
        for k in (1, 2, 3):
            pts = rng.random((k + 1, 3))
            assert simplex_volume(pts) == pytest.approx(cayley_menger_volume(pts), rel=1e-9)

    def test_vertex_volume_is_one(self):
        assert simplex_volume([[0.3, 0.3]]) == 1.0

    def test_edge_phi(self):
        pts = np.array([[0.0, 0.0], [0.2, 0.0]])
        assert phi_and_nearest_face(pts, circumsphere(pts)) == (1.0, 0)

    def test_triangle_nearest_facet_is_longest_edge(self):
        pts = np.array([[0.0, 0.0], [0.2, 0.0], [0.09, 0.12]])
        cs = circumsphere(pts)
        phi, opposite = phi_and_nearest_face(pts, cs)
        assert opposite == 2
        assert 0.0 < phi < 1.0
        assert phi == pytest.approx(abs(cs.center[1]) / cs.radius)

    def test_equilateral_ties(self):
        pts = np.array([[0.0, 0.0], [0.2, 0.0], [0.1, 0.1 * math.sqrt(3)]])
        with pytest.raises(FacetTie) as info:
            phi_and_nearest_face(pts, circumsphere(pts))
        assert info.value.phi == pytest.approx(0.5)


class TestSphericalVolumes:
    def test_unit_ball_volumes(self):
        assert unit_ball_volume(0) == pytest.approx(1.0)
        assert unit_ball_volume(1) == pytest.approx(2.0)
        assert unit_ball_volume(2) == pytest.approx(math.pi)
        assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
        assert sphere_measure(1) == pytest.approx(2.0)
        assert sphere_measure(2) == pytest.approx(2 * math.pi)

    @pytest.mark.parametrize("d", [1, 2, 3, 4])
    def test_cap_endpoints(self, d):
        vols = SphericalVolumes(d)
        assert vols.cap_volume(0.0) == pytest.approx(vols.omega / 2, rel=1e-10)
        assert vols.cap_volume(1.0) == pytest.approx(0.0, abs=1e-14)
        assert vols.cap_volume(-1.0) == pytest.approx(vols.omega, rel=1e-10)

    def test_cap_in_plane(self):
        # Circular segment area: acos(h) - h sqrt(1-h^2)
        h = 0.3
        expected = math.acos(h) - h * math.sqrt(1 - h * h)
        assert SphericalVolumes(2).cap_volume(h) == pytest.approx(expected, rel=1e-10)

    def test_cap_taylor(self):
        vols = SphericalVolumes(3)
        delta = 1e-2
        assert vols.cap_taylor(delta) == pytest.approx(vols.cap_volume(delta), abs=1e-7)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_cap_taylor_exponent(self, d):
        vols = SphericalVolumes(d)
        c0, c1, _ = vols.taylor_coefficients
        deltas = np.array([1e-2, 1e-3])
        errors = np.array([abs(vols.cap_volume(x) - (c0 - c1 * x)) for x in deltas])
        slope = np.polyfit(np.log(deltas), np.log(errors), 1)[0]
        assert slope >= 2.9

    @pytest.mark.parametrize("d", [2, 3])
    def test_lens_and_union_by_monte_carlo(self, d):
        vols = SphericalVolumes(d)
        r, delta, count = 1.0, 0.7, 200_000
        lo = np.full(d, -r)
        hi = np.full(d, r)
        hi[0] += delta
        pts = np.random.default_rng(60 + d).uniform(lo, hi, size=(count, d))
        box = float(np.prod(hi - lo))
        in_a = np.linalg.norm(pts, axis=1) <= r
        in_b = np.linalg.norm(pts - np.eye(d)[0] * delta, axis=1) <= r
        lens = vols.lens_volume(r, r, delta)
        for hits, exact in ((in_a & in_b, lens), (in_a | in_b, 2 * vols.omega * r**d - lens)):
            p = float(hits.mean())
            sigma = box * math.sqrt(p * (1 - p) / count)
            assert abs(box * p - exact) <= 4 * sigma

    def test_cap_out_of_range(self):
        with pytest.raises(ParameterOutOfRange):
            SphericalVolumes(2).cap_volume(1.5)

    def test_lens_cases(self):
        vols = SphericalVolumes(2)
        assert vols.lens_volume(1.0, 1.0, 2.5) == 0.0
        assert vols.lens_volume(1.0, 0.5, 0.2) == pytest.approx(math.pi * 0.25)
        # Two unit disks at distance 1
        expected = 2 * math.pi / 3 - math.sqrt(3) / 2
        assert vols.lens_volume(1.0, 1.0, 1.0) == pytest.approx(expected, rel=1e-9)

    def test_diff_volume_nonnegative_and_small(self):
        vols = SphericalVolumes(2)
        value = vols.diff_volume(0.01, 0.5)
        assert 0.0 <= value < vols.omega

    def test_diff_volume_range(self):
        with pytest.raises(ParameterOutOfRange):
            SphericalVolumes(2).diff_volume(0.99, 0.1)


class TestWorkedValues:
    def test_distances(self):
        assert torus_distance([0.9, 0.1], [0.1, 0.1]) == pytest.approx(0.2)
        assert torus_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert torus_distance([0.25, 0.0], [0.75, 0.0]) == pytest.approx(0.5)

    def test_lift_offset(self):
        lift = local_lift([0.05, 0.05], [[0.95, 0.05], [0.05, 0.05]])
        np.testing.assert_allclose(lift.points, [[-0.1, 0.0], [0.0, 0.0]], atol=1e-15)

    def test_circumradii(self):
        seg = circumsphere([[0.0, 0.0], [0.2, 0.0]])
        np.testing.assert_allclose(seg.center, [0.1, 0.0])
        assert seg.radius == pytest.approx(0.1)
        equi = circumsphere([[0.0, 0.0], [0.2, 0.0], [0.1, 0.1 * math.sqrt(3)]])
        assert equi.radius == pytest.approx(0.2 / math.sqrt(3))
        assert circumsphere([[0.0, 0.0], [0.3, 0.0], [0.0, 0.4]]).radius == pytest.approx(0.25)

    def test_enclosing_balls(self):
        ball = min_enclosing_ball([[0.0, 0.0], [0.4, 0.0], [0.2, 0.05]])
        np.testing.assert_allclose(ball.center, [0.2, 0.0], atol=1e-15)
        assert ball.radius == pytest.approx(0.2)
        assert min_enclosing_ball([[0.3, 0.3]]).radius == 0.0

    def test_contains_center_equilateral(self):
        assert contains_center(circumsphere([[0.0, 0.0], [0.2, 0.0], [0.1, 0.1 * math.sqrt(3)]]))

    def test_volumes(self):
        assert simplex_volume([[0.0, 0.0], [1.0, 0.0]]) == pytest.approx(1.0)
        assert simplex_volume([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]) == pytest.approx(0.5)
        s = 1 / math.sqrt(2)
        tetra = [[s, 0, 0], [0, s, 0], [0, 0, s], [s, s, s]]
        assert simplex_volume(tetra) == pytest.approx(math.sqrt(2) / 12)

    def test_segment_phi_on_unit_sphere(self):
        pts = np.array([[-1.0], [1.0]])
        assert phi_and_nearest_face(pts, circumsphere(pts))[0] == 1.0

    def test_cap_and_lens_in_plane(self):
        vols = SphericalVolumes(2)
        assert vols.cap_volume(0.5) == pytest.approx(0.614185, abs=1e-6)
        assert vols.lens_volume(1.0, 1.0, 1.0) == pytest.approx(1.228370, abs=1e-6)
        assert vols.lens_volume(0.1, 0.1, 0.0) == pytest.approx(math.pi * 0.01)
        assert vols.lens_volume(1.0, 1.0, 2.0) == 0.0

    def test_diff_volume_linear_in_eps(self):
        vols = SphericalVolumes(2)
        assert vols.diff_volume(1e-4, 0.5) > 0.0
        coarse = vols.diff_volume(1e-3, 0.5) / 1e-3
        fine = vols.diff_volume(1e-4, 0.5) / 1e-4
        assert coarse == pytest.approx(fine, rel=0.01)
        assert 0.0 < fine < math.inf
