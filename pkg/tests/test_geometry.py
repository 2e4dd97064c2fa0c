import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, Polygon

from sapcr.errors import NumericError, ParameterError
from sapcr.geometry import (PUBLISHED_AXIS_FIT, BlockageModel, Region,
                            axis_length_from_blockage_factor, avg_los_distance, beam_covers,
                            common_interfering_prob, drop_covering_blockages,
                            in_joint_unblocked_ellipse, interior_angle, is_blocked,
                            link_blocked_matrix, points_in_blockages, safe_arccos,
                            sample_blockages, sample_deployment, sample_ppp, segments_blocked)


def _polygon(rect):
    cx, cy, ln, wd, az = rect
    c, s = math.cos(az), math.sin(az)
    corners = [(-ln / 2, -wd / 2), (ln / 2, -wd / 2), (ln / 2, wd / 2), (-ln / 2, wd / 2)]
    return Polygon([(cx + u * c - v * s, cy + u * s + v * c) for u, v in corners])


def test_region_validation_and_area():
    r = Region(10.0, 5.0)
    assert r.area == 400.0
    assert r.outer_area == 900.0
    assert r.inside([[0, 0], [11, 0]]).tolist() == [True, False]
    with pytest.raises(ParameterError):
        Region(0.0)
    with pytest.raises(ParameterError):
        Region(1.0, -1.0)


def test_ppp_count_matches_density():
    region = Region(50.0, 10.0)
    counts = [len(sample_ppp(0.01, region, s)) for s in range(200)]
    assert abs(np.mean(counts) - 0.01 * region.outer_area) < 3 * math.sqrt(144 / 200)


def test_ppp_is_reproducible():
    a = sample_ppp(0.01, Region(30.0), 4)
    b = sample_ppp(0.01, Region(30.0), 4)
    assert np.array_equal(a, b)


def test_safe_arccos_clamps_only_roundoff():
    assert safe_arccos(1.0 + 1e-13) == 0.0
    with pytest.raises(NumericError):
        safe_arccos(1.0 + 1e-6)


@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(-math.pi, math.pi))
def test_interior_angle_matches_law_of_cosines(R, d, nu):
    tx, rx = np.zeros(2), np.array([d, 0.0])
    p = R * np.array([math.cos(nu), math.sin(nu)])
    a, b = tx - p, rx - p
    if np.linalg.norm(b) < 1e-6:
        return
    cosang = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    ref = math.acos(max(-1.0, min(1.0, cosang)))
    assert interior_angle(nu, R, d) == pytest.approx(ref, abs=1e-6)


def test_common_interfering_prob_limits():
    nu = np.linspace(0, math.pi, 50)
    assert np.allclose(common_interfering_prob(nu, 10.0, 2.0, 2 * math.pi), 1.0)
    narrow = common_interfering_prob(nu, 10.0, 2.0, math.pi / 18)
    wide = common_interfering_prob(nu, 10.0, 2.0, math.pi / 6)
    assert np.all(narrow <= wide + 1e-15)
    assert np.all((narrow >= 0) & (narrow <= 1))


def test_common_interfering_prob_by_simulation():
    rng = np.random.default_rng(0)
    R, d, w, nu = 6.0, 3.0, math.pi / 4, 2.0
    p = R * np.array([math.cos(nu), math.sin(nu)])
    # beams that cover the TX: azimuth uniform in the sector around the TX direction
    to_tx = math.atan2(-p[1], -p[0])
    az = to_tx + rng.uniform(-w / 2, w / 2, 400_000)
    hit = beam_covers(p, az, np.array([d, 0.0]), w)
    assert hit.mean() == pytest.approx(common_interfering_prob(nu, R, d, w), abs=4e-3)


def test_los_distance_and_published_fit():
    b = BlockageModel.from_xi(0.04, 15.0, 10.0)
    assert b.xi == pytest.approx(0.04)
    expected = math.pi * math.sqrt(2 * math.exp(-b.lambda_b * 150)) / (2 * 0.04)
    assert avg_los_distance(b) == pytest.approx(expected)
    assert avg_los_distance(BlockageModel(0.0, 1, 1)) == math.inf
    assert axis_length_from_blockage_factor(0.0).value == PUBLISHED_AXIS_FIT[-1]
    assert axis_length_from_blockage_factor(0.04).value == pytest.approx(90.54784)
    with pytest.warns(UserWarning):
        assert not axis_length_from_blockage_factor(0.2).in_fit_range


def test_ellipse_membership():
    assert in_joint_unblocked_ellipse([1.0, 0.0], [0, 0], [2, 0], 4.0)
    assert not in_joint_unblocked_ellipse([5.0, 0.0], [0, 0], [2, 0], 4.0)
    with pytest.raises(ParameterError):
        in_joint_unblocked_ellipse([0, 0], [0, 0], [5, 0], 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_segment_blocking_against_shapely(seed):
    rng = np.random.default_rng(seed)
    rects = sample_blockages(BlockageModel(0.004, 15.0, 10.0), Region(60.0), rng)
    p = rng.uniform(-60, 60, (40, 2))
    q = rng.uniform(-60, 60, (40, 2))
    polys = [_polygon(r) for r in rects]
    ref = np.array([any(LineString([a, b]).intersects(poly) for poly in polys)
                    for a, b in zip(p, q)])
    assert np.array_equal(segments_blocked(p, q, rects), ref)
    assert np.array_equal(segments_blocked(p, q, rects, cell=20.0), ref)
    mat = link_blocked_matrix(p, q, rects)
    assert np.array_equal(np.diag(mat), ref)
    assert is_blocked(p[0], q[0], rects) == ref[0]


def test_points_in_blockages_against_shapely():
    rng = np.random.default_rng(3)
    rects = sample_blockages(BlockageModel(0.003, 15.0, 10.0), Region(50.0), rng)
    pts = rng.uniform(-50, 50, (500, 2))
    from shapely.geometry import Point
    ref = np.array([any(_polygon(r).covers(Point(x)) for r in rects) for x in pts])
    assert np.array_equal(points_in_blockages(pts, rects), ref)
    kept = drop_covering_blockages(rects, pts[ref][:3])
    assert not points_in_blockages(pts[ref][:3], kept).any()


def test_deployment_keeps_nodes_outside_blockages():
    dep = sample_deployment(Region(80.0, 20.0), 1e-3, 5e-3, 3.0, 11,
                            BlockageModel(0.002, 15.0, 10.0))
    assert not points_in_blockages(dep.primary_txs, dep.blockages).any()
    assert not points_in_blockages(dep.secondary_txs, dep.blockages).any()
    assert np.allclose(np.hypot(*(dep.secondary_rxs - dep.secondary_txs).T), 3.0)
    with pytest.raises(ValueError):
        dep.primary_txs[0, 0] = 1.0
