import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon, box

from harbordock.geometry import (
    ConvexRegion, EmptyRegion, Footprint, HarborMap, InvalidMap, PositionInsideObstacle,
    clip_polygon_halfplane, extract_convex_region, footprint_vertices, obstacle_overlap_area,
    point_in_polygon, region_contains, signed_area,
)
from harbordock.vessel import Pose

coords = st.floats(-20.0, 20.0, allow_nan=False)


def region_polygon(region, harbor):
    return Polygon(region.polygon(harbor.world_bounds))


def random_rect_map(rng, n_obstacles, bounds=(-50.0, 50.0, -50.0, 50.0)):
    polys = []
    for _ in range(n_obstacles):
        cn, ce = rng.uniform(-40, 40, size=2)
        hn, he = rng.uniform(1.0, 8.0, size=2)
        ang = rng.uniform(0, math.pi)
        c, s = math.cos(ang), math.sin(ang)
        corners = np.array([[hn, he], [-hn, he], [-hn, -he], [hn, -he]])
        polys.append(corners @ np.array([[c, s], [-s, c]]) + [cn, ce])
    return HarborMap.from_polygons(polys, bounds)


# --- footprint ----------------------------------------------------------------

def test_footprint_at_origin():
    v = footprint_vertices(Pose(0, 0, 0), Footprint.rectangle(5.0, 2.8))
    assert sorted(map(tuple, np.round(v, 12))) == sorted(
        [(2.5, 1.4), (2.5, -1.4), (-2.5, 1.4), (-2.5, -1.4)])


def test_footprint_translation():
    fp = Footprint.rectangle(5.0, 2.8)
    v0 = footprint_vertices(Pose(0, 0, 0), fp)
    v1 = footprint_vertices(Pose(10, -3, 0), fp)
    assert np.allclose(v1, v0 + [10, -3])


def test_footprint_quarter_turn():
    fp = Footprint(np.array([[2.5, 1.4], [-2.5, 1.4], [-2.5, -1.4], [2.5, -1.4]]))
    v = footprint_vertices(Pose(0, 0, math.pi / 2), fp)
    # body (2.5, 1.4) -> world (-1.4, 2.5) by hand rotation
    assert any(np.allclose(row, [-1.4, 2.5]) for row in v)


@given(coords, coords, st.floats(-10, 10))
def test_footprint_preserves_shape(n, e, psi):
    fp = Footprint.rectangle(5.0, 2.8)
    v = footprint_vertices(Pose(n, e, psi), fp)
    assert abs(signed_area(v)) == pytest.approx(14.0)
    assert np.allclose(v.mean(axis=0), [n, e])


def test_footprint_winding_normalized():
    fp = Footprint(np.array([[1, 1], [1, -1], [-1, -1], [-1, 1]], dtype=float))
    assert signed_area(fp.vertices) > 0


# --- polygon primitives ---------------------------------------------------------

@settings(max_examples=200)
@given(coords, coords)
def test_point_in_polygon_matches_shapely(px, py):
    poly = np.array([[0, 0], [10, 0], [10, 4], [6, 4], [6, 10], [0, 10]], dtype=float)
    shape = Polygon(poly)
    pt = Point(px, py)
    assume(shape.exterior.distance(pt) > 1e-9)
    assert point_in_polygon((px, py), poly) == shape.contains(pt)


def test_point_on_boundary_counts_inside():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert point_in_polygon((1.0, 0.5), sq)
    assert point_in_polygon((0.0, 0.0), sq)


@settings(max_examples=100)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2 * math.pi), st.floats(-4, 4))
def test_halfplane_clip_matches_shapely(cx, cy, ang, b):
    poly = np.array([[-2, -1], [3, -2], [4, 2], [0, 3], [-3, 1]], dtype=float) + [cx, cy]
    a = np.array([math.cos(ang), math.sin(ang)])
    clipped = clip_polygon_halfplane(poly, a, b)
    # halfplane as a large box in rotated coordinates
    big = 1e3
    t = np.array([-a[1], a[0]])
    hp = Polygon([b * a + big * t, b * a - big * t, (b - big) * a - big * t, (b - big) * a + big * t])
    expected = Polygon(poly).intersection(hp).area
    got = abs(signed_area(clipped)) if len(clipped) >= 3 else 0.0
    assert got == pytest.approx(expected, abs=1e-9)


# --- map validation -----------------------------------------------------------

def test_map_winding_normalized_on_load():
    cw = [[0, 0], [0, 1], [1, 1], [1, 0]]
    m = HarborMap.from_polygons([cw], (-5, 5, -5, 5))
    assert signed_area(m.obstacles[0]) > 0
    assert m.winding_fixes == 1


def test_map_rejects_self_intersecting():
    bowtie = [[0, 0], [1, 1], [1, 0], [0, 1]]
    with pytest.raises(InvalidMap):
        HarborMap.from_polygons([bowtie], (-5, 5, -5, 5))


def test_map_rejects_obstacle_outside_bounds():
    with pytest.raises(InvalidMap):
        HarborMap.from_polygons([[[0, 0], [9, 0], [9, 1]]], (-5, 5, -5, 5))


def test_map_round_trip(harbor):
    again = HarborMap.from_dict(harbor.to_dict())
    assert again.world_bounds == harbor.world_bounds
    assert all(np.array_equal(a, b) for a, b in zip(again.obstacles, harbor.obstacles))


# --- regions ------------------------------------------------------------------

def test_region_contains_examples():
    unit = ConvexRegion.box(-1, 1, -1, 1)
    assert region_contains(unit, (0, 0), 0.0)
    assert not region_contains(unit, (2, 0), 0.0)
    assert region_contains(unit, (1.05, 0), 0.1)


def test_region_rows_unit_norm():
    r = ConvexRegion(np.array([[3.0, 4.0], [0.0, -2.0]]), np.array([5.0, 2.0]))
    assert np.allclose(np.linalg.norm(r.A, axis=1), 1.0)
    assert np.allclose(r.b, [1.0, 1.0])


def test_empty_map_region_is_world_box():
    m = HarborMap.from_polygons([], (-10, 20, -5, 15))
    r = extract_convex_region(m, (0, 0))
    A, b = m.box_halfplanes()
    got = sorted(zip(map(tuple, r.A), r.b))
    want = sorted(zip(map(tuple, A.astype(float)), b.astype(float)))
    assert len(got) == 4
    for (ga, gb), (wa, wb) in zip(got, want):
        assert np.allclose(ga, wa) and gb == pytest.approx(wb)


def test_quay_wall_sampling_oracle():
    wall = [[10, -50], [20, -50], [20, 50], [10, 50]]
    m = HarborMap.from_polygons([wall], (-50, 50, -50, 50))
    r = extract_convex_region(m, (0, 0))
    assert r.contains((0, 0))
    rng = np.random.default_rng(7)
    pts = rng.uniform(-50, 50, size=(10_000, 2))
    inside_region = (pts @ r.A.T <= r.b).all(axis=1)
    in_wall = np.array([point_in_polygon(p, wall) for p in pts])
    assert not np.any(inside_region & in_wall)
    assert np.all(~inside_region[pts[:, 0] > 10.0 + 1e-6])


def test_seed_inside_obstacle_raises(harbor):
    with pytest.raises(PositionInsideObstacle):
        extract_convex_region(harbor, (0.0, 30.0))


def test_seed_outside_world_raises(harbor):
    with pytest.raises(EmptyRegion):
        extract_convex_region(harbor, (0.0, 100.0))


def test_harbor_region_at_start_and_dock(harbor):
    for seed in [(-15.0, -10.0), (15.0, 18.1), (32.0, 0.0), (-3.0, 16.0)]:
        r = extract_convex_region(harbor, seed)
        assert r.contains(seed)
        assert r.n_rows <= 8 + 4
        for obs in harbor.obstacles:
            assert region_polygon(r, harbor).intersection(Polygon(obs)).area <= 1e-9


def test_region_extraction_deterministic(harbor):
    a = extract_convex_region(harbor, (5.0, 5.0))
    b = extract_convex_region(harbor, (5.0, 5.0))
    assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 8))
def test_random_maps_region_obstacle_free(seed, n_obs, budget):
    rng = np.random.default_rng(seed)
    try:
        m = random_rect_map(rng, n_obs)
    except InvalidMap:
        assume(False)
    world = box(-50, -50, 50, 50)
    free = world
    for obs in m.obstacles:
        free = free.difference(Polygon(obs))
    pt = None
    for _ in range(50):
        cand = rng.uniform(-48, 48, size=2)
        if free.contains(Point(*cand)) and free.exterior.distance(Point(*cand)) > 0.05:
            pt = cand
            break
    assume(pt is not None)
    try:
        r = extract_convex_region(m, pt, edge_budget=budget)
    except PositionInsideObstacle:
        assume(False)
    assert r.contains(pt)
    assert np.allclose(np.linalg.norm(r.A, axis=1), 1.0)
    assert r.is_nonempty()
    poly = region_polygon(r, m)
    for obs in m.obstacles:
        # shapely oracle, cross-checked with the in-package convex clip
        assert poly.intersection(Polygon(obs)).area <= 1e-6
        assert obstacle_overlap_area(r, obs) <= 1e-6 or not _convex(obs)


def _convex(poly):
    p = np.asarray(poly)
    d = np.roll(p, -1, axis=0) - p
    cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
    return np.all(cross >= -1e-12)
