import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accrisk.errors import EmptyIndex, InvalidRadius, OutOfGrid
from accrisk.geo import (METERS_PER_DEGREE, GeoPoint, GridSpec, SpatialIndex, cell_of,
                         haversine_array, haversine_distance, nearest, within_radius)
from oracles import chord_distance, law_of_cosines

lats = st.floats(-85, 85, allow_nan=False)
lngs = st.floats(-179.9, 179.9, allow_nan=False)


def test_identity_distance_is_zero():
    p = GeoPoint(33.75, -84.39)
    assert haversine_distance(p, p) == 0.0


def test_antipodal_half_circumference():
    d = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 180))
    assert d == pytest.approx(math.pi * 6_371_000, abs=1e-6)
    assert round(d) == 20_015_087


def test_one_degree_on_equator_matches_law_of_cosines():
    d = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 1))
    assert abs(d - law_of_cosines(0, 0, 0, 1)) < 0.5
    assert round(d) == 111_195


@settings(max_examples=200, deadline=None)
@given(lats, lngs, lats, lngs)
def test_haversine_matches_chord_oracle(a, b, c, d):
    ours = haversine_distance(GeoPoint(a, b), GeoPoint(c, d))
    assert ours == pytest.approx(chord_distance(a, b, c, d), abs=1e-3)
    assert ours == pytest.approx(haversine_distance(GeoPoint(c, d), GeoPoint(a, b)), abs=1e-6)


def test_haversine_array_agrees_with_scalar():
    rng = np.random.default_rng(1)
    la, ln = rng.uniform(-60, 60, 50), rng.uniform(-170, 170, 50)
    arr = haversine_array(10.0, 20.0, la, ln)
    for k in range(50):
        assert arr[k] == pytest.approx(haversine_distance(GeoPoint(10, 20), GeoPoint(la[k], ln[k])),
                                       rel=1e-12, abs=1e-9)


def test_invalid_points_rejected():
    with pytest.raises(ValueError):
        GeoPoint(91, 0)
    with pytest.raises(ValueError):
        GeoPoint(0, 181)


# ---------------------------------------------------------------------------
# grid


@pytest.fixture
def grid():
    return GridSpec(GeoPoint(33.70, -84.45), 4, 5)


def test_anchor_is_origin(grid):
    c = cell_of(grid.anchor, grid)
    assert (c.row, c.col, c.region_index) == (0, 0, 0)


def test_exact_north_boundary_belongs_to_next_row(grid):
    c = cell_of(grid.anchor.offset(5000, 0), grid)
    assert (c.row, c.col) == (1, 0)


def test_projection_oracle(grid):
    # 7500 m east and 2500 m north using meters-per-degree at the anchor latitude
    lat = grid.anchor.lat + 2500 / METERS_PER_DEGREE
    lng = grid.anchor.lng + 7500 / (METERS_PER_DEGREE * math.cos(math.radians(grid.anchor.lat)))
    c = cell_of(GeoPoint(lat, lng), grid)
    assert (c.row, c.col) == (0, 1)
    assert c.region_index == 1


def test_outside_grid_raises(grid):
    with pytest.raises(OutOfGrid):
        cell_of(grid.anchor.offset(-1, 0), grid)
    with pytest.raises(OutOfGrid):
        cell_of(grid.anchor.offset(0, 5 * 5000 + 1), grid)


def test_cell_indices_marks_off_grid(grid):
    rows, cols = grid.cell_indices([grid.anchor.lat, 0.0], [grid.anchor.lng, 0.0])
    assert rows.tolist() == [0, -1] and cols.tolist() == [0, -1]


def test_center_maps_back_to_cell(grid):
    for r in range(grid.rows):
        for c in range(grid.cols):
            cell = cell_of(grid.center(r, c), grid)
            assert (cell.row, cell.col) == (r, c)


def test_covering_grid_holds_every_point():
    rng = np.random.default_rng(3)
    pts = [GeoPoint(40 + a, -83 + b) for a, b in rng.uniform(0, 0.3, (100, 2))]
    g = GridSpec.covering(pts)
    rows, cols = g.cell_indices([p.lat for p in pts], [p.lng for p in pts])
    assert (rows >= 0).all() and (cols >= 0).all()


# ---------------------------------------------------------------------------
# spatial index


def _random_points(n, seed):
    rng = np.random.default_rng(seed)
    return [GeoPoint(40 + a, -83 + b) for a, b in rng.uniform(0, 0.05, (n, 2))]


def test_single_item_nearest():
    idx = SpatialIndex([GeoPoint(1, 1)], ["only"])
    assert nearest(GeoPoint(5, 5), idx)[0] == "only"


def test_query_at_station_location():
    pts = [GeoPoint(40, -83), GeoPoint(40.1, -83.1), GeoPoint(39.9, -82.9)]
    idx = SpatialIndex(pts, ["A", "B", "C"])
    item, d = nearest(pts[1], idx)
    assert item == "B" and d == 0.0


def test_empty_index():
    with pytest.raises(EmptyIndex):
        nearest(GeoPoint(0, 0), SpatialIndex([]))


@pytest.mark.parametrize("seed", range(5))
def test_nearest_matches_exhaustive_scan(seed):
    pts = _random_points(100, seed)
    idx = SpatialIndex(pts, list(range(100)), bucket_m=300)
    rng = np.random.default_rng(seed + 100)
    for q in rng.uniform(-0.02, 0.07, (20, 2)):
        p = GeoPoint(40 + q[0], -83 + q[1])
        d = [haversine_distance(p, x) for x in pts]
        best = min(range(100), key=lambda k: (d[k], k))
        item, dist = nearest(p, idx)
        assert item == best and dist == pytest.approx(d[best])


def test_zero_radius_boundary():
    p = GeoPoint(10, 10)
    idx = SpatialIndex([p, GeoPoint(10.001, 10)], ["here", "there"])
    assert within_radius(p, idx, 0) == ["here"]
    assert within_radius(GeoPoint(10.0005, 10), idx, 0) == []


@pytest.mark.parametrize("seed", range(5))
def test_within_radius_matches_exhaustive_filter(seed):
    pts = _random_points(300, seed)
    idx = SpatialIndex(pts, bucket_m=200)
    for q in pts[:30]:
        expect = sorted((haversine_distance(q, x), k) for k, x in enumerate(pts)
                        if haversine_distance(q, x) <= 250)
        assert within_radius(q, idx, 250) == [k for _, k in expect]


def test_invalid_radius():
    idx = SpatialIndex([GeoPoint(0, 0)])
    for r in (-1, math.inf, math.nan):
        with pytest.raises(InvalidRadius):
            within_radius(GeoPoint(0, 0), idx, r)
