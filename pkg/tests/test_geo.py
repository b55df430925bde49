import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcsprivacy.geo import (
    EARTH_RADIUS_M,
    METERS_PER_DEG,
    GeoPoint,
    LocalFrame,
    chord_length,
    from_ecef,
    from_local,
    haversine,
    haversine_arrays,
    round_coords,
    round_half_away,
    to_ecef,
    to_local,
)

lat_s = st.floats(-89.0, 89.0)
lon_s = st.floats(-180.0, 180.0)


def test_geopoint_validation():
    with pytest.raises(ValueError):
        GeoPoint(91, 0)
    with pytest.raises(ValueError):
        GeoPoint(0, 181)
    with pytest.raises(ValueError):
        GeoPoint(float("nan"), 0)


@pytest.mark.parametrize("a,b,expected", [
    ((0, 0), (0, 0), 0.0),
    ((0, 0), (0, 1), 111194.9),
    # R*pi/2 with R = 6371008.8; 10007543 is the R = 6371000 value
    ((0, 0), (90, 0), 10007557.1),
])
def test_haversine_examples(a, b, expected):
    assert haversine(GeoPoint(*a), GeoPoint(*b)) == pytest.approx(expected, abs=0.5)


def test_haversine_arrays_matches_scalar():
    rng = np.random.default_rng(3)
    la1, la2 = rng.uniform(-80, 80, (2, 50))
    lo1, lo2 = rng.uniform(-179, 179, (2, 50))
    vec = haversine_arrays(la1, lo1, la2, lo2)
    ref = [haversine(GeoPoint(a, b), GeoPoint(c, d)) for a, b, c, d in zip(la1, lo1, la2, lo2)]
    assert np.allclose(vec, ref, rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(lat_s, lon_s, lat_s, lon_s, lat_s, lon_s)
def test_haversine_metric_properties(a1, o1, a2, o2, a3, o3):
    p, q, r = GeoPoint(a1, o1), GeoPoint(a2, o2), GeoPoint(a3, o3)
    assert haversine(p, q) == pytest.approx(haversine(q, p), abs=1e-6)
    assert haversine(p, r) <= haversine(p, q) + haversine(q, r) + 1e-6


@pytest.mark.parametrize("origin,p,east", [
    ((0, 0), (0, 0.001), 111.19),
    ((60, 0), (60, 0.001), 55.60),
])
def test_local_frame_examples(origin, p, east):
    x, y = to_local(GeoPoint(*p), LocalFrame.at(GeoPoint(*origin)))
    assert x == pytest.approx(east, abs=0.01)
    assert y == pytest.approx(0.0, abs=1e-9)


def test_local_frame_origin_maps_to_zero():
    frame = LocalFrame.at(GeoPoint(35, 139))
    assert to_local(GeoPoint(35, 139), frame) == (0.0, 0.0)


def test_local_frame_rejects_pole():
    with pytest.raises(ValueError):
        LocalFrame.at(GeoPoint(89.5, 0))


@settings(max_examples=100, deadline=None)
@given(st.floats(-80, 80), lon_s, st.floats(-5000, 5000), st.floats(-5000, 5000))
def test_local_round_trip_and_distortion(lat, lon, dx, dy):
    frame = LocalFrame.at(GeoPoint(lat, lon))
    p = from_local(dx, dy, frame)
    x, y = to_local(p, frame)
    assert x == pytest.approx(dx, abs=1e-6)
    assert y == pytest.approx(dy, abs=1e-6)
    planar = math.hypot(dx, dy)
    if planar > 1.0 and abs(p.lon - lon) < 180:
        assert abs(haversine(frame.origin, p) - planar) <= 0.01 * planar


@pytest.mark.parametrize("p,expected", [
    ((0, 0), (EARTH_RADIUS_M, 0, 0)),
    ((90, 0), (0, 0, EARTH_RADIUS_M)),
    ((0, 90), (0, EARTH_RADIUS_M, 0)),
])
def test_ecef_examples(p, expected):
    e = to_ecef(GeoPoint(*p))
    assert (e.x, e.y, e.z) == pytest.approx(expected, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(lat_s, st.floats(-179.9, 179.9))
def test_ecef_round_trip(lat, lon):
    back = from_ecef(to_ecef(GeoPoint(lat, lon)))
    assert back.lat == pytest.approx(lat, abs=1e-9)
    assert back.lon == pytest.approx(lon, abs=1e-9)


def test_chord_length_matches_ecef_distance():
    a, b = GeoPoint(35, 139), GeoPoint(35.3, 139.4)
    ea, eb = to_ecef(a), to_ecef(b)
    straight = math.dist((ea.x, ea.y, ea.z), (eb.x, eb.y, eb.z))
    assert chord_length(haversine(a, b)) == pytest.approx(straight, rel=1e-9)


@pytest.mark.parametrize("p,decimals,expected", [
    ((35.123456, 139.654321), 2, (35.12, 139.65)),
    ((-0.005, 0.005), 2, (-0.01, 0.01)),
    ((35.123456, 139.654321), 4, (35.1235, 139.6543)),
    ((35.6895, 139.6917), 2, (35.69, 139.69)),
])
def test_round_coords_examples(p, decimals, expected):
    r = round_coords(GeoPoint(*p), decimals)
    assert (r.lat, r.lon) == expected


def test_round_half_away_from_zero():
    assert round_half_away(0.125, 2) == 0.13
    assert round_half_away(-0.125, 2) == -0.13
    assert round_half_away(2.5, 0) == 3.0


@settings(max_examples=200, deadline=None)
@given(lat_s, lon_s, st.integers(0, 6))
def test_rounding_idempotent_and_bounded(lat, lon, d):
    once = round_coords(GeoPoint(lat, lon), d)
    assert round_coords(once, d) == once
    assert abs(once.lat - lat) <= 0.5 * 10 ** -d + 1e-12
    assert abs(once.lon - lon) <= 0.5 * 10 ** -d + 1e-12


def test_local_frame_wraps_antimeridian():
    frame = LocalFrame.at(GeoPoint(0.0, 180.0))
    p = from_local(1000.0, 0.0, frame)
    assert p.lon == pytest.approx(-180.0 + 1000.0 / METERS_PER_DEG, abs=1e-9)
    x, _ = to_local(GeoPoint(0.0, -179.99), frame)
    assert x == pytest.approx(0.01 * METERS_PER_DEG, rel=1e-6)
