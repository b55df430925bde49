import math

import numpy as np
import pytest

from conftest import make_trace
from mcsprivacy.geo import GeoPoint, LocalFrame
from mcsprivacy.ingest import Measurement
from mcsprivacy.lppm import PRESETS, RoundingConfig, apply_rounding, protect
from mcsprivacy.utility import (
    AveragedPoints,
    RadiationGrid,
    RegionSpec,
    antenna_error,
    average_recent,
    build_radiation_map,
    categorize,
    detect_hotspots,
    grid_coordinates,
    haversine_error_stats,
    locate_antennas,
    map_diff,
    read_grid,
    summarize,
    transition_matrix,
    write_grid,
)

REGION = RegionSpec("test", 35.0, 35.1, 139.0, 139.1, 9.0)
DAY = 86400.0


def avg_of(points, values):
    return AveragedPoints(np.array([p[0] for p in points], float), np.array([p[1] for p in points], float),
                          np.array(values, float), np.ones(len(values), int))


def brute_nn_map(avg, region, resolution):
    """All-pairs nearest source in the region frame; ties go to the smallest (lat, lon)."""
    frame = LocalFrame.at(region.center)
    order = np.lexsort((avg.lons, avg.lats))
    sx, sy = frame.project(avg.lats[order], avg.lons[order])
    vals = avg.values[order]
    glat, glon = grid_coordinates(region, resolution)
    out = np.empty((resolution, resolution))
    for i, la in enumerate(glat):
        for j, lo in enumerate(glon):
            gx, gy = frame.project(la, lo)
            d = np.hypot(sx - gx, sy - gy)
            out[i, j] = vals[np.argmax(d <= d.min() * (1 + 1e-12) + 1e-9)]
    return out


def test_summarize():
    s = summarize([1, 2, 3, 4, 5])
    assert (s["count"], s["mean"], s["min"], s["q1"], s["median"], s["q3"], s["max"]) == (5, 3, 1, 2, 3, 4, 5)
    assert summarize([])["mean"] is None


def test_error_stats_identity_and_rounding():
    rng = np.random.default_rng(0)
    pts = list(zip(35 + rng.random(200) * 0.05, 139 + rng.random(200) * 0.05))
    tr = make_trace(pts)
    assert np.all(haversine_error_stats(tr, tr).distances == 0)
    rounded = apply_rounding(tr, RoundingConfig(4))
    # half-cell diagonal of the 0.0001 degree grid at latitude 35
    bound = 0.5 * math.hypot(11.119, 11.119 * math.cos(math.radians(35)))
    assert haversine_error_stats(tr, rounded).distances.max() <= bound + 1e-6


def test_error_stats_release_hiding():
    tr = make_trace([(35.0, 139.0), (35.0001, 139.0), (35.01, 139.0)])
    out, idx = protect(tr, PRESETS["release-30"], seed=0)
    st = haversine_error_stats(tr, out, idx)
    assert np.all(st.distances == 0) and st.hidden == 1
    with pytest.raises(ValueError):
        haversine_error_stats(tr, out)


def _m(t, lat, lon, v, uid="u"):
    return Measurement(uid, t, GeoPoint(lat, lon), v)


def test_average_recent_examples():
    ms = [_m(0, 35.05, 139.05, 30), _m(DAY, 35.05, 139.05, 60), _m(2 * DAY, 35.05, 139.05, 90)]
    avg = average_recent(ms)
    assert avg.as_dict() == {(35.05, 139.05): 60.0}
    ms = [_m(0, 35.05, 139.05, 500), _m(271 * DAY, 35.05, 139.05, 40)]
    assert average_recent(ms).as_dict() == {(35.05, 139.05): 40.0}
    ms = [_m(1 * DAY, 35.05, 139.05, 500), _m(271 * DAY, 35.05, 139.05, 40)]
    assert average_recent(ms).as_dict() == {(35.05, 139.05): 270.0}  # window is closed
    ms = [_m(0, 35.02, 139.05, 10), _m(0, 35.01, 139.05, 20)]
    avg = average_recent(ms)
    assert list(avg.lats) == [35.01, 35.02] and list(avg.values) == [20, 10]
    assert len(average_recent([])) == 0


def test_average_recent_region_filter():
    ms = [_m(0, 35.05, 139.05, 10), _m(DAY, 40.0, 139.05, 20)]
    assert average_recent(ms, region=REGION).as_dict() == {(35.05, 139.05): 10.0}


def test_single_source_map_is_constant():
    g = build_radiation_map(avg_of([(35.03, 139.07)], [40.0]), REGION, 30)
    assert g.values.shape == (30, 30) and np.all(g.values == 40.0)


def test_map_requires_points_in_region():
    with pytest.raises(ValueError):
        build_radiation_map(avg_of([(36.0, 139.0)], [1.0]), REGION, 10)


def test_opposite_corners_match_brute_force():
    avg = avg_of([(35.0, 139.0), (35.1, 139.1)], [10.0, 20.0])
    g = build_radiation_map(avg, REGION, 10)
    assert np.array_equal(g.values, brute_nn_map(avg, REGION, 10))
    assert g.values[0, 0] == 10 and g.values[-1, -1] == 20


def test_equidistant_tie_goes_to_lexicographic_smallest():
    # sources mirrored about the grid point at the region center
    region = RegionSpec("r", 35.0, 35.1, 139.0, 139.1)
    avg = avg_of([(35.05, 139.08), (35.05, 139.02)], [1.0, 2.0])
    g = build_radiation_map(avg, region, 3)
    assert g.values[1, 1] == 2.0  # (35.05, 139.02) sorts first


def test_map_diff_examples():
    a = RadiationGrid(REGION, np.full((4, 4), 40.0))
    b = RadiationGrid(REGION, np.full((4, 4), 45.0))
    assert np.all(map_diff(a, a) == 0) and np.all(map_diff(a, b) == 5)
    with pytest.raises(ValueError):
        map_diff(a, RadiationGrid(RegionSpec("x", 0, 1, 0, 1), np.zeros((4, 4))))


def test_hotspots():
    avg = avg_of([(35.01, 139.0), (35.02, 139.0)], [150.0, 100.0])
    assert detect_hotspots(avg) == {(35.01, 139.0)}
    assert detect_hotspots(average_recent([])) == set()


@pytest.mark.parametrize("cpm,cat", [(45, 1), (75, 2), (150, 3), (1500, 4), (2500, 5),
                                     (50, 1), (51, 2), (100, 2), (1000, 3), (2000, 4), (0, 1)])
def test_categories(cpm, cat):
    assert categorize(cpm) == cat


def test_categorize_rejects_invalid():
    with pytest.raises(ValueError):
        categorize(-1)
    with pytest.raises(ValueError):
        categorize([1.0, float("nan")])


def test_transition_matrix():
    vals = np.array([[45, 75], [150, 2500]], float)
    g = RadiationGrid(REGION, vals)
    counts, pct = transition_matrix(g, g)
    assert np.array_equal(counts, np.diag([1, 1, 1, 0, 1]))
    assert np.array_equal(pct, np.diag([100.0, 100.0, 100.0, 0.0, 100.0]))
    after = RadiationGrid(REGION, np.array([[75, 75], [45, 2500]], float))
    counts, pct = transition_matrix(g, after)
    assert counts[0, 1] == 1 and counts[2, 0] == 1 and pct[2, 0] == 100.0


def test_grid_io_round_trip(tmp_path):
    g = RadiationGrid(REGION, np.arange(12, dtype=float).reshape(3, 4) * 1.5)
    path = tmp_path / "g.bin"
    write_grid(g, path)
    raw = path.read_bytes()
    assert raw[:4] == b"RMAP" and len(raw) == 16 + 12 * 4
    back = read_grid(path)
    assert back.region == REGION and np.array_equal(back.values, g.values)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        read_grid(path)


def _am(lat, lon, aid):
    return Measurement("u", 0.0, GeoPoint(lat, lon), -70.0, "dBm", extras={"antenna_id": aid})


def test_antennas():
    est = locate_antennas([_am(0, 0, "X"), _am(0, 2, "X"), _am(5, 5, "Y"), _m(0, 1, 1, 1)])
    assert est["X"].point == GeoPoint(0, 1) and est["X"].count == 2
    assert est["Y"].point == GeoPoint(5, 5)
    after = locate_antennas([_am(0, 1, "X")])
    err = antenna_error(est, after)
    assert err.errors == {"X": 0.0} and err.lost == 1 and err.lost_fraction == 0.5


def test_average_recent_snapping():
    ms = [_m(0, 35.01001, 139.05, 10), _m(0, 35.00999, 139.05, 30)]
    assert len(average_recent(ms)) == 2
    assert average_recent(ms, snap_decimals=3).as_dict() == {(35.01, 139.05): 20.0}
