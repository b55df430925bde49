import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcsprivacy.attack.raster import AreaEstimate, AreaGrid, GridMismatchError
from mcsprivacy.geo import GeoPoint
from mcsprivacy.metrics import PrivacyGain, poi_gain, spatial_gain, volume_bin, vulnerability_stats

GRID = AreaGrid.around(GeoPoint(35.68, 139.76))


def cells(*ij):
    return AreaEstimate.from_cells(GRID, [c[0] for c in ij], [c[1] for c in ij])


def test_spatial_examples():
    a = cells((0, 0), (1, 0), (2, 0), (3, 0))
    g = spatial_gain(a, a)
    assert (g.precision, g.recall) == (1.0, 1.0)
    g = spatial_gain(a, cells((10, 10)))
    assert (g.precision, g.recall) == (0.0, 0.0)
    g = spatial_gain(a, cells((0, 0), (1, 0)))
    assert (g.precision, g.recall) == (1.0, 0.5)
    assert g.tp == pytest.approx(2e-4) and g.fp == 0 and g.fn == pytest.approx(2e-4)


def test_spatial_undefined_when_empty():
    g = spatial_gain(AreaEstimate.empty(GRID), AreaEstimate.empty(GRID))
    assert g.precision is None and g.recall is None


def test_spatial_grid_mismatch():
    other = AreaEstimate.from_cells(AreaGrid.around(GeoPoint(0, 0)), [0], [0])
    with pytest.raises(GridMismatchError):
        spatial_gain(cells((0, 0)), other)


def test_poi_examples():
    g = poi_gain({"a", "b"}, {"b", "c"})
    assert (g.precision, g.recall) == (0.5, 0.5)
    g = poi_gain({1, 2, 3}, {1, 2, 3, 4, 5, 6})
    assert (g.precision, g.recall) == (0.5, 1.0)
    assert poi_gain(set(), {"x"}).recall is None


@given(st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)))
def test_poi_gain_bounds(before, after):
    g = poi_gain(before, after)
    for v in (g.precision, g.recall):
        assert v is None or 0.0 <= v <= 1.0
    if after and after <= before:
        assert g.precision == 1.0


def test_vulnerability_examples():
    before = {f"u{i}": i < 8 for i in range(10)}
    after = {f"u{i}": i < 4 for i in range(10)}
    s = vulnerability_stats(before, after)
    assert s.reduction == pytest.approx(0.5) and not s.flagged
    none = {f"u{i}": False for i in range(3)}
    s = vulnerability_stats(none, none)
    assert s.reduction == 0.0 and s.flagged
    assert vulnerability_stats(before, before).reduction == 0.0
    with pytest.raises(ValueError):
        vulnerability_stats(before, {"x": True})


def test_privacy_gain_rejects_negative():
    with pytest.raises(ValueError):
        PrivacyGain(-1, 0, 0)


@pytest.mark.parametrize("n,label", [(0, "<10k"), (9999, "<10k"), (10_000, "10k-50k"),
                                     (50_000, "10k-50k"), (50_001, ">50k")])
def test_volume_bins(n, label):
    assert volume_bin(n) == label
