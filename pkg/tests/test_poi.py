import json

import httpx
import pytest

from mcsprivacy.attack.poi import (
    OfflinePoiProvider,
    OverpassPoiProvider,
    PoiNetworkError,
    PoiProviderError,
    PoiRecord,
    query_pois,
)
from mcsprivacy.attack.raster import AreaEstimate, AreaGrid
from mcsprivacy.geo import GeoPoint

ORIGIN = GeoPoint(35.68, 139.76)


@pytest.fixture
def grid():
    return AreaGrid.around(ORIGIN)


def _at(grid, x, y, pid):
    lat, lon = grid.frame.unproject(x, y)
    return PoiRecord(pid, GeoPoint(float(lat), float(lon)))


def test_offline_area_filter(grid):
    pois = [_at(grid, 5, 5, "a"), _at(grid, 15, 5, "b"), _at(grid, 500, 500, "c")]
    area = AreaEstimate.from_cells(grid, [0, 1], [0, 0])
    assert {p.id for p in query_pois(area, OfflinePoiProvider(pois))} == {"a", "b"}
    assert query_pois(AreaEstimate.empty(grid), OfflinePoiProvider(pois)) == set()


def test_poi_on_cell_boundary_belongs_to_floor_cell(grid):
    p = _at(grid, 10.0, 5.0, "edge")
    x, _ = grid.project(p.point.lat, p.point.lon)
    i = int(grid.cell_index(x, 0.0)[0])
    assert {r.id for r in query_pois(AreaEstimate.from_cells(grid, [i], [0]), OfflinePoiProvider([p]))} == {"edge"}
    assert query_pois(AreaEstimate.from_cells(grid, [i - 1 if i == 1 else i + 1], [0]), OfflinePoiProvider([p])) == set()


def test_offline_file_formats(tmp_path):
    csv_path = tmp_path / "pois.csv"
    csv_path.write_text("id,lat,lon,tags\nx,35.1,139.1,amenity=cafe;name=A\ny,35.2,139.2,\n")
    prov = OfflinePoiProvider.from_file(csv_path)
    assert prov.records[0].tags == {"amenity": "cafe", "name": "A"}
    gj = {"type": "FeatureCollection", "features": [
        {"type": "Feature", "id": "n1", "geometry": {"type": "Point", "coordinates": [139.1, 35.1]},
         "properties": {"shop": "bakery"}},
        {"type": "Feature", "geometry": {"type": "LineString", "coordinates": [[0, 0], [1, 1]]}},
    ]}
    gj_path = tmp_path / "pois.geojson"
    gj_path.write_text(json.dumps(gj))
    (rec,) = OfflinePoiProvider.from_file(gj_path).records
    assert rec.id == "n1" and rec.point == GeoPoint(35.1, 139.1) and rec.tags == {"shop": "bakery"}


OVERPASS_DOC = {"elements": [
    {"type": "node", "id": 1, "lat": 35.68005, "lon": 139.76005, "tags": {"amenity": "cafe"}},
    {"type": "way", "id": 2, "center": {"lat": 35.7, "lon": 139.8}, "tags": {"shop": "x"}},
    {"type": "relation", "id": 3},
]}


def test_overpass_query_and_cache(tmp_path, grid):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(200, json=OVERPASS_DOC)

    client = httpx.Client(transport=httpx.MockTransport(handler))
    prov = OverpassPoiProvider("https://example.test/api", tmp_path, client=client, min_interval=0)
    recs = prov.pois_in_bbox(35.6, 139.7, 35.8, 139.9)
    assert [r.id for r in recs] == ["node/1", "way/2"]
    body = calls[0].content.decode()
    assert body.startswith("data=") and "out+center+tags" in body.replace("%20", "+")
    again = OverpassPoiProvider("https://example.test/api", tmp_path, client=client, min_interval=0)
    assert again.pois_in_bbox(35.6, 139.7, 35.8, 139.9) == recs
    assert len(calls) == 1
    area = AreaEstimate.from_cells(grid, [0], [0])
    assert {p.id for p in query_pois(area, again)} == {"node/1"}


def test_overpass_query_text():
    q = OverpassPoiProvider(tags=("amenity",), timeout=25).build_query(1, 2, 3, 4)
    assert q == '[out:json][timeout:25];(nwr["amenity"](1.0000000,2.0000000,3.0000000,4.0000000););out center tags;'


def test_overpass_errors(tmp_path):
    def down(request):
        raise httpx.ConnectError("refused", request=request)

    prov = OverpassPoiProvider(cache_dir=tmp_path, min_interval=0,
                               client=httpx.Client(transport=httpx.MockTransport(down)))
    with pytest.raises(PoiNetworkError):
        prov.pois_in_bbox(0, 0, 1, 1)
    busy = OverpassPoiProvider(cache_dir=tmp_path, min_interval=0,
                               client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(429))))
    with pytest.raises(PoiProviderError) as err:
        busy.pois_in_bbox(0, 0, 1, 1)
    assert not isinstance(err.value, PoiNetworkError)
    assert not list(tmp_path.iterdir())


def test_overpass_empty_answer_is_not_an_error(tmp_path):
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"elements": []})))
    assert OverpassPoiProvider(cache_dir=tmp_path, client=client, min_interval=0).pois_in_bbox(0, 0, 1, 1) == []


def test_cache_dir_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("MCSPRIVACY_CACHE_DIR", str(tmp_path / "c"))
    assert OverpassPoiProvider().cache_dir == tmp_path / "c"
