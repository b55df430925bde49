"""Points of interest inside inferred areas, from an offline file or the Overpass API."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx
import numpy as np

from ..geo import GeoPoint
from .raster import AreaEstimate

log = logging.getLogger(__name__)

CACHE_ENV = "MCSPRIVACY_CACHE_DIR"
DEFAULT_ENDPOINT = "https://overpass-api.de/api/interpreter"
DEFAULT_POI_TAGS = ("amenity", "shop", "office", "tourism", "leisure", "healthcare", "craft")


@dataclass(frozen=True)
class PoiRecord:
    id: str
    point: GeoPoint
    tags: dict = field(default_factory=dict, compare=False, hash=False)


class PoiProviderError(RuntimeError):
    """The provider answered, but not with usable data."""


class PoiNetworkError(PoiProviderError):
    """The provider could not be reached; distinct from an empty answer."""


class PoiProvider(Protocol):
    def pois_in_bbox(self, south: float, west: float, north: float, east: float) -> list[PoiRecord]: ...


def _parse_tags(text: str) -> dict:
    text = (text or "").strip()
    if not text:
        return {}
    if text.startswith("{"):
        return {str(k): str(v) for k, v in json.loads(text).items()}
    out = {}
    for part in text.split(";"):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k.strip()] = v.strip()
    return out


class OfflinePoiProvider:
    """POIs loaded once from CSV (``id,lat,lon,tags``) or a GeoJSON FeatureCollection.

    Read-only after construction, so concurrent queries are safe.
    """

    def __init__(self, records: list[PoiRecord]):
        self.records = list(records)
        self._lats = np.array([r.point.lat for r in self.records], dtype=float)
        self._lons = np.array([r.point.lon for r in self.records], dtype=float)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "OfflinePoiProvider":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() in (".json", ".geojson") or text.lstrip().startswith("{"):
            return cls(_records_from_geojson(json.loads(text)))
        rows = csv.DictReader(text.splitlines())
        return cls([
            PoiRecord(str(r["id"]), GeoPoint(float(r["lat"]), float(r["lon"])), _parse_tags(r.get("tags", "")))
            for r in rows
        ])

    def pois_in_bbox(self, south, west, north, east) -> list[PoiRecord]:
        m = (self._lats >= south) & (self._lats <= north) & (self._lons >= west) & (self._lons <= east)
        return [self.records[i] for i in np.flatnonzero(m)]


def _records_from_geojson(doc: dict) -> list[PoiRecord]:
    out = []
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            continue
        lon, lat = geom["coordinates"][:2]
        props = dict(feat.get("properties") or {})
        pid = feat.get("id", props.pop("id", i))
        out.append(PoiRecord(str(pid), GeoPoint(float(lat), float(lon)), {k: str(v) for k, v in props.items()}))
    return out


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "mcsprivacy")


class OverpassPoiProvider:
    """Bounding-box POI queries against an Overpass endpoint, cached on disk.

    Every response is written to the cache keyed by endpoint and query, so a
    rerun is served offline. Remote calls are serialized and spaced by
    ``min_interval`` seconds.
    """

    def __init__(self, endpoint: str = DEFAULT_ENDPOINT, cache_dir: str | os.PathLike | None = None,
                 timeout: float = 60.0, tags=DEFAULT_POI_TAGS, min_interval: float = 1.0,
                 client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.cache_dir = Path(cache_dir) if cache_dir else default_cache_dir()
        self.timeout = timeout
        self.tags = tuple(tags)
        self.min_interval = min_interval
        self._client = client
        self._lock = threading.Lock()
        self._last_call = 0.0

    def build_query(self, south, west, north, east) -> str:
        bbox = f"{south:.7f},{west:.7f},{north:.7f},{east:.7f}"
        parts = "".join(f'nwr["{t}"]({bbox});' for t in self.tags)
        return f"[out:json][timeout:{int(self.timeout)}];({parts});out center tags;"

    def _cache_path(self, query: str) -> Path:
        key = hashlib.sha256(f"{self.endpoint}\n{query}".encode()).hexdigest()
        return self.cache_dir / f"overpass_{key[:32]}.json"

    def _fetch(self, query: str) -> dict:
        path = self._cache_path(query)
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))
        with self._lock:
            wait = self.min_interval - (time.monotonic() - self._last_call)
            if wait > 0:
                time.sleep(wait)
            client = self._client or httpx.Client(timeout=self.timeout)
            try:
                resp = client.post(self.endpoint, data={"data": query})
            except httpx.TransportError as exc:
                raise PoiNetworkError(f"Overpass endpoint {self.endpoint} unreachable: {exc}") from exc
            finally:
                self._last_call = time.monotonic()
                if self._client is None:
                    client.close()
        if resp.status_code != 200:
            raise PoiProviderError(f"Overpass returned HTTP {resp.status_code}")
        try:
            doc = resp.json()
        except ValueError as exc:
            raise PoiProviderError("Overpass returned a non-JSON body") from exc
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
        tmp.replace(path)
        return doc

    def pois_in_bbox(self, south, west, north, east) -> list[PoiRecord]:
        doc = self._fetch(self.build_query(south, west, north, east))
        out = []
        for el in doc.get("elements", []):
            if "lat" in el:
                lat, lon = el["lat"], el["lon"]
            elif "center" in el:
                lat, lon = el["center"]["lat"], el["center"]["lon"]
            else:
                continue
            out.append(PoiRecord(f"{el.get('type', 'node')}/{el['id']}", GeoPoint(float(lat), float(lon)),
                                 {str(k): str(v) for k, v in (el.get("tags") or {}).items()}))
        return out


def query_pois(area: AreaEstimate, provider: PoiProvider) -> set[PoiRecord]:
    """Provider POIs whose containing raster cell belongs to ``area``."""
    if not area:
        return set()
    candidates = provider.pois_in_bbox(*area.bbox())
    if not candidates:
        return set()
    lats = np.array([p.point.lat for p in candidates])
    lons = np.array([p.point.lon for p in candidates])
    inside = area.contains(lats, lons)
    return {p for p, ok in zip(candidates, inside) if ok}
