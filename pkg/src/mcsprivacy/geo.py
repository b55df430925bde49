"""Geometric substrate: points, great-circle distances, local planar frames."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

EARTH_RADIUS_M = 6_371_008.8
METERS_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        # plain floats keep repr() and hashing stable for numpy scalars
        object.__setattr__(self, "lat", float(self.lat))
        object.__setattr__(self, "lon", float(self.lon))
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True, slots=True)
class EcefPoint:
    x: float
    y: float
    z: float


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius ``EARTH_RADIUS_M``."""
    return float(haversine_arrays(a.lat, a.lon, b.lat, b.lon))


def haversine_arrays(lat1, lon1, lat2, lon2):
    """Vectorised haversine; broadcasts like numpy."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular tangent frame: x grows east, y grows north, both in meters.

    Good to well under 1% for distances up to a few tens of kilometers away
    from the poles.
    """

    origin: GeoPoint
    meters_per_deg_lat: float
    meters_per_deg_lon: float

    @classmethod
    def at(cls, origin: GeoPoint) -> "LocalFrame":
        if abs(origin.lat) >= 89.0:
            raise ValueError(f"local frame undefined near the poles (lat={origin.lat})")
        return cls(origin, METERS_PER_DEG, METERS_PER_DEG * math.cos(math.radians(origin.lat)))

    def project(self, lats, lons):
        x = _wrap_lon(np.asarray(lons, dtype=float) - self.origin.lon) * self.meters_per_deg_lon
        y = (np.asarray(lats, dtype=float) - self.origin.lat) * self.meters_per_deg_lat
        return x, y

    def unproject(self, x, y):
        lats = self.origin.lat + np.asarray(y, dtype=float) / self.meters_per_deg_lat
        lons = _wrap_lon(self.origin.lon + np.asarray(x, dtype=float) / self.meters_per_deg_lon)
        return lats, lons


def _wrap_lon(d):
    """Bring longitudes (or differences) into [-180, 180], touching only values outside it."""
    return np.where(np.abs(d) > 180.0, (d + 180.0) % 360.0 - 180.0, d)


def to_local(p: GeoPoint, frame: LocalFrame) -> tuple[float, float]:
    x, y = frame.project(p.lat, p.lon)
    return float(x), float(y)


def from_local(x: float, y: float, frame: LocalFrame) -> GeoPoint:
    lat, lon = frame.unproject(x, y)
    return GeoPoint(float(lat), float(lon))


def to_ecef(p: GeoPoint) -> EcefPoint:
    x, y, z = ecef_arrays(p.lat, p.lon)
    return EcefPoint(float(x), float(y), float(z))


def ecef_arrays(lats, lons):
    phi = np.radians(lats)
    lmb = np.radians(lons)
    cphi = np.cos(phi)
    return (
        EARTH_RADIUS_M * cphi * np.cos(lmb),
        EARTH_RADIUS_M * cphi * np.sin(lmb),
        EARTH_RADIUS_M * np.sin(phi),
    )


def from_ecef(e: EcefPoint) -> GeoPoint:
    lat = math.degrees(math.atan2(e.z, math.hypot(e.x, e.y)))
    lon = math.degrees(math.atan2(e.y, e.x))
    return GeoPoint(lat, lon)


def chord_length(arc_m: float) -> float:
    """Straight-line (ECEF) length of a great-circle arc."""
    return 2.0 * EARTH_RADIUS_M * math.sin(min(arc_m, math.pi * EARTH_RADIUS_M) / (2.0 * EARTH_RADIUS_M))


def round_half_away(value: float, decimals: int) -> float:
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_UP))


def round_coords(p: GeoPoint, decimals: int) -> GeoPoint:
    """Round both coordinates to ``decimals`` places, halves away from zero.

    Rounding works on the shortest decimal representation of each float, so
    ``-0.005`` becomes ``-0.01`` rather than following the binary value.
    """
    if not 0 <= decimals <= 6:
        raise ValueError(f"decimals must be in 0..6, got {decimals}")
    return GeoPoint(round_half_away(p.lat, decimals), round_half_away(p.lon, decimals))


# Nominal ground size of one rounding cell; exact for latitude only.
ROUNDING_CELL_M = {2: 1100.0, 3: 110.0, 4: 11.0}
