import math

import pytest

from mcsprivacy.geo import METERS_PER_DEG, GeoPoint
from mcsprivacy.ingest import Measurement, UserTrace


def offset(origin: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    """Point ``east_m``/``north_m`` meters from ``origin`` (equirectangular)."""
    lat = origin.lat + north_m / METERS_PER_DEG
    lon = origin.lon + east_m / (METERS_PER_DEG * math.cos(math.radians(origin.lat)))
    return GeoPoint(lat, lon)


def make_trace(points, uid="u1", t0=1_457_341_200.0, dt=60.0, times=None, values=None, tz=0.0):
    """Trace from (lat, lon) pairs or GeoPoints, one sample every ``dt`` seconds by default."""
    ms = []
    for k, p in enumerate(points):
        p = p if isinstance(p, GeoPoint) else GeoPoint(*p)
        t = times[k] if times is not None else t0 + k * dt
        v = values[k] if values is not None else 30.0
        ms.append(Measurement(uid, float(t), p, float(v)))
    return UserTrace(uid, tuple(ms), tz)


@pytest.fixture
def tokyo():
    return GeoPoint(35.6895, 139.6917)
