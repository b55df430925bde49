"""Seeded synthetic users with known anchor places and a known value field."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .geo import METERS_PER_DEG, GeoPoint, haversine_arrays
from .ingest import Measurement, UserTrace

# Monday
DEFAULT_START = datetime(2016, 3, 7, tzinfo=timezone.utc).timestamp()


@dataclass(frozen=True)
class Anchor:
    name: str
    point: GeoPoint
    start_hour: float = 9.0
    dwell_minutes: float = 60.0
    points_per_visit: int = 100
    weekdays: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6)

    def __post_init__(self):
        if self.points_per_visit <= 0 or self.dwell_minutes <= 0:
            raise ValueError("anchors need a positive dwell and point rate")


@dataclass(frozen=True)
class BumpField:
    """Gaussian bump on a flat background; ``center=None`` means constant ``background``."""

    background: float = 30.0
    peak: float | None = None
    center: GeoPoint | None = None
    sigma_m: float = 100.0

    def __call__(self, lats, lons) -> np.ndarray:
        lats = np.asarray(lats, dtype=float)
        if self.center is None or self.peak is None:
            return np.full(lats.shape, float(self.background))
        d = haversine_arrays(self.center.lat, self.center.lon, lats, lons)
        return self.background + (self.peak - self.background) * np.exp(-0.5 * (d / self.sigma_m) ** 2)


@dataclass(frozen=True)
class SynthProfile:
    anchors: tuple[Anchor, ...]
    jitter_m: float = 10.0
    field: BumpField = field(default_factory=BumpField)
    days: int = 5
    seed: int = 0
    user_id: str = "synth-0"
    device_id: str = ""
    start: float = DEFAULT_START
    tz_offset_hours: float = 0.0
    unit: str = "cpm"

    def __post_init__(self):
        if not self.anchors:
            raise ValueError("a profile needs at least one anchor")
        if self.days < 1 or self.jitter_m < 0:
            raise ValueError("days must be >= 1 and jitter non-negative")


def _truncated_normal(rng: np.random.Generator, n: int, cap: float = 3.0) -> np.ndarray:
    out = rng.standard_normal(n)
    bad = np.abs(out) > cap
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > cap
    return out


def generate_trace(profile: SynthProfile) -> UserTrace:
    """Sample every scheduled anchor visit with Gaussian jitter truncated at 3 sigma."""
    rng = np.random.default_rng(profile.seed)
    tz = profile.tz_offset_hours * 3600.0
    ts, lats, lons = [], [], []
    for day in range(profile.days):
        local_date = profile.start + day * 86400.0
        day_start = local_date - tz  # local midnight as UTC seconds
        weekday = int((local_date // 86400 + 3) % 7)  # 1970-01-01 was a Thursday
        for a in profile.anchors:
            if weekday not in a.weekdays:
                continue
            n = a.points_per_visit
            t0 = day_start + a.start_hour * 3600.0
            ts.append(t0 + np.sort(rng.uniform(0.0, a.dwell_minutes * 60.0, n)))
            r = np.minimum(np.hypot(_truncated_normal(rng, n), _truncated_normal(rng, n)), 3.0) * profile.jitter_m
            theta = rng.uniform(0.0, 2 * math.pi, n)
            lats.append(a.point.lat + r * np.sin(theta) / METERS_PER_DEG)
            lons.append(a.point.lon + r * np.cos(theta) / (METERS_PER_DEG * math.cos(math.radians(a.point.lat))))
    if not ts:
        return UserTrace(profile.user_id, (), profile.tz_offset_hours)
    t = np.concatenate(ts)
    la = np.concatenate(lats)
    lo = np.concatenate(lons)
    order = np.argsort(t, kind="stable")
    t, la, lo = t[order], la[order], lo[order]
    vals = profile.field(la, lo)
    ms = tuple(
        Measurement(profile.user_id, float(ti), GeoPoint(float(a), float(b)), float(v), profile.unit, profile.device_id)
        for ti, a, b, v in zip(t, la, lo, vals)
    )
    return UserTrace(profile.user_id, ms, profile.tz_offset_hours)


@dataclass(frozen=True)
class GroundTruth:
    user_id: str
    anchors: tuple[Anchor, ...]

    def to_rows(self) -> list[dict]:
        return [{"user_id": self.user_id, "anchor": a.name, "lat": a.point.lat, "lon": a.point.lon}
                for a in self.anchors]


def generate_cohort(n_users: int, template: SynthProfile, seed: int,
                    spread_m: float = 3000.0) -> tuple[list[UserTrace], list[GroundTruth]]:
    """Independent users built from ``template`` with anchors shifted per user.

    Each user gets its own seed from a spawned sequence; anchor positions move
    uniformly within ``spread_m`` of the template's.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_users)
    traces, truth = [], []
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        anchors = []
        for a in template.anchors:
            r = spread_m * math.sqrt(rng.random())
            th = rng.uniform(0, 2 * math.pi)
            lat = a.point.lat + r * math.sin(th) / METERS_PER_DEG
            lon = a.point.lon + r * math.cos(th) / (METERS_PER_DEG * math.cos(math.radians(a.point.lat)))
            anchors.append(replace(a, point=GeoPoint(lat, lon)))
        uid = f"user-{k:04d}"
        profile = replace(template, anchors=tuple(anchors), user_id=uid, device_id=f"dev-{k:04d}",
                          seed=int(rng.integers(2**63 - 1)))
        traces.append(generate_trace(profile))
        truth.append(GroundTruth(uid, tuple(anchors)))
    return traces, truth
