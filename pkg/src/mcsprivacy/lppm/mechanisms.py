"""The evaluated defenses: noise, noise with movement-gated release, noise with
optimal remapping, random and distance-based hiding, and coordinate rounding."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..geo import METERS_PER_DEG, GeoPoint, haversine, round_coords
from ..ingest import UserTrace, local_day
from .noise import sample_planar_laplace
from .remap import Prior, remap_optimal

DEFAULT_PRIVACY_LEVEL = math.log(1.6)


@dataclass(frozen=True)
class GeoIndConfig:
    r: float
    l: float = DEFAULT_PRIVACY_LEVEL  # noqa: E741

    def __post_init__(self):
        if self.l <= 0 or self.r <= 0:
            raise ValueError("GeoInd needs l > 0 and r > 0")

    @property
    def epsilon(self) -> float:
        return self.l / self.r


@dataclass(frozen=True)
class ReleaseGeoIndConfig:
    z: float
    base: GeoIndConfig = field(default_factory=lambda: GeoIndConfig(50.0))

    def __post_init__(self):
        if self.z <= 0:
            raise ValueError("movement threshold z must be positive")


@dataclass(frozen=True)
class HidingConfig:
    mode: str
    keep_fraction: float | None = None
    x: float | None = None

    def __post_init__(self):
        if self.mode == "random":
            if self.keep_fraction is None or self.x is not None:
                raise ValueError("random hiding takes keep_fraction only")
            if not 0 < self.keep_fraction <= 1:
                raise ValueError("keep_fraction must be in (0, 1]")
        elif self.mode == "release":
            if self.x is None or self.keep_fraction is not None:
                raise ValueError("release hiding takes x only")
            if self.x <= 0:
                raise ValueError("x must be positive")
        else:
            raise ValueError(f"unknown hiding mode {self.mode!r}")


@dataclass(frozen=True)
class RoundingConfig:
    decimals: int

    def __post_init__(self):
        if self.decimals not in (2, 3, 4):
            raise ValueError("rounding supports 2, 3 or 4 decimals")


def _displace(lats, lons, dist, angle):
    """Move points by (dist, angle) in their own tangent plane; angle 0 is east."""
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    dy = dist * np.sin(angle)
    dx = dist * np.cos(angle)
    new_lat = lats + dy / METERS_PER_DEG
    new_lon = lons + dx / (METERS_PER_DEG * np.cos(np.radians(lats)))
    new_lat = np.clip(new_lat, -90.0, 90.0)
    new_lon = (new_lon + 180.0) % 360.0 - 180.0
    return new_lat, new_lon


def apply_geoind(trace: UserTrace, cfg: GeoIndConfig, seed: int) -> UserTrace:
    if len(trace) == 0:
        return trace
    rng = np.random.default_rng(seed)
    dist, angle = sample_planar_laplace(cfg.epsilon, rng, len(trace))
    return trace.with_points(*_displace(trace.lats, trace.lons, dist, angle))


def apply_release_geoind(trace: UserTrace, cfg: ReleaseGeoIndConfig, seed: int) -> UserTrace:
    """Report fresh noise only once the true position is ``z`` meters from the last release point.

    Between releases the previous noisy report is repeated, so the output has
    the input's length.
    """
    rng = np.random.default_rng(seed)
    out = []
    anchor: GeoPoint | None = None
    reported: GeoPoint | None = None
    for m in trace:
        if anchor is None or haversine(m.point, anchor) >= cfg.z:
            anchor = m.point
            d, a = sample_planar_laplace(cfg.base.epsilon, rng)
            lat, lon = _displace(m.point.lat, m.point.lon, d, a)
            reported = GeoPoint(float(lat), float(lon))
        out.append(m.moved_to(reported))
    return trace.with_measurements(out)


def apply_geoind_or(trace: UserTrace, cfg: GeoIndConfig, prior: Prior, seed: int) -> UserTrace:
    noisy = apply_geoind(trace, cfg, seed)
    return noisy.with_measurements(
        m.moved_to(remap_optimal(m.point, prior, cfg.epsilon)) for m in noisy
    )


def random_hiding_mask(n: int, keep_fraction: float, seed: int) -> np.ndarray:
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must be in (0, 1]")
    return np.random.default_rng(seed).random(n) < keep_fraction


def apply_random_hiding(trace: UserTrace, keep_fraction: float, seed: int) -> UserTrace:
    return trace.subset(random_hiding_mask(len(trace), keep_fraction, seed))


def release_hiding_mask(trace: UserTrace, x: float) -> np.ndarray:
    mask = np.zeros(len(trace), dtype=bool)
    days = local_day(trace.times, trace.tz_offset_hours)
    last: GeoPoint | None = None
    last_day = None
    for i, m in enumerate(trace):
        if last is None or days[i] != last_day or haversine(m.point, last) >= x:
            mask[i] = True
            last, last_day = m.point, days[i]
    return mask


def apply_release_hiding(trace: UserTrace, x: float) -> UserTrace:
    """Release a point only ``x`` meters away from the last released one, or on a new local day."""
    return trace.subset(release_hiding_mask(trace, x))


def apply_rounding(trace: UserTrace, cfg: RoundingConfig) -> UserTrace:
    return trace.with_measurements(m.moved_to(round_coords(m.point, cfg.decimals)) for m in trace)


@dataclass(frozen=True)
class LppmSpec:
    """A named mechanism with its parameters, as written in run configs."""

    name: str
    kind: str
    params: dict

    def to_dict(self) -> dict:
        return asdict(self)


KINDS = ("identity", "geoind", "release_geoind", "geoind_or", "random_hiding", "release_hiding", "rounding")


def _presets() -> dict[str, LppmSpec]:
    p = {"identity": LppmSpec("identity", "identity", {})}
    for r in (50, 150, 300):
        p[f"geoind-{r}"] = LppmSpec(f"geoind-{r}", "geoind", {"r": float(r)})
        p[f"geoind-or-{r}"] = LppmSpec(f"geoind-or-{r}", "geoind_or", {"r": float(r)})
    for z in (30, 60, 90):
        p[f"release-geoind-{z}"] = LppmSpec(f"release-geoind-{z}", "release_geoind", {"z": float(z), "r": 50.0})
        p[f"release-{z}"] = LppmSpec(f"release-{z}", "release_hiding", {"x": float(z)})
    for pct in (40, 60, 80):
        p[f"random-{pct}"] = LppmSpec(f"random-{pct}", "random_hiding", {"keep_fraction": pct / 100})
    for d in (2, 3, 4):
        p[f"rounding-{d}"] = LppmSpec(f"rounding-{d}", "rounding", {"decimals": d})
    return p


PRESETS = _presets()


def resolve_lppm(entry: str | dict) -> LppmSpec:
    """Accept a preset name or ``{"kind": ..., **params}`` (optionally with ``name``)."""
    if isinstance(entry, str):
        if entry not in PRESETS:
            raise ValueError(f"unknown LPPM preset {entry!r}")
        return PRESETS[entry]
    entry = dict(entry)
    if "preset" in entry:
        return resolve_lppm(entry["preset"])
    kind = entry.pop("kind", None)
    if kind not in KINDS:
        raise ValueError(f"unknown LPPM kind {kind!r}")
    name = entry.pop("name", None) or kind + "".join(f"-{v}" for _, v in sorted(entry.items()))
    spec = LppmSpec(name, kind, entry)
    _validate(spec)
    return spec


def _validate(spec: LppmSpec) -> None:
    k, p = spec.kind, spec.params
    try:
        if k in ("geoind", "geoind_or"):
            GeoIndConfig(float(p["r"]), float(p.get("l", DEFAULT_PRIVACY_LEVEL)))
        elif k == "release_geoind":
            ReleaseGeoIndConfig(float(p["z"]), GeoIndConfig(float(p.get("r", 50.0)), float(p.get("l", DEFAULT_PRIVACY_LEVEL))))
        elif k == "random_hiding":
            HidingConfig("random", keep_fraction=float(p["keep_fraction"]))
        elif k == "release_hiding":
            HidingConfig("release", x=float(p["x"]))
        elif k == "rounding":
            RoundingConfig(int(p["decimals"]))
    except KeyError as exc:
        raise ValueError(f"LPPM {spec.name!r} lacks parameter {exc}") from None


def protect(trace: UserTrace, spec: LppmSpec, seed: int, prior: Prior | None = None) -> tuple[UserTrace, np.ndarray]:
    """Apply ``spec`` and return the protected trace with the input index of every output point."""
    k, p = spec.kind, spec.params
    everything = np.arange(len(trace))
    l = float(p.get("l", DEFAULT_PRIVACY_LEVEL))  # noqa: E741
    if k == "identity":
        return trace, everything
    if k == "geoind":
        return apply_geoind(trace, GeoIndConfig(float(p["r"]), l), seed), everything
    if k == "release_geoind":
        cfg = ReleaseGeoIndConfig(float(p["z"]), GeoIndConfig(float(p.get("r", 50.0)), l))
        return apply_release_geoind(trace, cfg, seed), everything
    if k == "geoind_or":
        if prior is None:
            raise ValueError("GeoInd-OR needs a prior")
        return apply_geoind_or(trace, GeoIndConfig(float(p["r"]), l), prior, seed), everything
    if k == "random_hiding":
        mask = random_hiding_mask(len(trace), float(p["keep_fraction"]), seed)
        return trace.subset(mask), np.flatnonzero(mask)
    if k == "release_hiding":
        mask = release_hiding_mask(trace, float(p["x"]))
        return trace.subset(mask), np.flatnonzero(mask)
    if k == "rounding":
        return apply_rounding(trace, RoundingConfig(int(p["decimals"]))), everything
    raise ValueError(f"unknown LPPM kind {k!r}")
