"""Run configuration: a YAML document validated into plain dataclasses.

Example::

    seed: 7
    output_dir: out
    dataset:
      kind: synth            # synth | safecast | radiocells
      synth: {n_users: 10, days: 5, anchors: [{name: home, lat: 35.68, lon: 139.76}]}
    region: {name: tokyo, lat_min: 35.5, lat_max: 35.9, lon_min: 139.5, lon_max: 140.0, tz_offset_hours: 9}
    lppms: [identity, geoind-50, rounding-2]
    attack: {schedule: loose, temporal_filter: false}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .attack.dbscan import DbscanParams
from .attack.inference import SCHEDULES, TOP_K
from .attack.raster import DEFAULT_CELL_M
from .geo import GeoPoint
from .lppm.mechanisms import LppmSpec, resolve_lppm
from .synth import Anchor, BumpField, SynthProfile
from .utility import HOTSPOT_CPM, MAP_RESOLUTION, WINDOW_DAYS, RegionSpec


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    kind: str
    path: Path | None = None
    exclude_users: Path | None = None
    min_points: int | None = None
    max_speed_kmh: float | None = None
    synth_users: int = 10
    synth_seed: int = 0
    synth_profile: SynthProfile | None = None
    synth_spread_m: float = 3000.0


@dataclass
class AttackConfig:
    schedule: tuple[DbscanParams, ...] = SCHEDULES["loose"]
    schedule_name: str = "loose"
    temporal_filter: bool = False
    work_hours: bool = False
    top_k: int = TOP_K
    cell_m: float = DEFAULT_CELL_M


@dataclass
class PoiConfig:
    kind: str = "none"
    path: Path | None = None
    endpoint: str | None = None
    timeout: float = 60.0
    cache_dir: Path | None = None


@dataclass
class MetricsConfig:
    spatial: bool = True
    poi: bool = True
    distance: bool = True
    radiation_map: bool = True
    hotspots: bool = True
    antennas: bool = True
    colocation: bool = False


@dataclass
class RunConfig:
    seed: int
    dataset: DatasetConfig
    lppms: list[LppmSpec]
    output_dir: Path
    region: RegionSpec | None = None
    attack: AttackConfig = field(default_factory=AttackConfig)
    poi: PoiConfig = field(default_factory=PoiConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    resolution: int = MAP_RESOLUTION
    window_days: float = WINDOW_DAYS
    snap_decimals: int | None = None
    hotspot_cpm: float = HOTSPOT_CPM
    prior_train_fraction: float = 0.8
    colocation_d_max_m: float = 50.0
    colocation_t_max_s: float = 300.0
    workers: int = 1
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def _section(raw: dict, key: str) -> dict:
    val = raw.get(key) or {}
    if not isinstance(val, dict):
        raise ConfigError(f"'{key}' must be a mapping")
    return val


def _path(base: Path, value) -> Path | None:
    if value in (None, ""):
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _anchor(d: dict) -> Anchor:
    try:
        return Anchor(
            name=str(d.get("name", "anchor")),
            point=GeoPoint(float(d["lat"]), float(d["lon"])),
            start_hour=float(d.get("start_hour", 9.0)),
            dwell_minutes=float(d.get("dwell_minutes", 60.0)),
            points_per_visit=int(d.get("points_per_visit", 100)),
            weekdays=tuple(int(x) for x in d.get("weekdays", range(7))),
        )
    except KeyError as exc:
        raise ConfigError(f"synth anchor lacks {exc}") from None


def synth_profile_from_dict(d: dict, tz: float) -> SynthProfile:
    anchors = d.get("anchors")
    if not anchors:
        raise ConfigError("synth dataset needs at least one anchor")
    f = d.get("field") or {}
    center = f.get("center")
    fld = BumpField(
        background=float(f.get("background", 30.0)),
        peak=None if f.get("peak") is None else float(f["peak"]),
        center=None if center is None else GeoPoint(float(center[0]), float(center[1])),
        sigma_m=float(f.get("sigma_m", 100.0)),
    )
    return SynthProfile(
        anchors=tuple(_anchor(a) for a in anchors),
        jitter_m=float(d.get("jitter_m", 10.0)),
        field=fld,
        days=int(d.get("days", 5)),
        tz_offset_hours=tz,
    )


def _schedule(value) -> tuple[str, tuple[DbscanParams, ...]]:
    if isinstance(value, str):
        if value not in SCHEDULES:
            raise ConfigError(f"unknown attack schedule {value!r}; known: {sorted(SCHEDULES)}")
        return value, SCHEDULES[value]
    if isinstance(value, list) and value:
        try:
            return "custom", tuple(DbscanParams(float(e["eps"]), int(e["min_pts"])) for e in value)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"schedule entries need eps and min_pts: {exc}") from None
    raise ConfigError("attack.schedule must be a preset name or a list of {eps, min_pts}")


def parse_config(raw: dict[str, Any], base_dir: Path | str = ".") -> RunConfig:
    base = Path(base_dir)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if "seed" not in raw:
        raise ConfigError("an explicit integer 'seed' is required")
    try:
        seed = int(raw["seed"])
        region = None
        if raw.get("region"):
            r = _section(raw, "region")
            region = RegionSpec(str(r.get("name", "region")), float(r["lat_min"]), float(r["lat_max"]),
                                float(r["lon_min"]), float(r["lon_max"]), float(r.get("tz_offset_hours", 0.0)))
        tz = region.tz_offset_hours if region else 0.0

        ds = _section(raw, "dataset")
        kind = ds.get("kind")
        if kind not in ("synth", "safecast", "radiocells"):
            raise ConfigError("dataset.kind must be synth, safecast or radiocells")
        filters = ds.get("filters") or {}
        dataset = DatasetConfig(
            kind=kind,
            path=_path(base, ds.get("path")),
            exclude_users=_path(base, ds.get("exclude_users")),
            min_points=filters.get("min_points", 100 if kind == "radiocells" else None),
            max_speed_kmh=filters.get("max_speed_kmh", 200.0 if kind == "radiocells" else None),
        )
        if kind == "synth":
            sd = ds.get("synth") or {}
            if "seed" not in sd:
                sd = {**sd, "seed": seed}
            dataset.synth_users = int(sd.get("n_users", 10))
            dataset.synth_seed = int(sd["seed"])
            dataset.synth_spread_m = float(sd.get("spread_m", 3000.0))
            dataset.synth_profile = synth_profile_from_dict(sd, tz)
        elif dataset.path is None:
            raise ConfigError(f"dataset.path is required for {kind}")

        lppms = [resolve_lppm(e) for e in (raw.get("lppms") or ["identity"])]
        names = [s.name for s in lppms]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate LPPM names in {names}")

        a = _section(raw, "attack")
        sched_name, sched = _schedule(a.get("schedule", "loose"))
        attack = AttackConfig(
            schedule=sched, schedule_name=sched_name,
            temporal_filter=bool(a.get("temporal_filter", False)),
            work_hours=bool(a.get("work_hours", False)),
            top_k=int(a.get("top_k", TOP_K)),
            cell_m=float(a.get("cell_m", DEFAULT_CELL_M)),
        )

        p = _section(raw, "poi")
        poi = PoiConfig(kind=str(p.get("kind", "none")), path=_path(base, p.get("path")),
                        endpoint=p.get("endpoint"), timeout=float(p.get("timeout", 60.0)),
                        cache_dir=_path(base, p.get("cache_dir")))
        if poi.kind not in ("none", "offline", "overpass"):
            raise ConfigError("poi.kind must be none, offline or overpass")
        if poi.kind == "offline" and poi.path is None:
            raise ConfigError("offline POI provider needs poi.path")

        m = _section(raw, "metrics")
        metrics = MetricsConfig(**{k: bool(m.get(k, getattr(MetricsConfig, k))) for k in MetricsConfig.__dataclass_fields__})
        if metrics.radiation_map and region is None:
            metrics.radiation_map = False

        u = _section(raw, "utility")
        c = _section(raw, "colocation")
        cfg = RunConfig(
            seed=seed, dataset=dataset, lppms=lppms,
            output_dir=_path(base, raw.get("output_dir", "out")),
            region=region, attack=attack, poi=poi, metrics=metrics,
            resolution=int(u.get("resolution", MAP_RESOLUTION)),
            window_days=float(u.get("window_days", WINDOW_DAYS)),
            snap_decimals=None if u.get("snap_decimals") is None else int(u["snap_decimals"]),
            hotspot_cpm=float(u.get("hotspot_cpm", HOTSPOT_CPM)),
            prior_train_fraction=float(_section(raw, "prior").get("train_fraction", 0.8)),
            colocation_d_max_m=float(c.get("d_max_m", 50.0)),
            colocation_t_max_s=float(c.get("t_max_s", 300.0)),
            workers=int(raw.get("workers", 1)),
            raw=raw,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    if not 0 < cfg.prior_train_fraction < 1:
        raise ConfigError("prior.train_fraction must be in (0, 1)")
    if cfg.resolution < 2:
        raise ConfigError("utility.resolution must be at least 2")
    if cfg.snap_decimals is not None and not 0 <= cfg.snap_decimals <= 6:
        raise ConfigError("utility.snap_decimals must be in 0..6")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(raw, path.parent)
