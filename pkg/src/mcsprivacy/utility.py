"""Utility of crowdsourced data after a defense: location error, the radiation
map (recent average + nearest-neighbour interpolation), danger categories,
hotspots and antenna positions."""

from __future__ import annotations

import json
import struct
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from .geo import GeoPoint, LocalFrame, haversine_arrays, round_coords
from .ingest import Measurement, UserTrace

WINDOW_DAYS = 270
MAP_RESOLUTION = 1500
HOTSPOT_CPM = 100.0
# upper bounds (inclusive) of danger categories 1-4; anything above is category 5
CATEGORY_BOUNDS = (50.0, 100.0, 1000.0, 2000.0)
N_CATEGORIES = 5
GRID_MAGIC = b"RMAP"
GRID_VERSION = 1


@dataclass(frozen=True)
class RegionSpec:
    name: str
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    tz_offset_hours: float = 0.0

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError(f"region {self.name!r} has an empty bounding box")

    @property
    def center(self) -> GeoPoint:
        return GeoPoint((self.lat_min + self.lat_max) / 2, (self.lon_min + self.lon_max) / 2)

    def contains(self, lats, lons) -> np.ndarray:
        lats, lons = np.asarray(lats), np.asarray(lons)
        return (lats >= self.lat_min) & (lats <= self.lat_max) & (lons >= self.lon_min) & (lons <= self.lon_max)


def summarize(values) -> dict:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return {"count": 0, "mean": None, "min": None, "q1": None, "median": None, "q3": None, "max": None}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"count": int(v.size), "mean": float(v.mean()), "min": float(v.min()), "q1": float(q1),
            "median": float(med), "q3": float(q3), "max": float(v.max())}


@dataclass
class ErrorStats:
    distances: np.ndarray
    hidden: int

    @property
    def summary(self) -> dict:
        return {**summarize(self.distances), "hidden": self.hidden}


def haversine_error_stats(original: UserTrace, obfuscated: UserTrace, alignment=None) -> ErrorStats:
    """Distance between each reported point and the true point it stands for.

    ``alignment[k]`` is the index in ``original`` of the k-th obfuscated point;
    it may be omitted only when both traces have the same length.
    """
    if alignment is None:
        if len(original) != len(obfuscated):
            raise ValueError("traces differ in length; pass the alignment of released points")
        alignment = np.arange(len(original))
    alignment = np.asarray(alignment, dtype=int)
    if len(alignment) != len(obfuscated):
        raise ValueError("alignment must list one original index per obfuscated point")
    d = haversine_arrays(original.lats[alignment], original.lons[alignment], obfuscated.lats, obfuscated.lons)
    return ErrorStats(np.asarray(d, dtype=float), len(original) - len(obfuscated))


@dataclass(frozen=True)
class AveragedPoints:
    """Mean value per exact coordinate, sorted by (lat, lon)."""

    lats: np.ndarray
    lons: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict[tuple[float, float], float]:
        return {(float(a), float(b)): float(v) for a, b, v in zip(self.lats, self.lons, self.values)}


def average_recent(measurements: Iterable[Measurement], window_days: float = WINDOW_DAYS,
                   anchor: float | None = None, region: RegionSpec | None = None,
                   snap_decimals: int | None = None) -> AveragedPoints:
    """Average values per exact coordinate over ``[anchor - window, anchor]``.

    ``anchor`` defaults to the newest timestamp among the (region-filtered) input.
    With ``snap_decimals`` coordinates are rounded first, so nearby readings share a cell.
    """
    ms = list(measurements)
    if region is not None:
        ms = [m for m in ms if region.contains(m.point.lat, m.point.lon)]
    if not ms:
        e = np.empty(0)
        return AveragedPoints(e, e, e, np.empty(0, dtype=int))
    if anchor is None:
        anchor = max(m.t for m in ms)
    lo = anchor - window_days * 86400.0
    sums: dict = defaultdict(float)
    counts: dict = defaultdict(int)
    for m in ms:
        if lo <= m.t <= anchor:
            p = m.point if snap_decimals is None else round_coords(m.point, snap_decimals)
            key = (p.lat, p.lon)
            sums[key] += m.value
            counts[key] += 1
    keys = sorted(sums)
    return AveragedPoints(
        np.array([k[0] for k in keys], dtype=float),
        np.array([k[1] for k in keys], dtype=float),
        np.array([sums[k] / counts[k] for k in keys], dtype=float),
        np.array([counts[k] for k in keys], dtype=int),
    )


@dataclass(frozen=True, eq=False)
class RadiationGrid:
    """Interpolated map; ``values[i, j]`` sits at ``grid_lats[i]``, ``grid_lons[j]`` (south to north rows)."""

    region: RegionSpec
    values: np.ndarray

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def grid_lats(self) -> np.ndarray:
        return np.linspace(self.region.lat_min, self.region.lat_max, self.resolution)

    @property
    def grid_lons(self) -> np.ndarray:
        return np.linspace(self.region.lon_min, self.region.lon_max, self.values.shape[1])


def grid_coordinates(region: RegionSpec, resolution: int):
    return np.linspace(region.lat_min, region.lat_max, resolution), np.linspace(region.lon_min, region.lon_max, resolution)


def build_radiation_map(avg: AveragedPoints, region: RegionSpec, resolution: int = MAP_RESOLUTION,
                        tie_rtol: float = 1e-12) -> RadiationGrid:
    """Give every grid point the averaged value of its nearest source.

    Distances are planar in the region's local frame. Equidistant sources
    resolve to the lexicographically smallest (lat, lon).
    """
    inside = region.contains(avg.lats, avg.lons)
    if not inside.any():
        raise ValueError(f"no averaged points inside region {region.name!r}")
    lats, lons, vals = avg.lats[inside], avg.lons[inside], avg.values[inside]
    order = np.lexsort((lons, lats))
    lats, lons, vals = lats[order], lons[order], vals[order]

    frame = LocalFrame.at(region.center)
    sx, sy = frame.project(lats, lons)
    src = np.column_stack([sx, sy])
    glat, glon = grid_coordinates(region, resolution)
    gx, gy = frame.project(glat[:, None] * np.ones((1, resolution)), np.ones((resolution, 1)) * glon[None, :])
    q = np.column_stack([gx.ravel(), gy.ravel()])

    if len(src) == 1:
        nearest = np.zeros(len(q), dtype=int)
    else:
        d, idx = cKDTree(src).query(q, k=2)
        nearest = idx[:, 0].copy()
        tied = np.flatnonzero(d[:, 1] <= d[:, 0] * (1 + tie_rtol) + 1e-9)
        # brute force only where the k-d tree cannot rule out a tie
        for s in range(0, len(tied), 4096):
            rows = tied[s:s + 4096]
            dd = np.hypot(q[rows, 0:1] - sx[None, :], q[rows, 1:2] - sy[None, :])
            dmin = dd.min(axis=1, keepdims=True)
            nearest[rows] = np.argmax(dd <= dmin * (1 + tie_rtol) + 1e-9, axis=1)
    return RadiationGrid(region, vals[nearest].reshape(resolution, resolution))


def _check_same(a: RadiationGrid, b: RadiationGrid):
    if a.region != b.region or a.values.shape != b.values.shape:
        raise ValueError("grids cover different regions or resolutions")


def map_diff(a: RadiationGrid, b: RadiationGrid) -> np.ndarray:
    _check_same(a, b)
    return np.abs(a.values - b.values)


def detect_hotspots(avg: AveragedPoints, threshold: float = HOTSPOT_CPM) -> set[tuple[float, float]]:
    """Coordinates whose average is strictly above ``threshold`` (before any interpolation)."""
    hot = avg.values > threshold
    return {(float(a), float(b)) for a, b in zip(avg.lats[hot], avg.lons[hot])}


def categorize(cpm):
    """Danger category 1-5: <=50, (50, 100], (100, 1000], (1000, 2000], >2000 cpm."""
    arr = np.asarray(cpm, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("radiation level must be a non-negative number")
    cat = np.searchsorted(np.array(CATEGORY_BOUNDS), arr, side="left") + 1
    return int(cat) if cat.ndim == 0 else cat


def transition_matrix(before: RadiationGrid, after: RadiationGrid) -> tuple[np.ndarray, np.ndarray]:
    """5x5 grid-point counts (row: category before, column: after) and row percentages."""
    _check_same(before, after)
    cb = categorize(before.values).ravel() - 1
    ca = categorize(after.values).ravel() - 1
    counts = np.bincount(cb * N_CATEGORIES + ca, minlength=N_CATEGORIES ** 2).reshape(N_CATEGORIES, N_CATEGORIES)
    rows = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pct = np.where(rows > 0, 100.0 * counts / np.where(rows > 0, rows, 1), 0.0)
    return counts, pct


def write_grid(grid: RadiationGrid, path: str | Path) -> None:
    """Row-major little-endian float32 after a 16-byte header, plus a JSON sidecar.

    Header: magic ``RMAP``, then uint32 version, rows and columns. The bounding
    box lives in the sidecar at full precision.
    """
    path = Path(path)
    rows, cols = grid.values.shape
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC + struct.pack("<III", GRID_VERSION, rows, cols))
        fh.write(grid.values.astype("<f4").tobytes(order="C"))
    r = grid.region
    sidecar = {"region": r.name, "lat_min": r.lat_min, "lat_max": r.lat_max, "lon_min": r.lon_min,
               "lon_max": r.lon_max, "tz_offset_hours": r.tz_offset_hours, "rows": rows, "cols": cols,
               "dtype": "float32-le", "row_order": "south-to-north", "unit": "cpm"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_grid(path: str | Path) -> RadiationGrid:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != GRID_MAGIC:
        raise ValueError(f"{path} is not a radiation grid")
    version, rows, cols = struct.unpack("<III", raw[4:16])
    if version != GRID_VERSION:
        raise ValueError(f"unsupported grid version {version}")
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    region = RegionSpec(meta["region"], meta["lat_min"], meta["lat_max"], meta["lon_min"], meta["lon_max"],
                        meta.get("tz_offset_hours", 0.0))
    values = np.frombuffer(raw[16:], dtype="<f4").reshape(rows, cols).astype(float)
    return RadiationGrid(region, values)


@dataclass(frozen=True)
class AntennaEstimate:
    antenna_id: str
    point: GeoPoint
    count: int


def locate_antennas(measurements: Iterable[Measurement]) -> dict[str, AntennaEstimate]:
    """Antenna position as the plain mean of latitudes and longitudes of its measurements."""
    acc: dict[str, list] = defaultdict(list)
    for m in measurements:
        aid = m.extras.get("antenna_id")
        if aid:
            acc[aid].append((m.point.lat, m.point.lon))
    out = {}
    for aid in sorted(acc):
        pts = np.array(acc[aid])
        out[aid] = AntennaEstimate(aid, GeoPoint(float(pts[:, 0].mean()), float(pts[:, 1].mean())), len(pts))
    return out


@dataclass
class AntennaErrors:
    errors: dict[str, float]
    lost: int
    total_before: int

    @property
    def lost_fraction(self) -> float:
        return self.lost / self.total_before if self.total_before else 0.0


def antenna_error(before: dict[str, AntennaEstimate], after: dict[str, AntennaEstimate]) -> AntennaErrors:
    errors = {}
    for aid in sorted(set(before) & set(after)):
        a, b = before[aid].point, after[aid].point
        errors[aid] = float(haversine_arrays(a.lat, a.lon, b.lat, b.lon))
    return AntennaErrors(errors, len(set(before) - set(after)), len(before))
