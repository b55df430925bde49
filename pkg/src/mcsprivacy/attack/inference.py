"""Area inference from a user's reported locations."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans

from ..geo import ROUNDING_CELL_M
from ..ingest import UserTrace, local_day
from .dbscan import NOISE, DbscanParams, dbscan
from .raster import AreaEstimate, AreaGrid, disk_union, square_union

# tried in order until one yields a cluster
DEFAULT_SCHEDULE = (
    DbscanParams(eps=60.0, min_pts=80),
    DbscanParams(eps=90.0, min_pts=65),
    DbscanParams(eps=120.0, min_pts=50),
    DbscanParams(eps=120.0, min_pts=35),
)
TIGHT_PRESETS = {
    "safecast": (DbscanParams(eps=30.0, min_pts=75),),
    "radiocells": (DbscanParams(eps=30.0, min_pts=25),),
}
SCHEDULES = {"loose": DEFAULT_SCHEDULE, **TIGHT_PRESETS}

MIN_STAY_S = 30 * 60
MIN_DAYS = 2
TOP_K = 5


@dataclass(frozen=True)
class Cluster:
    label: int
    members: np.ndarray  # indices into the attacked trace, time-ordered

    @property
    def count(self) -> int:
        return len(self.members)


@dataclass
class AttackResult:
    area: AreaEstimate
    clusters: list[Cluster] = field(default_factory=list)
    params: DbscanParams | None = None
    method: str = "dbscan"
    anchors: list[tuple[float, float]] = field(default_factory=list)

    @property
    def vulnerable(self) -> bool:
        return bool(self.area)


def _clusters_from_labels(labels: np.ndarray) -> list[Cluster]:
    out = []
    for lab in np.unique(labels):
        if lab == NOISE:
            continue
        out.append(Cluster(int(lab), np.flatnonzero(labels == lab)))
    return out


def temporal_filter(clusters: list[Cluster], trace: UserTrace,
                    min_stay_s: float = MIN_STAY_S, min_days: int = MIN_DAYS) -> list[Cluster]:
    """Keep clusters visited for at least ``min_stay_s`` at once or on ``min_days`` local days.

    A visit is a maximal run of time-consecutive member points whose gaps are
    shorter than ``min_stay_s``.
    """
    times = trace.times
    kept = []
    for c in clusters:
        t = np.sort(times[c.members])
        if len(np.unique(local_day(t, trace.tz_offset_hours))) >= min_days:
            kept.append(c)
            continue
        breaks = np.flatnonzero(np.diff(t) >= min_stay_s)
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks, [len(t) - 1]])
        if np.any(t[ends] - t[starts] >= min_stay_s):
            kept.append(c)
    return kept


def _top_k(clusters: list[Cluster], times: np.ndarray, k: int) -> list[Cluster]:
    return sorted(clusters, key=lambda c: (-c.count, times[c.members].min(), c.label))[:k]


def infer_areas(
    trace: UserTrace,
    grid: AreaGrid | None = None,
    schedule=DEFAULT_SCHEDULE,
    top_k: int = TOP_K,
    temporal: bool = False,
) -> AttackResult:
    """Cluster the trace with the first schedule entry that yields a cluster.

    The area is the rasterized union of ``eps`` disks around members of the
    ``top_k`` largest clusters. An empty area means the user is not vulnerable.
    """
    grid = grid or AreaGrid.for_trace(trace)
    if len(trace) == 0:
        return AttackResult(AreaEstimate.empty(grid))
    x, y = grid.project(trace.lats, trace.lons)
    xy = np.column_stack([x, y])
    times = trace.times
    for params in schedule:
        clusters = _clusters_from_labels(dbscan(xy, params))
        if temporal:
            clusters = temporal_filter(clusters, trace)
        if clusters:
            kept = _top_k(clusters, times, top_k)
            members = np.concatenate([c.members for c in kept])
            area = disk_union(grid, x[members], y[members], params.eps)
            return AttackResult(area, kept, params)
    return AttackResult(AreaEstimate.empty(grid))


def rounding_adversary_areas(
    trace: UserTrace,
    decimals: int,
    grid: AreaGrid | None = None,
    top_k: int = TOP_K,
    **infer_kw,
) -> AttackResult:
    """Squares of the rounding cell size around the most frequently reported coordinates.

    Four-decimal rounding is fine enough for ordinary clustering, so that case
    falls back to :func:`infer_areas`.
    """
    grid = grid or AreaGrid.for_trace(trace)
    if decimals == 4:
        return infer_areas(trace, grid, top_k=top_k, **infer_kw)
    if decimals not in (2, 3):
        raise ValueError("rounding adversary handles 2, 3 or 4 decimals")
    if len(trace) == 0:
        return AttackResult(AreaEstimate.empty(grid), method="rounding-squares")
    freq = Counter((m.point.lat, m.point.lon) for m in trace)
    first_seen: dict = {}
    for i, m in enumerate(trace):
        first_seen.setdefault((m.point.lat, m.point.lon), i)
    top = sorted(freq, key=lambda p: (-freq[p], first_seen[p]))[:top_k]
    lats = np.array([p[0] for p in top])
    lons = np.array([p[1] for p in top])
    x, y = grid.project(lats, lons)
    area = square_union(grid, x, y, ROUNDING_CELL_M[decimals])
    return AttackResult(area, method="rounding-squares", anchors=list(top))


def split_subclusters(trace: UserTrace, cluster: Cluster, grid: AreaGrid | None = None,
                      seed: int = 0) -> list[tuple[float, float]]:
    """Centroids (lat, lon) of a seeded 2-means split, larger subcluster first."""
    lats, lons = trace.lats[cluster.members], trace.lons[cluster.members]
    if len(lats) == 0:
        raise ValueError("empty cluster")
    if len(np.unique(np.column_stack([lats, lons]), axis=0)) < 2:
        return [(float(lats[0]), float(lons[0]))] * 2
    grid = grid or AreaGrid.for_trace(trace)
    x, y = grid.project(lats, lons)
    km = KMeans(n_clusters=2, n_init=10, random_state=seed).fit(np.column_stack([x, y]))
    sizes = np.bincount(km.labels_, minlength=2)
    order = sorted(range(2), key=lambda k: (-sizes[k], k))
    out = []
    for k in order:
        la, lo = grid.frame.unproject(*km.cluster_centers_[k])
        out.append((float(la), float(lo)))
    return out
