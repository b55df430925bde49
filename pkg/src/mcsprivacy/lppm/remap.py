"""Optimal remapping of noisy locations towards a location prior."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from ..geo import GeoPoint, LocalFrame, chord_length, ecef_arrays, haversine_arrays, round_coords
from .noise import radial_quantile_numeric

PRIOR_DECIMALS = 3
REMAP_QUANTILE = 0.99


def geometric_median(points, weights=None, tol: float = 1e-6, max_iter: int = 200) -> np.ndarray:
    """Weighted geometric median of planar points via Weiszfeld iteration.

    Starts from the weighted centroid. When an iterate hits a data point it is
    nudged by 1e-9 m. After convergence the nearest data point is tested with
    the Kuhn optimality condition, which Weiszfeld only approaches slowly.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("geometric median of an empty set")
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(pts),) or np.any(w <= 0):
        raise ValueError("weights must be positive, one per point")
    if len(pts) == 1:
        return pts[0].copy()

    y = (w @ pts) / w.sum()
    for _ in range(max_iter):
        d = np.hypot(*(pts - y).T)
        if np.any(d < 1e-12):
            y = y + np.array([1e-9, 0.0])
            d = np.hypot(*(pts - y).T)
        inv = w / d
        y_new = (inv @ pts) / inv.sum()
        step = np.hypot(*(y_new - y))
        y = y_new
        if step < tol:
            break

    k = int(np.argmin(np.hypot(*(pts - y).T)))
    others = np.ones(len(pts), dtype=bool)
    others[k] = False
    diff = pts[k] - pts[others]
    dist = np.hypot(*diff.T)
    nz = dist > 0
    # coincident copies add to the vertex weight
    wk = w[k] + w[others][~nz].sum()
    pull = (w[others][nz, None] * diff[nz] / dist[nz, None]).sum(axis=0)
    if np.hypot(*pull) <= wk and _objective(pts, w, pts[k]) < _objective(pts, w, y):
        return pts[k].copy()
    return y


def _objective(pts, w, y) -> float:
    return float(w @ np.hypot(*(pts - y).T))


def weighted_distance_sum(points, weights, y) -> float:
    return _objective(np.asarray(points, float).reshape(-1, 2), np.asarray(weights, float), np.asarray(y, float))


@dataclass(frozen=True)
class Prior:
    """Location prior over 3-decimal cells, indexed in ECEF for radius queries."""

    lats: np.ndarray
    lons: np.ndarray
    probs: np.ndarray
    tree: cKDTree

    @property
    def cells(self) -> dict[GeoPoint, float]:
        return {GeoPoint(float(a), float(b)): float(p) for a, b, p in zip(self.lats, self.lons, self.probs)}

    def __len__(self):
        return len(self.probs)

    def within(self, point: GeoPoint, radius_m: float) -> np.ndarray:
        """Indices of cells within ``radius_m`` great-circle meters of ``point``."""
        q = np.array(ecef_arrays(point.lat, point.lon))
        idx = np.array(sorted(self.tree.query_ball_point(q, chord_length(radius_m) * (1 + 1e-9))), dtype=int)
        if len(idx) == 0:
            return idx
        d = haversine_arrays(point.lat, point.lon, self.lats[idx], self.lons[idx])
        return idx[d <= radius_m]


def build_prior(traces: Iterable) -> Prior:
    """Empirical prior: share of training measurements falling in each 3-decimal cell."""
    counts: Counter = Counter()
    for tr in traces:
        for m in tr:
            counts[round_coords(m.point, PRIOR_DECIMALS)] += 1
    if not counts:
        raise ValueError("cannot build a prior from an empty training set")
    keys = sorted(counts, key=lambda p: (p.lat, p.lon))
    lats = np.array([p.lat for p in keys])
    lons = np.array([p.lon for p in keys])
    c = np.array([counts[p] for p in keys], dtype=float)
    tree = cKDTree(np.column_stack(ecef_arrays(lats, lons)))
    return Prior(lats, lons, c / c.sum(), tree)


def remap_radius(epsilon: float) -> float:
    """Distance containing 99% of the planar Laplace noise mass."""
    return radial_quantile_numeric(REMAP_QUANTILE, epsilon)


def remap_optimal(z: GeoPoint, prior: Prior, epsilon: float, radius_m: float | None = None) -> GeoPoint:
    """Map a noisy report to the posterior-weighted geometric median of nearby prior cells.

    Returns ``z`` unchanged when no prior cell lies within the 99% noise radius.
    """
    r = remap_radius(epsilon) if radius_m is None else radius_m
    idx = prior.within(z, r)
    if len(idx) == 0:
        return z
    d = haversine_arrays(z.lat, z.lon, prior.lats[idx], prior.lons[idx])
    # log-space keeps far candidates from underflowing to zero weight together
    logw = np.log(prior.probs[idx]) - epsilon * d
    w = np.exp(logw - logw.max())
    keep = w > 0
    idx, w = idx[keep], w[keep]
    frame = LocalFrame.at(z)
    x, y = frame.project(prior.lats[idx], prior.lons[idx])
    med = geometric_median(np.column_stack([x, y]), w)
    lat, lon = frame.unproject(med[0], med[1])
    return GeoPoint(float(np.clip(lat, -90, 90)), float(lon))
