"""Density-based clustering over planar points, with k-d tree neighbour queries."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be at least 1")


def dbscan(xy, params: DbscanParams) -> np.ndarray:
    """Label each point with a cluster id (0, 1, ...) or ``NOISE``.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Clusters are seeded in index order and fully expanded
    before the next seed, so a border point reachable from several clusters
    joins the one with the lowest seed.
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    n = len(xy)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    # duplicates share a neighbourhood, so cluster distinct points weighted by multiplicity
    uniq, first, inverse, counts = np.unique(xy, axis=0, return_index=True, return_inverse=True, return_counts=True)
    order = np.argsort(first, kind="stable")
    uniq, counts = uniq[order], counts[order]
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    inverse = rank[inverse.ravel()]

    tree = cKDTree(uniq)
    weight = np.fromiter(
        (counts[nb].sum() for nb in tree.query_ball_point(uniq, params.eps)), dtype=np.int64, count=len(uniq)
    )
    core = weight >= params.min_pts

    ulabels = np.full(len(uniq), NOISE, dtype=np.int64)
    cluster = 0
    for seed in range(len(uniq)):
        if ulabels[seed] != NOISE or not core[seed]:
            continue
        ulabels[seed] = cluster
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            for q in tree.query_ball_point(uniq[p], params.eps):
                if ulabels[q] == NOISE:
                    ulabels[q] = cluster
                    if core[q]:
                        queue.append(q)
        cluster += 1
    labels[:] = ulabels[inverse]
    return labels
