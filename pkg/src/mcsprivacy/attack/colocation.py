"""Pairs of users reporting from nearly the same place at nearly the same time."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from ..geo import haversine_arrays
from ..ingest import UserTrace

DEFAULT_D_MAX_M = 50.0
DEFAULT_T_MAX_S = 300.0


@dataclass(frozen=True)
class ColocationEvent:
    index_a: int
    index_b: int
    distance_m: float
    dt_s: float


def _pair_events(a: UserTrace, b: UserTrace, d_max: float, t_max: float) -> list[ColocationEvent]:
    ta, tb = a.times, b.times
    if len(ta) == 0 or len(tb) == 0:
        return []
    lo = np.searchsorted(tb, ta - t_max, side="left")
    hi = np.searchsorted(tb, ta + t_max, side="right")
    n = hi - lo
    if n.sum() == 0:
        return []
    ia = np.repeat(np.arange(len(ta)), n)
    ib = np.concatenate([np.arange(s, e) for s, e in zip(lo, hi) if e > s])
    d = haversine_arrays(a.lats[ia], a.lons[ia], b.lats[ib], b.lons[ib])
    dt = np.abs(ta[ia] - tb[ib])
    hit = (d <= d_max) & (dt <= t_max)
    return [ColocationEvent(int(i), int(j), float(dd), float(tt))
            for i, j, dd, tt in zip(ia[hit], ib[hit], d[hit], dt[hit])]


def detect_colocations(traces: Sequence[UserTrace], d_max: float = DEFAULT_D_MAX_M,
                       t_max: float = DEFAULT_T_MAX_S) -> dict[tuple[str, str], list[ColocationEvent]]:
    """Map each co-located pair ``(user_a, user_b)`` (sorted ids) to its events.

    Event indices refer to the traces of ``user_a`` and ``user_b`` respectively.
    """
    by_id = sorted(traces, key=lambda tr: tr.user_id)
    out = {}
    for a, b in combinations(by_id, 2):
        events = _pair_events(a, b, d_max, t_max)
        if events:
            out[(a.user_id, b.user_id)] = events
    return out
