"""Privacy gain as precision/recall of the post-defense inference against the baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .attack.raster import AreaEstimate

VOLUME_BINS = ("<10k", "10k-50k", ">50k")


@dataclass(frozen=True)
class PrivacyGain:
    tp: float
    fp: float
    fn: float

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("tp, fp and fn must be non-negative")

    @property
    def precision(self) -> float | None:
        d = self.tp + self.fp
        return self.tp / d if d > 0 else None

    @property
    def recall(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d > 0 else None


def spatial_gain(before: AreaEstimate, after: AreaEstimate) -> PrivacyGain:
    """Overlap of inferred areas in km^2."""
    tp = (before & after).area_km2
    return PrivacyGain(tp, (after - before).area_km2, (before - after).area_km2)


def poi_gain(before_pois: Iterable, after_pois: Iterable) -> PrivacyGain:
    b, a = set(before_pois), set(after_pois)
    return PrivacyGain(len(a & b), len(a - b), len(b - a))


@dataclass(frozen=True)
class VulnerabilityStats:
    users_total: int
    vulnerable_before: int
    vulnerable_after: int
    reduction: float
    flagged: bool = False  # nobody was vulnerable to begin with


def vulnerability_stats(before: Mapping[str, bool], after: Mapping[str, bool]) -> VulnerabilityStats:
    """``before``/``after`` map user id to whether the attack found at least one cluster."""
    if set(before) != set(after):
        raise ValueError("before and after passes must cover the same users")
    nb = sum(bool(v) for v in before.values())
    na = sum(bool(v) for v in after.values())
    if nb == 0:
        return VulnerabilityStats(len(before), 0, na, 0.0, flagged=True)
    return VulnerabilityStats(len(before), nb, na, 1.0 - na / nb)


def volume_bin(n_measurements: int) -> str:
    if n_measurements < 10_000:
        return VOLUME_BINS[0]
    if n_measurements <= 50_000:
        return VOLUME_BINS[1]
    return VOLUME_BINS[2]
