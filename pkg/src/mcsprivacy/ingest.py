"""CSV ingestion for Safecast- and Radiocells-style logs, plus user-level filters.

Safecast schema (header required, extra columns ignored)::

    user_id,device_id,captured_at,latitude,longitude,value,unit

Radiocells schema::

    manufacturer,model,country,operator,captured_at,latitude,longitude,value,unit,antenna_id

``captured_at`` is either ISO-8601 UTC (``2016-03-07T09:15:00Z``) or epoch seconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, TextIO

import numpy as np

from .geo import GeoPoint, haversine_arrays


SAFECAST_COLUMNS = ["user_id", "device_id", "captured_at", "latitude", "longitude", "value", "unit"]
RADIOCELLS_COLUMNS = [
    "manufacturer", "model", "country", "operator",
    "captured_at", "latitude", "longitude", "value", "unit", "antenna_id",
]
QUASI_ID_FIELDS = ("manufacturer", "model", "country", "operator")


@dataclass(frozen=True, slots=True)
class Measurement:
    user_id: str
    t: float
    point: GeoPoint
    value: float
    unit: str = "cpm"
    device_id: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.t):
            raise ValueError("timestamp must be finite")
        if not math.isfinite(self.value):
            raise ValueError("value must be finite")

    def moved_to(self, point: GeoPoint) -> "Measurement":
        return replace(self, point=point)


@dataclass(frozen=True)
class UserTrace:
    user_id: str
    measurements: tuple[Measurement, ...]
    tz_offset_hours: float = 0.0

    def __post_init__(self):
        ms = tuple(self.measurements)
        object.__setattr__(self, "measurements", ms)
        for a, b in zip(ms, ms[1:]):
            if b.t < a.t:
                raise ValueError(f"trace {self.user_id!r} is not time-ordered")
        for m in ms:
            if m.user_id != self.user_id:
                raise ValueError(f"measurement of {m.user_id!r} in trace {self.user_id!r}")

    def __len__(self):
        return len(self.measurements)

    def __iter__(self):
        return iter(self.measurements)

    @property
    def lats(self) -> np.ndarray:
        return np.array([m.point.lat for m in self.measurements], dtype=float)

    @property
    def lons(self) -> np.ndarray:
        return np.array([m.point.lon for m in self.measurements], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return np.array([m.t for m in self.measurements], dtype=float)

    @property
    def local_times(self) -> np.ndarray:
        return self.times + self.tz_offset_hours * 3600.0

    def with_measurements(self, measurements: Iterable[Measurement]) -> "UserTrace":
        return UserTrace(self.user_id, tuple(measurements), self.tz_offset_hours)

    def subset(self, mask) -> "UserTrace":
        return self.with_measurements(m for m, keep in zip(self.measurements, mask) if keep)

    def with_points(self, lats, lons) -> "UserTrace":
        return self.with_measurements(
            m.moved_to(GeoPoint(float(la), float(lo)))
            for m, la, lo in zip(self.measurements, lats, lons)
        )


@dataclass(frozen=True)
class QuasiId:
    manufacturer: str
    model: str
    country: str
    operator: str

    @property
    def user_id(self) -> str:
        return "|".join((self.manufacturer, self.model, self.country, self.operator))


@dataclass
class IngestReport:
    rows_read: int = 0
    malformed_rows: int = 0
    excluded_rows: int = 0
    unassignable_rows: int = 0
    users_dropped_few_points: int = 0
    users_dropped_speed: int = 0

    def merge(self, other: "IngestReport") -> "IngestReport":
        return IngestReport(**{k: getattr(self, k) + getattr(other, k) for k in vars(self)})


class IngestError(Exception):
    """The input could not be read at all (as opposed to individual bad rows)."""


def parse_timestamp(text: str) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text.replace("Z", "+00:00").replace(" ", "T", 1))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(t: float) -> str:
    dt = datetime.fromtimestamp(t, tz=timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _reader(stream: TextIO, required: list[str]) -> csv.DictReader:
    try:
        reader = csv.DictReader(stream)
        header = reader.fieldnames
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"unreadable CSV stream: {exc}") from exc
    if header is None:
        raise IngestError("CSV stream is empty")
    missing = [c for c in required if c not in header]
    if missing:
        raise IngestError(f"CSV header lacks columns {missing}")
    return reader


def _group_traces(measurements: list[Measurement], tz_offset_hours: float) -> list[UserTrace]:
    by_user: dict[str, list[Measurement]] = {}
    for m in measurements:
        by_user.setdefault(m.user_id, []).append(m)
    # sorted() is stable: equal timestamps keep file order
    return [
        UserTrace(uid, tuple(sorted(ms, key=lambda m: m.t)), tz_offset_hours)
        for uid, ms in sorted(by_user.items())
    ]


def parse_safecast(
    stream: TextIO,
    tz_offset_hours: float = 0.0,
    exclude_users: Iterable[str] = (),
    report: IngestReport | None = None,
) -> list[UserTrace]:
    """Parse a Safecast-style CSV into per-user traces sorted by time.

    Malformed rows (bad numbers, out-of-range coordinates, empty user id) are
    skipped and tallied on ``report``. Rows whose user id is listed in
    ``exclude_users`` (organisation accounts) are dropped and tallied too.
    """
    report = report if report is not None else IngestReport()
    excluded = set(exclude_users)
    out: list[Measurement] = []
    reader = _reader(stream, ["user_id", "captured_at", "latitude", "longitude", "value"])
    try:
        for row in reader:
            report.rows_read += 1
            try:
                uid = (row["user_id"] or "").strip()
                if not uid:
                    raise ValueError("empty user id")
                m = Measurement(
                    user_id=uid,
                    t=parse_timestamp(row["captured_at"]),
                    point=GeoPoint(float(row["latitude"]), float(row["longitude"])),
                    value=float(row["value"]),
                    unit=(row.get("unit") or "cpm").strip(),
                    device_id=(row.get("device_id") or "").strip(),
                )
            except (ValueError, TypeError, AttributeError, OverflowError):
                report.malformed_rows += 1
                continue
            if uid in excluded:
                report.excluded_rows += 1
                continue
            out.append(m)
    except csv.Error as exc:
        raise IngestError(f"CSV stream broke at row {report.rows_read}: {exc}") from exc
    return _group_traces(out, tz_offset_hours)


def write_safecast(traces: Iterable[UserTrace], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(SAFECAST_COLUMNS)
    for tr in traces:
        for m in tr:
            w.writerow([
                m.user_id, m.device_id, format_timestamp(m.t),
                repr(m.point.lat), repr(m.point.lon), repr(m.value), m.unit,
            ])


def parse_radiocells(stream: TextIO, report: IngestReport | None = None) -> list[dict]:
    """Read Radiocells-style rows as plain records; quasi-id checks happen later."""
    report = report if report is not None else IngestReport()
    records = []
    reader = _reader(stream, ["captured_at", "latitude", "longitude", *QUASI_ID_FIELDS])
    for row in reader:
        report.rows_read += 1
        try:
            rec = {k: (row.get(k) or "").strip() for k in RADIOCELLS_COLUMNS}
            rec["t"] = parse_timestamp(row["captured_at"])
            rec["point"] = GeoPoint(float(row["latitude"]), float(row["longitude"]))
            rec["value"] = float(row["value"]) if (row.get("value") or "").strip() else 0.0
        except (ValueError, TypeError, AttributeError, OverflowError):
            report.malformed_rows += 1
            continue
        records.append(rec)
    return records


def derive_radiocells_users(
    records: Iterable[dict],
    tz_offset_hours: float = 0.0,
    report: IngestReport | None = None,
) -> list[UserTrace]:
    """Group anonymous records into pseudo-users by (manufacturer, model, country, operator)."""
    report = report if report is not None else IngestReport()
    out: list[Measurement] = []
    for rec in records:
        fields = [str(rec.get(k) or "").strip() for k in QUASI_ID_FIELDS]
        if not all(fields):
            report.unassignable_rows += 1
            continue
        qid = QuasiId(*fields)
        extras = {k: fields[i] for i, k in enumerate(QUASI_ID_FIELDS)}
        if rec.get("antenna_id"):
            extras["antenna_id"] = str(rec["antenna_id"])
        out.append(Measurement(
            user_id=qid.user_id,
            t=float(rec["t"]),
            point=rec["point"],
            value=float(rec.get("value", 0.0)),
            unit=rec.get("unit") or "dBm",
            extras=extras,
        ))
    return _group_traces(out, tz_offset_hours)


def max_speed_kmh(trace: UserTrace) -> float:
    """Largest speed between contiguous measurements; inf for a jump with zero elapsed time."""
    if len(trace) < 2:
        return 0.0
    lats, lons, ts = trace.lats, trace.lons, trace.times
    d = haversine_arrays(lats[:-1], lons[:-1], lats[1:], lons[1:])
    dt = np.diff(ts)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(dt > 0, d / np.where(dt > 0, dt, 1.0), np.where(d > 0, np.inf, 0.0))
    return float(v.max()) * 3.6


def filter_users(
    traces: Iterable[UserTrace],
    min_points: int = 100,
    max_speed: float = 200.0,
    report: IngestReport | None = None,
) -> list[UserTrace]:
    """Keep users with more than ``min_points`` measurements and no jump faster than ``max_speed`` km/h."""
    report = report if report is not None else IngestReport()
    kept = []
    for tr in traces:
        if len(tr) <= min_points:
            report.users_dropped_few_points += 1
        elif max_speed_kmh(tr) > max_speed:
            report.users_dropped_speed += 1
        else:
            kept.append(tr)
    return kept


def split_work_hours(trace: UserTrace, start_hour: int = 9, end_hour: int = 17) -> UserTrace:
    """Restrict to Monday-Friday, ``[start_hour, end_hour)`` local time."""
    local = trace.local_times
    days = np.floor(local / 86400.0)
    # 1970-01-01 was a Thursday
    weekday = (days.astype(np.int64) + 3) % 7
    sec_of_day = local - days * 86400.0
    mask = (weekday < 5) & (sec_of_day >= start_hour * 3600) & (sec_of_day < end_hour * 3600)
    return trace.subset(mask)


def local_day(t, tz_offset_hours: float):
    """Local calendar-day index (days since epoch) for UTC seconds ``t``."""
    return np.floor((np.asarray(t, dtype=float) + tz_offset_hours * 3600.0) / 86400.0).astype(np.int64)


def read_exclusion_list(stream: TextIO) -> set[str]:
    return {line.strip() for line in stream if line.strip() and not line.lstrip().startswith("#")}

