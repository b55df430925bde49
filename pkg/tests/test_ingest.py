import io
from datetime import datetime, timezone

import pytest

from conftest import make_trace, offset
from mcsprivacy.geo import GeoPoint
from mcsprivacy.ingest import (
    IngestError,
    IngestReport,
    derive_radiocells_users,
    filter_users,
    local_day,
    max_speed_kmh,
    parse_radiocells,
    parse_safecast,
    parse_timestamp,
    read_exclusion_list,
    split_work_hours,
    write_safecast,
)

HEADER = "user_id,device_id,captured_at,latitude,longitude,value,unit\n"


def _ts(*args):
    return datetime(*args, tzinfo=timezone.utc).timestamp()


def test_malformed_row_is_tallied():
    text = HEADER + (
        "A,d,2016-03-07T10:00:00Z,35.1,139.1,30,cpm\n"
        "A,d,2016-03-07T10:01:00Z,35.1,139.1,31,cpm\n"
        "A,d,not-a-time,35.1,139.1,31,cpm\n"
        "A,d,2016-03-07T10:02:00Z,35.1,139.1,32,cpm\n"
    )
    rep = IngestReport()
    traces = parse_safecast(io.StringIO(text), report=rep)
    assert len(traces) == 1 and len(traces[0]) == 3
    assert rep.malformed_rows == 1 and rep.rows_read == 4


def test_out_of_range_latitude_dropped():
    text = HEADER + "A,d,2016-03-07T10:00:00Z,91,139.1,30,cpm\nA,d,2016-03-07T10:00:00Z,35,139.1,30,cpm\n"
    rep = IngestReport()
    traces = parse_safecast(io.StringIO(text), report=rep)
    assert len(traces[0]) == 1 and rep.malformed_rows == 1


def test_rows_sorted_by_time():
    text = HEADER + "A,,1000,35,139,1,cpm\nA,,500,35,139,2,cpm\nA,,750,35,139,3,cpm\n"
    (tr,) = parse_safecast(io.StringIO(text))
    assert list(tr.times) == [500, 750, 1000]
    assert [m.value for m in tr] == [2, 3, 1]


def test_equal_timestamps_keep_file_order():
    text = HEADER + "A,,500,35,139,1,cpm\nA,,500,35,139,2,cpm\n"
    (tr,) = parse_safecast(io.StringIO(text))
    assert [m.value for m in tr] == [1, 2]


def test_exclusion_list():
    excl = read_exclusion_list(io.StringIO("# orgs\norg-1\n\n"))
    text = HEADER + "org-1,,500,35,139,1,cpm\nB,,500,35,139,2,cpm\n"
    rep = IngestReport()
    traces = parse_safecast(io.StringIO(text), exclude_users=excl, report=rep)
    assert [t.user_id for t in traces] == ["B"] and rep.excluded_rows == 1


def test_missing_columns_is_fatal():
    with pytest.raises(IngestError):
        parse_safecast(io.StringIO("a,b\n1,2\n"))
    with pytest.raises(IngestError):
        parse_safecast(io.StringIO(""))


def test_timestamp_formats_agree():
    assert parse_timestamp("2016-03-07T09:00:00Z") == parse_timestamp(str(_ts(2016, 3, 7, 9)))
    assert parse_timestamp("2016-03-07 18:00:00+09:00") == _ts(2016, 3, 7, 9)


def test_write_parse_fixed_point():
    text = HEADER + "A,d1,2016-03-07T10:00:00Z,35.123456789,139.1,30.5,cpm\nB,,2016-03-08T10:00:00Z,-1.5,2.25,12,usv\n"
    first = parse_safecast(io.StringIO(text))
    buf = io.StringIO()
    write_safecast(first, buf)
    second = parse_safecast(io.StringIO(buf.getvalue()))
    assert second == first
    buf2 = io.StringIO()
    write_safecast(second, buf2)
    assert buf2.getvalue() == buf.getvalue()


RC_HEADER = "manufacturer,model,country,operator,captured_at,latitude,longitude,value,unit,antenna_id\n"


def test_radiocells_grouping():
    text = RC_HEADER + (
        "Acme,X1,DE,Op1,1000,52,13,-70,dBm,a1\n"
        "Acme,X1,DE,Op1,1060,52,13,-71,dBm,a1\n"
        "Acme,X1,DE,Op2,1000,52,13,-72,dBm,a2\n"
        "Acme,,DE,Op2,1000,52,13,-72,dBm,a2\n"
    )
    rep = IngestReport()
    traces = derive_radiocells_users(parse_radiocells(io.StringIO(text), rep), report=rep)
    assert sorted(len(t) for t in traces) == [1, 2]
    assert {t.user_id for t in traces} == {"Acme|X1|DE|Op1", "Acme|X1|DE|Op2"}
    assert rep.unassignable_rows == 1
    assert traces[0].measurements[0].extras["antenna_id"] == "a1"


def _slow_trace(n, uid="u"):
    return make_trace([offset(GeoPoint(35, 139), 5.0 * k, 0) for k in range(n)], uid=uid, dt=60)


def test_filter_users_point_threshold_is_strict():
    rep = IngestReport()
    kept = filter_users([_slow_trace(100, "a"), _slow_trace(101, "b")], report=rep)
    assert [t.user_id for t in kept] == ["b"]
    assert rep.users_dropped_few_points == 1


def test_filter_users_drops_speed_jump():
    base = GeoPoint(35, 139)
    pts = [offset(base, 5.0 * k, 0) for k in range(150)]
    pts[75] = offset(base, 5.0 * 74 + 5000.0, 0)  # 5 km in 60 s = 300 km/h
    tr = make_trace(pts, dt=60)
    assert max_speed_kmh(tr) == pytest.approx(300.0, rel=0.01)
    rep = IngestReport()
    assert filter_users([tr], report=rep) == [] and rep.users_dropped_speed == 1


def test_max_speed_zero_dt_jump_is_infinite():
    tr = make_trace([(35, 139), (35.1, 139)], times=[0, 0])
    assert max_speed_kmh(tr) == float("inf")


@pytest.mark.parametrize("when,kept", [
    ((2016, 3, 12, 10, 0, 0), False),   # Saturday
    ((2016, 3, 8, 9, 0, 0), True),      # Tuesday, closed lower bound
    ((2016, 3, 8, 16, 59, 59), True),
    ((2016, 3, 8, 17, 0, 0), False),
    ((2016, 3, 8, 17, 0, 1), False),
    ((2016, 3, 8, 8, 59, 59), False),
])
def test_work_hours(when, kept):
    # timestamps are local; shift into UTC for a +9 h zone
    t = _ts(*when) - 9 * 3600
    tr = make_trace([(35, 139)], times=[t], tz=9.0)
    assert len(split_work_hours(tr)) == (1 if kept else 0)


def test_local_day_respects_offset():
    t = _ts(2016, 3, 7, 20)  # 05:00 next day at +9
    assert local_day(t, 9.0) == local_day(t, 0.0) + 1
