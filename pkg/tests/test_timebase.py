"""Civil-time derivation against the stdlib zoneinfo oracle."""

from datetime import date, datetime, timedelta
from zoneinfo import ZoneInfo

import numpy as np
import pytest

from cdrhomes.timebase import CivilClock, day_ordinal, iter_days, ordinal_date

from oracles import local_fields

PARIS = ZoneInfo("Europe/Paris")

# epoch seconds bracketing the 2007 DST transitions in Europe/Paris
SPRING_FORWARD = 1174784400  # 2007-03-25 02:00 UTC+1 -> 03:00 UTC+2
FALL_BACK = 1193533200  # 2007-10-28 03:00 UTC+2 -> 02:00 UTC+1


def test_derive_matches_zoneinfo_at_transitions():
    clock = CivilClock()
    for base in (SPRING_FORWARD, FALL_BACK):
        for delta in range(-7200, 7201, 600):
            ts = base + delta
            assert clock.derive_local_time(ts) == local_fields(ts)


def test_derive_matches_zoneinfo_random_epochs():
    clock = CivilClock()
    rng = np.random.default_rng(7)
    lo = int(datetime(2006, 12, 1, tzinfo=PARIS).timestamp())
    hi = int(datetime(2008, 2, 1, tzinfo=PARIS).timestamp())
    for ts in rng.integers(lo, hi, size=500):
        assert clock.derive_local_time(int(ts)) == local_fields(int(ts))


def test_local_fields_bulk_matches_scalar():
    clock = CivilClock()
    rng = np.random.default_rng(11)
    ts = rng.integers(1178000000, 1192300000, size=2000, dtype=np.int64)
    day_ord, hour, weekday = clock.local_fields(ts)
    for i in range(0, len(ts), 97):
        d, h, w = clock.derive_local_time(int(ts[i]))
        assert day_ord[i] == d.toordinal()
        assert hour[i] == h
        assert weekday[i] == w


def test_local_fields_empty():
    clock = CivilClock()
    day_ord, hour, weekday = clock.local_fields(np.zeros(0, dtype=np.int64))
    assert len(day_ord) == len(hour) == len(weekday) == 0


def test_midnight_epoch_is_local_midnight():
    clock = CivilClock()
    d = date(2007, 5, 13)
    for _ in range(160):
        ts = clock.midnight_epoch(d)
        got_day, got_hour, got_weekday = clock.derive_local_time(ts)
        assert got_day == d
        assert got_hour == 0
        assert got_weekday == d.weekday()
        d += timedelta(days=1)


def test_dst_day_lengths():
    clock = CivilClock()
    def day_len(d):
        return clock.midnight_epoch(d + timedelta(days=1)) - clock.midnight_epoch(d)
    assert day_len(date(2007, 3, 25)) == 23 * 3600
    assert day_len(date(2007, 10, 28)) == 25 * 3600
    assert day_len(date(2007, 7, 1)) == 24 * 3600


def test_parse_local_round_trip():
    clock = CivilClock()
    ts = clock.parse_local("2007-07-01T12:30:00")
    dt = datetime.fromtimestamp(ts, tz=PARIS)
    assert (dt.year, dt.month, dt.day, dt.hour, dt.minute) == (2007, 7, 1, 12, 30)
    with pytest.raises(ValueError):
        clock.parse_local("2007-07-01 12:30:00")


def test_utc_offset_values():
    clock = CivilClock()
    assert clock.utc_offset(clock.parse_local("2007-07-01T12:00:00")) == 7200
    assert clock.utc_offset(clock.parse_local("2007-01-15T12:00:00")) == 3600


def test_day_ordinal_round_trip():
    assert ordinal_date(day_ordinal(date(2007, 5, 13))) == date(2007, 5, 13)
    assert day_ordinal(date(1970, 1, 1)) == date(1970, 1, 1).toordinal()


def test_iter_days():
    days = list(iter_days(date(2007, 5, 13), date(2007, 10, 13)))
    assert len(days) == 154
    assert days[0] == date(2007, 5, 13)
    assert days[-1] == date(2007, 10, 13)
    assert list(iter_days(date(2007, 5, 13), date(2007, 5, 13))) == [date(2007, 5, 13)]


def test_other_timezone():
    clock = CivilClock("UTC")
    d, h, w = clock.derive_local_time(0)
    assert (d, h, w) == (date(1970, 1, 1), 0, 3)
