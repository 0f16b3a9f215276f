"""Civil-time derivation for epoch timestamps in one fixed IANA zone.

All record timestamps are UTC epoch seconds; every date/hour/weekday the rest
of the package reasons about is civil time in the dataset's zone. The bulk
path avoids per-record datetime objects by resolving the zone to a table of
UTC-offset transitions and applying it with a binary search.
"""

from __future__ import annotations

from datetime import date, datetime, timedelta
from zoneinfo import ZoneInfo

import numpy as np

DEFAULT_TZ = "Europe/Paris"

# date(1970, 1, 1).toordinal(); 1970-01-01 was a Thursday (weekday 3, Monday=0)
_EPOCH_ORDINAL = 719163
_EPOCH_WEEKDAY = 3

_DAY = 86400


class CivilClock:
    """Epoch-seconds to civil (date, hour, weekday) conversion in one zone."""

    def __init__(self, tz_name: str = DEFAULT_TZ):
        self.tz_name = tz_name
        self._tz = ZoneInfo(tz_name)
        # cached transition table: (starts asc int64, offsets int64, lo, hi)
        self._table: tuple[np.ndarray, np.ndarray, int, int] | None = None

    def __repr__(self) -> str:
        return f"CivilClock({self.tz_name!r})"

    # -- scalar path ------------------------------------------------------

    def derive_local_time(self, timestamp: int) -> tuple[date, int, int]:
        """Return (civil date, hour 0-23, weekday Mon=0..Sun=6) for one epoch."""
        dt = datetime.fromtimestamp(int(timestamp), self._tz)
        return dt.date(), dt.hour, dt.weekday()

    def utc_offset(self, timestamp: int) -> int:
        """UTC offset in whole seconds in force at the given epoch."""
        dt = datetime.fromtimestamp(int(timestamp), self._tz)
        off = dt.utcoffset()
        assert off is not None
        return int(off.total_seconds())

    def midnight_epoch(self, day: date) -> int:
        """Epoch of civil midnight opening the given date (fold=0)."""
        dt = datetime(day.year, day.month, day.day, tzinfo=self._tz)
        return int(dt.timestamp())

    def parse_local(self, text: str) -> int:
        """Epoch for an ISO 'YYYY-MM-DDTHH:MM:SS' wall-clock time in this zone."""
        naive = datetime.strptime(text, "%Y-%m-%dT%H:%M:%S")
        return int(naive.replace(tzinfo=self._tz).timestamp())

    # -- bulk path --------------------------------------------------------

    def _offsets_for(self, timestamps: np.ndarray) -> np.ndarray:
        if timestamps.size == 0:
            return np.zeros(0, dtype=np.int64)
        lo = int(timestamps.min())
        hi = int(timestamps.max())
        starts, offsets = self._transition_table(lo, hi)
        idx = np.searchsorted(starts, timestamps, side="right") - 1
        return offsets[idx]

    def local_fields(
        self, timestamps: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized civil fields for an int64 epoch array.

        Returns (day_ordinal int32, hour uint8, weekday uint8) where
        day_ordinal matches datetime.date.toordinal() and weekday is Mon=0.
        """
        ts = np.asarray(timestamps, dtype=np.int64)
        local = ts + self._offsets_for(ts)
        days = local // _DAY
        day_ord = (days + _EPOCH_ORDINAL).astype(np.int32)
        hour = ((local % _DAY) // 3600).astype(np.uint8)
        weekday = ((days + _EPOCH_WEEKDAY) % 7).astype(np.uint8)
        return day_ord, hour, weekday

    def _transition_table(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        """Piecewise-constant UTC offsets covering [lo, hi], cached and widened."""
        pad = 90 * _DAY
        cached = self._table
        if cached is not None and cached[2] <= lo and hi <= cached[3]:
            return cached[0], cached[1]
        t0, t1 = lo - pad, hi + pad
        starts = [t0]
        offsets = [self.utc_offset(t0)]
        probe = t0
        while probe < t1:
            step_end = min(probe + _DAY, t1)
            off = self.utc_offset(step_end)
            if off != offsets[-1]:
                # bisect the exact transition second in (probe, step_end]
                a, b = probe, step_end
                while b - a > 1:
                    mid = (a + b) // 2
                    if self.utc_offset(mid) == offsets[-1]:
                        a = mid
                    else:
                        b = mid
                starts.append(b)
                offsets.append(off)
            probe = step_end
        table = (
            np.asarray(starts, dtype=np.int64),
            np.asarray(offsets, dtype=np.int64),
            t0,
            t1,
        )
        self._table = table
        return table[0], table[1]


def day_ordinal(d: date) -> int:
    return d.toordinal()


def ordinal_date(ordinal: int) -> date:
    return date.fromordinal(int(ordinal))


def iter_days(first: date, last: date):
    """Yield every date from first through last inclusive."""
    d = first
    one = timedelta(days=1)
    while d <= last:
        yield d
        d += one
