"""Independent reference implementations the package must agree with.

Everything here is deliberately naive: per-record Python loops, dict
counters, stdlib zoneinfo for civil time, math.fsum for exact two-pass
moments. No import from the package's engine modules, so an engine bug
cannot hide in its own oracle.
"""

from __future__ import annotations

import math
from collections import defaultdict
from datetime import datetime
from zoneinfo import ZoneInfo

TZ_NAME = "Europe/Paris"


def local_fields(ts: int, tz_name: str = TZ_NAME):
    """(civil date, hour, weekday Mon=0) of an epoch second."""
    dt = datetime.fromtimestamp(int(ts), tz=ZoneInfo(tz_name))
    return dt.date(), dt.hour, dt.weekday()


def user_fields(timestamps, tz_name: str = TZ_NAME):
    """Precomputed local fields for one user's timestamps, in order."""
    tz = ZoneInfo(tz_name)
    out = []
    for ts in timestamps:
        dt = datetime.fromtimestamp(int(ts), tz=tz)
        out.append((dt.date(), dt.hour, dt.weekday()))
    return out


def event_qualifies(spec, hour: int, weekday: int) -> bool:
    """Whether an event at (hour, weekday) counts under the given HDA spec."""
    if spec.criterion != "TC":
        return True
    if spec.tc_start_hour is not None:
        s, e = spec.tc_start_hour, spec.tc_end_hour
        inside = (s <= hour < e) if s < e else (hour >= s or hour < e)
        if not inside:
            return False
    if spec.day_filter == "weekend_only" and weekday < 5:
        return False
    if spec.day_filter == "weekday_only" and weekday >= 5:
        return False
    return True


def brute_force_home(
    spec,
    towers,
    timestamps,
    fields,
    first_day,
    last_day,
    min_qualifying: int = 1,
):
    """(home_tower | None, qualifying_count, tie_broken) for one user.

    fields must be user_fields(timestamps). Counting rule: MA counts
    qualifying events, DD counts distinct civil days with a qualifying
    event, TC counts events passing the hour/day filter. Winner is the
    max count, ties broken by earliest first qualifying timestamp, then
    by smaller tower id; tie_broken reports whether the top count was
    shared at all.
    """
    counts: dict[int, int] = defaultdict(int)
    days: dict[int, set] = defaultdict(set)
    first_ts: dict[int, int] = {}
    for t, ts, (d, hour, wd) in zip(towers, timestamps, fields):
        if not (first_day <= d <= last_day):
            continue
        if not event_qualifies(spec, hour, wd):
            continue
        t = int(t)
        ts = int(ts)
        if t not in first_ts or ts < first_ts[t]:
            first_ts[t] = ts
        counts[t] += 1
        days[t].add(d)
    if spec.criterion == "DD":
        counts = {t: len(s) for t, s in days.items()}
    if not counts:
        return None, 0, False
    best = max(counts.values())
    contenders = [t for t, c in counts.items() if c == best]
    winner = min(contenders, key=lambda t: (first_ts[t], t))
    if best < min_qualifying:
        return None, best, False
    return winner, best, len(contenders) > 1


def two_pass_pearson(x, y) -> float:
    """Classic mean-first Pearson with exact fsum accumulation."""
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    n = len(xs)
    if n != len(ys) or n < 2:
        raise ValueError("need two equal-length vectors of >= 2 points")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((a - mx) ** 2 for a in xs)
    syy = math.fsum((b - my) ** 2 for b in ys)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("constant input")
    return sxy / math.sqrt(sxx) / math.sqrt(syy)


def decile_bins(x, y):
    """[(n, y_lo, y_hi, mean_x, std_x)] over ascending-y deciles 1..9."""
    n = len(x)
    if n < 10:
        return None
    order = sorted(range(n), key=lambda i: (y[i], x[i]))
    xs = [float(x[i]) for i in order]
    ys = [float(y[i]) for i in order]
    out = []
    for i in range(9):
        lo = i * n // 10
        hi = (i + 1) * n // 10
        seg = xs[lo:hi]
        m = math.fsum(seg) / len(seg)
        var = math.fsum((v - m) ** 2 for v in seg) / len(seg)
        out.append((hi - lo, ys[lo], ys[hi - 1], m, math.sqrt(var)))
    return out
