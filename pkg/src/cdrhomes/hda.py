"""Home detection criteria and the bulk detection engine.

Three criterion families decide a user's home tower inside an observation
window: MA (tower with the most events), DD (tower seen on the most distinct
civil days), and TC (event count restricted to an hour interval and/or a
weekday subset). Hour intervals are half-open [start, end) and wrap past
midnight when start > end; weekends are Saturday and Sunday.

Ties on the criterion value are broken deterministically: earliest first
qualifying record, then smaller tower id. The tie_broken flag records that
the top value was shared by more than one tower.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .core import CdrRecord, TowerRegistry, UserPartition
from .timebase import CivilClock
from .windows import ObservationWindow

CRITERIA = ("MA", "DD", "TC")
DAY_FILTERS = ("all", "weekend_only", "weekday_only")

_SATURDAY, _SUNDAY = 5, 6


@dataclass(frozen=True)
class HdaSpec:
    """One parameterization of a home detection criterion."""

    name: str
    criterion: str
    tc_start_hour: int | None = None
    tc_end_hour: int | None = None
    day_filter: str = "all"

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.day_filter not in DAY_FILTERS:
            raise ValueError(f"unknown day filter {self.day_filter!r}")
        has_hours = self.tc_start_hour is not None or self.tc_end_hour is not None
        if self.criterion != "TC":
            if has_hours or self.day_filter != "all":
                raise ValueError(f"{self.criterion} takes no time constraints")
            return
        if (self.tc_start_hour is None) != (self.tc_end_hour is None):
            raise ValueError("tc_start_hour and tc_end_hour come as a pair")
        if has_hours:
            for h in (self.tc_start_hour, self.tc_end_hour):
                if not 0 <= h <= 23:
                    raise ValueError(f"hour {h} outside 0..23")
            if self.tc_start_hour == self.tc_end_hour:
                raise ValueError("empty hour interval (start == end)")
        elif self.day_filter == "all":
            raise ValueError("TC needs an hour interval or a day filter")

    @property
    def has_hour_filter(self) -> bool:
        return self.tc_start_hour is not None


CANONICAL_HDAS: tuple[HdaSpec, ...] = (
    HdaSpec("MA", "MA"),
    HdaSpec("DD", "DD"),
    HdaSpec("TC-19-9", "TC", 19, 9),
    HdaSpec("TC-19-9-WE", "TC", 19, 9, "weekend_only"),
    HdaSpec("TC-21-7", "TC", 21, 7),
    HdaSpec("TC-21-7-WE", "TC", 21, 7, "weekend_only"),
    HdaSpec("TC-9-19", "TC", 9, 19),
    HdaSpec("TC-9-19-WK", "TC", 9, 19, "weekday_only"),
    HdaSpec("TC-WE", "TC", None, None, "weekend_only"),
)

CANONICAL_HDA_NAMES: tuple[str, ...] = tuple(s.name for s in CANONICAL_HDAS)

_BY_NAME = {s.name: s for s in CANONICAL_HDAS}


def canonical_hda(name: str) -> HdaSpec:
    try:
        return _BY_NAME[name]
    except KeyError:
        known = ", ".join(CANONICAL_HDA_NAMES)
        raise ValueError(f"unknown HDA {name!r}; canonical set: {known}") from None


def hdas_by_name(names: Iterable[str]) -> list[HdaSpec]:
    return [canonical_hda(n) for n in names]


def hour_in_interval(hour: int, start: int, end: int) -> bool:
    """Membership in the half-open hour interval [start, end), wrapping at 24."""
    if start < end:
        return start <= hour < end
    return hour >= start or hour < end


def tc_filter_accepts(spec: HdaSpec, hour: int, weekday: int) -> bool:
    """Whether an event at (civil hour, weekday Mon=0) counts under a TC spec."""
    if spec.criterion != "TC":
        raise ValueError(f"{spec.name} is not a TC spec")
    if spec.has_hour_filter and not hour_in_interval(
        hour, spec.tc_start_hour, spec.tc_end_hour
    ):
        return False
    if spec.day_filter == "weekend_only":
        return weekday in (_SATURDAY, _SUNDAY)
    if spec.day_filter == "weekday_only":
        return weekday not in (_SATURDAY, _SUNDAY)
    return True


def _hour_lut(spec: HdaSpec) -> np.ndarray:
    lut = np.ones(24, dtype=bool)
    if spec.has_hour_filter:
        for h in range(24):
            lut[h] = hour_in_interval(h, spec.tc_start_hour, spec.tc_end_hour)
    return lut


def _weekday_lut(spec: HdaSpec) -> np.ndarray:
    lut = np.ones(7, dtype=bool)
    if spec.day_filter == "weekend_only":
        lut[:] = False
        lut[_SATURDAY] = lut[_SUNDAY] = True
    elif spec.day_filter == "weekday_only":
        lut[_SATURDAY] = lut[_SUNDAY] = False
    return lut


@dataclass(frozen=True)
class HomeAssignment:
    """Detection outcome for one user under one (HDA, window) cell."""

    user_id: int
    hda: str
    window: str
    home_tower: int | None
    qualifying_count: int
    tie_broken: bool


@dataclass
class BulkAssignments:
    """Columnar assignments for every user of one partition in one cell.

    home_towers uses -1 for "no home assigned"; qualifying_count keeps the
    best criterion value even when it fell below the minimum threshold.
    """

    hda: str
    window: str
    user_ids: np.ndarray  # uint64, sorted (partition user universe)
    home_towers: np.ndarray  # int64, -1 = none
    qualifying: np.ndarray  # int64
    tie_broken: np.ndarray  # bool

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_assigned(self) -> int:
        return int((self.home_towers >= 0).sum())

    def iter_assignments(self) -> Iterator[HomeAssignment]:
        for uid, home, q, tie in zip(
            self.user_ids, self.home_towers, self.qualifying, self.tie_broken
        ):
            yield HomeAssignment(
                user_id=int(uid),
                hda=self.hda,
                window=self.window,
                home_tower=int(home) if home >= 0 else None,
                qualifying_count=int(q),
                tie_broken=bool(tie),
            )


def detect_home(
    user_id: int,
    records: Iterable[CdrRecord],
    spec: HdaSpec,
    *,
    window_label: str = "",
    clock: CivilClock | None = None,
    min_qualifying: int = 1,
) -> HomeAssignment:
    """Reference per-user detection over records already filtered to a window.

    The caller guarantees every record's civil date falls inside the window;
    this path re-derives civil time per record and is meant for inspection
    and small inputs. detect_homes_bulk is the equivalent columnar engine.
    """
    clock = clock or CivilClock()
    counts: dict[int, int] = {}
    days_seen: dict[int, set[int]] = {}
    first_ts: dict[int, int] = {}
    for rec in records:
        d, hour, weekday = clock.derive_local_time(rec.timestamp)
        if spec.criterion == "TC" and not tc_filter_accepts(spec, hour, weekday):
            continue
        t = rec.tower_id
        if t not in first_ts or rec.timestamp < first_ts[t]:
            first_ts[t] = rec.timestamp
        if spec.criterion == "DD":
            days_seen.setdefault(t, set()).add(d.toordinal())
        else:
            counts[t] = counts.get(t, 0) + 1
    if spec.criterion == "DD":
        counts = {t: len(s) for t, s in days_seen.items()}
    if not counts:
        return HomeAssignment(user_id, spec.name, window_label, None, 0, False)
    best = max(counts.values())
    contenders = [t for t, c in counts.items() if c == best]
    winner = min(contenders, key=lambda t: (first_ts[t], t))
    tie = len(contenders) > 1
    if best < min_qualifying:
        return HomeAssignment(user_id, spec.name, window_label, None, best, False)
    return HomeAssignment(user_id, spec.name, window_label, winner, best, tie)


def detect_homes_bulk(
    partition: UserPartition,
    window: ObservationWindow,
    spec: HdaSpec,
    *,
    min_qualifying: int = 1,
) -> BulkAssignments:
    """Columnar detection for every user of a partition in one cell.

    Grouping is done with one lexsort per criterion pass instead of per-user
    loops; DD needs a second ordering because distinct-day counting must not
    assume civil dates are monotone in the timestamp within a tower group.
    """
    if min_qualifying < 1:
        raise ValueError("min_qualifying must be >= 1")
    n_all = partition.n_users
    home = np.full(n_all, -1, dtype=np.int64)
    qual = np.zeros(n_all, dtype=np.int64)
    tieb = np.zeros(n_all, dtype=bool)

    m = (partition.day_ords >= window.first_ord) & (
        partition.day_ords <= window.last_ord
    )
    if spec.criterion == "TC":
        if spec.has_hour_filter:
            m &= _hour_lut(spec)[partition.hours]
        if spec.day_filter != "all":
            m &= _weekday_lut(spec)[partition.weekdays]

    u = partition.users[m]
    if len(u) == 0:
        return BulkAssignments(
            spec.name, window.label, partition.user_ids, home, qual, tieb
        )
    t = partition.towers[m]
    s = partition.timestamps[m]

    # group rows by (user, tower); timestamps ascend within each group
    order = np.lexsort((s, t, u))
    gu_all, gt_all, gs_all = u[order], t[order], s[order]
    new_group = np.empty(len(gu_all), dtype=bool)
    new_group[0] = True
    new_group[1:] = (gu_all[1:] != gu_all[:-1]) | (gt_all[1:] != gt_all[:-1])
    gstart = np.flatnonzero(new_group)
    gu, gt, gfirst = gu_all[gstart], gt_all[gstart], gs_all[gstart]

    if spec.criterion == "DD":
        d = partition.day_ords[m]
        order2 = np.lexsort((d, t, u))
        d2 = d[order2]
        # (user, tower) group boundaries are position-identical in both sorts
        day_new = np.empty(len(d2), dtype=np.int64)
        day_new[0] = 1
        day_new[1:] = (new_group[1:] | (d2[1:] != d2[:-1])).astype(np.int64)
        score = np.add.reduceat(day_new, gstart)
    else:
        bounds = np.append(gstart, len(gu_all))
        score = np.diff(bounds).astype(np.int64)

    # winner per user: max score, then earliest first record, then smaller id
    order3 = np.lexsort((gt, gfirst, -score, gu))
    su = gu[order3]
    first_of_user = np.empty(len(su), dtype=bool)
    first_of_user[0] = True
    first_of_user[1:] = su[1:] != su[:-1]
    win_pos = np.flatnonzero(first_of_user)
    win_rows = order3[win_pos]
    w_users, w_towers, w_score = gu[win_rows], gt[win_rows], score[win_rows]

    w_tie = np.zeros(len(win_pos), dtype=bool)
    nxt = win_pos + 1
    ok = np.flatnonzero(nxt < len(order3))
    rows_next = order3[nxt[ok]]
    w_tie[ok] = (gu[rows_next] == w_users[ok]) & (score[rows_next] == w_score[ok])

    pos = np.searchsorted(partition.user_ids, w_users)
    home[pos] = w_towers
    qual[pos] = w_score
    tieb[pos] = w_tie
    if min_qualifying > 1:
        below = qual < min_qualifying
        home[below] = -1
        tieb[below] = False
    return BulkAssignments(
        spec.name, window.label, partition.user_ids, home, qual, tieb
    )


@dataclass
class TowerVectors:
    """Detected-home counts per tower, aligned to registry row order."""

    hda: str
    window: str
    tower_ids: np.ndarray  # int64, registry order
    x: np.ndarray  # int64 detected-home counts
    n_users: int  # user universe the assignments covered
    n_assigned: int  # users that received a home

    def merge(self, other: "TowerVectors") -> "TowerVectors":
        if (self.hda, self.window) != (other.hda, other.window):
            raise ValueError(
                f"cannot merge vectors from different cells: "
                f"{(self.hda, self.window)} vs {(other.hda, other.window)}"
            )
        if len(self.tower_ids) != len(other.tower_ids) or np.any(
            self.tower_ids != other.tower_ids
        ):
            raise ValueError("cannot merge vectors over different registries")
        return TowerVectors(
            self.hda,
            self.window,
            self.tower_ids,
            self.x + other.x,
            self.n_users + other.n_users,
            self.n_assigned + other.n_assigned,
        )


def aggregate_homes(assignments, registry: TowerRegistry) -> TowerVectors:
    """Count detected homes per tower for one (HDA, window) cell.

    Accepts a BulkAssignments or an iterable of HomeAssignment (which must
    all carry the same hda and window). A home tower missing from the
    registry is a fatal error, never a silent drop.
    """
    if isinstance(assignments, BulkAssignments):
        hda, window = assignments.hda, assignments.window
        homes = assignments.home_towers
        assigned = homes[homes >= 0]
        n_users = assignments.n_users
    else:
        items = list(assignments)
        cells = {(a.hda, a.window) for a in items}
        if len(cells) > 1:
            raise ValueError(f"assignments span multiple cells: {sorted(cells)}")
        hda, window = cells.pop() if cells else ("", "")
        assigned = np.asarray(
            [a.home_tower for a in items if a.home_tower is not None],
            dtype=np.int64,
        )
        n_users = len(items)
    x = np.zeros(len(registry), dtype=np.int64)
    if len(assigned):
        rows = registry.rows_for(assigned)
        x = np.bincount(rows, minlength=len(registry)).astype(np.int64)
    return TowerVectors(
        hda=hda,
        window=window,
        tower_ids=registry.tower_ids,
        x=x,
        n_users=n_users,
        n_assigned=int(len(assigned)),
    )


def merge_vectors(parts: Iterable[TowerVectors]) -> TowerVectors:
    """Fold per-partition vectors into one; order-free by construction."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to merge")
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out
