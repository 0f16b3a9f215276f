"""Synthetic CDR generator with known per-user ground truth.

Every user gets an independent RNG stream keyed by (seed, user id), and all
per-user draws happen in a fixed order whether or not a branch uses them, so:
adding users never perturbs existing traces, and raising the migration
fraction only turns additional users into migrants while every non-migrant's
records stay byte-identical (monotone degradation).

Daily event counts follow a zero-based geometric family with mean equal to
daily_event_rate (rate 6 puts the median at 4 events per day). Night hours
for the generative home bias are 20:00-08:00, deliberately different from
every canonical TC hour interval (19-9, 21-7, 9-19) so no consumer filter
coincides with the truth that produced the data.

Daytime work activity disperses uniformly over a small pool of nearby work
sites whose slot 0 is the home tower itself. The aggregate work share can
therefore exceed the direct home share while the home tower still ends up
the single busiest business-hour tower in the long run: short windows are
noisy for daytime criteria, long windows converge back toward home.

During a user's personal stay away, the destination tower takes over the
home tower's night and day anchor shares, neighbor wandering moves to the
destination's neighborhood, and the work-anchored share of day events
wanders there too: a holidaying user cannot produce events at a work tower
far away, and tourists do not commute. Keeping the destination's anchor
shares symmetric with home means every detection criterion weighs away
evidence against home evidence at the same rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from datetime import date
from pathlib import Path

import numpy as np

from .core import DatasetSpan, TowerRegistry, write_records_csv
from .hda import BulkAssignments, HomeAssignment
from .timebase import DEFAULT_TZ, CivilClock, iter_days
from .windows import ObservationWindow

NIGHT_START_HOUR = 20
NIGHT_END_HOUR = 8

_TAG_TOWERS = 1
_TAG_USER = 2

_CLUSTERED_SHARE = 0.7
_CLUSTER_SPREAD = 0.25
_BOX = 10.0
_POP_SIGMA = 1.2


@dataclass(frozen=True)
class MigrationConfig:
    """A seasonal relocation shock: who leaves, when, and where to.

    Each migrant draws a personal stay of min_stay_days..range-length days
    starting at a random offset inside the range, so stays are staggered the
    way real holidays are: some users are away long enough that even a
    full-span window misplaces them, others recover.
    """

    first_day: date
    last_day: date
    fraction: float
    touristic_towers: tuple[int, ...]
    min_stay_days: int = 28

    def __post_init__(self):
        if self.last_day < self.first_day:
            raise ValueError("migration range ends before it starts")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"migration fraction {self.fraction} outside [0, 1]")
        if self.fraction > 0 and not self.touristic_towers:
            raise ValueError("migration with no touristic destination towers")
        if len(set(self.touristic_towers)) != len(self.touristic_towers):
            raise ValueError("duplicate touristic tower ids")
        if not 1 <= self.min_stay_days <= self.n_range_days:
            raise ValueError(
                f"min_stay_days {self.min_stay_days} outside "
                f"1..{self.n_range_days} (range length)"
            )

    @property
    def n_range_days(self) -> int:
        return (self.last_day - self.first_day).days + 1


@dataclass(frozen=True)
class SynthConfig:
    """Full parameterization of one synthetic dataset."""

    seed: int
    n_towers: int
    n_population: int
    span: DatasetSpan
    market_share: float = 0.28
    daily_event_rate: float = 6.0
    home_call_share_night: float = 0.85
    work_call_share_day: float = 0.6
    home_call_share_day: float = 0.3
    work_pool_size: int = 6
    neighbor_pool_size: int = 8
    migration: MigrationConfig | None = None
    tz_name: str = DEFAULT_TZ

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.n_towers < 1:
            raise ValueError("need at least one tower")
        if self.n_population < 0:
            raise ValueError("population must be non-negative")
        if not 0.0 < self.market_share <= 1.0:
            raise ValueError(f"market share {self.market_share} outside (0, 1]")
        if self.daily_event_rate <= 0:
            raise ValueError("daily event rate must be positive")
        for name in (
            "home_call_share_night",
            "work_call_share_day",
            "home_call_share_day",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.work_call_share_day + self.home_call_share_day > 1.0:
            raise ValueError("day shares (work + home) exceed 1")
        if self.work_pool_size < 0 or self.neighbor_pool_size < 0:
            raise ValueError("pool sizes must be non-negative")

    @property
    def n_subscribers(self) -> int:
        # floor of the product; epsilon guards float artifacts like 0.29*100
        return int(math.floor(self.market_share * self.n_population + 1e-9))

    def echo(self) -> dict:
        """All fields flattened to strings, defaults included, for manifests."""
        out: dict[str, str] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "span":
                out["span"] = str(v)
            elif f.name == "migration":
                if v is None:
                    out["migration"] = "none"
                else:
                    out["migration_range"] = f"{v.first_day}..{v.last_day}"
                    out["migration_fraction"] = repr(v.fraction)
                    out["min_stay_days"] = str(v.min_stay_days)
                    out["touristic_towers"] = ",".join(
                        str(t) for t in v.touristic_towers
                    )
            elif isinstance(v, float):
                out[f.name] = repr(v)
            else:
                out[f.name] = str(v)
        out["n_subscribers"] = str(self.n_subscribers)
        out["night_hours"] = f"{NIGHT_START_HOUR}..{NIGHT_END_HOUR}"
        out["event_count_family"] = "geometric_zero_based"
        return out


@dataclass
class GroundTruthTable:
    """Per-user truth: home, work, and migration destination (-1 = stays)."""

    user_ids: np.ndarray  # uint64, sorted
    home_towers: np.ndarray  # int64
    work_towers: np.ndarray  # int64
    migration_towers: np.ndarray  # int64, -1 for non-migrants

    def __post_init__(self):
        order = np.argsort(self.user_ids, kind="stable")
        self.user_ids = self.user_ids[order]
        self.home_towers = self.home_towers[order]
        self.work_towers = self.work_towers[order]
        self.migration_towers = self.migration_towers[order]

    def __len__(self) -> int:
        return len(self.user_ids)

    @property
    def is_migrant(self) -> np.ndarray:
        return self.migration_towers >= 0

    def rows_for_users(self, user_ids: np.ndarray) -> np.ndarray:
        """Truth row per user id; any user missing from the table is fatal."""
        uids = np.asarray(user_ids, dtype=np.uint64)
        i = np.searchsorted(self.user_ids, uids)
        i_clip = np.minimum(i, len(self.user_ids) - 1)
        ok = (i < len(self.user_ids)) & (self.user_ids[i_clip] == uids)
        if not ok.all():
            bad = int(uids[~ok][0])
            raise KeyError(f"user {bad} has no ground-truth row")
        return i_clip

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user_id", "home_tower", "work_tower", "migration_tower"])
            for uid, h, wk, m in zip(
                self.user_ids, self.home_towers, self.work_towers, self.migration_towers
            ):
                w.writerow([int(uid), int(h), int(wk), int(m) if m >= 0 else ""])

    @classmethod
    def read_csv(cls, path) -> "GroundTruthTable":
        uids, homes, works, migs = [], [], [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0] == "user_id":
                    continue
                if len(row) != 4:
                    raise ValueError(f"bad truth row {row!r}")
                uids.append(int(row[0]))
                homes.append(int(row[1]))
                works.append(int(row[2]))
                migs.append(int(row[3]) if row[3] != "" else -1)
        return cls(
            np.asarray(uids, dtype=np.uint64),
            np.asarray(homes, dtype=np.int64),
            np.asarray(works, dtype=np.int64),
            np.asarray(migs, dtype=np.int64),
        )


@dataclass
class SynthResult:
    """A generated dataset: registry, truth, and time-sorted record columns."""

    config: SynthConfig
    registry: TowerRegistry
    truth: GroundTruthTable
    users: np.ndarray  # uint64
    towers: np.ndarray  # int64
    timestamps: np.ndarray  # int64

    @property
    def n_records(self) -> int:
        return len(self.users)

    def write_records(self, path) -> None:
        write_records_csv(path, self.users, self.towers, self.timestamps)


def build_registry(seed: int, n_towers: int, n_population: int) -> TowerRegistry:
    """Tower layout and population, reproducible from the three arguments.

    70% of towers scatter around a handful of cluster centers (urban), the
    rest spread uniformly; population is a multinomial over heavy-tailed
    lognormal weights so totals are exact.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_TOWERS]))
    ids = np.arange(1, n_towers + 1, dtype=np.int64)
    n_clustered = int(round(_CLUSTERED_SHARE * n_towers))
    n_centers = max(1, n_towers // 25)
    centers = rng.uniform(0.0, _BOX, size=(n_centers, 2))
    assign = rng.integers(0, n_centers, size=n_clustered)
    clustered = centers[assign] + rng.normal(0.0, _CLUSTER_SPREAD, size=(n_clustered, 2))
    scattered = rng.uniform(0.0, _BOX, size=(n_towers - n_clustered, 2))
    pos = np.vstack([clustered, scattered])
    weights = rng.lognormal(mean=0.0, sigma=_POP_SIGMA, size=n_towers)
    population = rng.multinomial(n_population, weights / weights.sum())
    return TowerRegistry(ids, pos[:, 0], pos[:, 1], population)


def pick_touristic_towers(registry: TowerRegistry, k: int) -> tuple[int, ...]:
    """The k least-populated towers (ties by id): plausible holiday spots."""
    if not 1 <= k <= len(registry):
        raise ValueError(f"cannot pick {k} touristic towers from {len(registry)}")
    order = np.lexsort((registry.tower_ids, registry.population))
    return tuple(int(t) for t in registry.tower_ids[order[:k]])


def _nearest_pools(lon: np.ndarray, lat: np.ndarray, k: int) -> np.ndarray:
    """Row indices of the k nearest other towers per tower, ties by index."""
    n = len(lon)
    k = min(k, n - 1)
    if k <= 0:
        return np.zeros((n, 0), dtype=np.int64)
    pts = np.stack([lon, lat], axis=1)
    pools = np.empty((n, k), dtype=np.int64)
    chunk = 512
    for i0 in range(0, n, chunk):
        i1 = min(i0 + chunk, n)
        d2 = ((pts[i0:i1, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        d2[np.arange(i1 - i0), np.arange(i0, i1)] = np.inf  # exclude self
        pools[i0:i1] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return pools


def generate(config: SynthConfig) -> SynthResult:
    """Produce one deterministic synthetic dataset from a config."""
    clock = CivilClock(config.tz_name)
    registry = build_registry(config.seed, config.n_towers, config.n_population)
    n_subs = config.n_subscribers

    pop = registry.population.astype(np.float64)
    if n_subs > 0 and pop.sum() <= 0:
        raise ValueError("population is all zeros; cannot draw home towers")

    days = list(iter_days(config.span.first_day, config.span.last_day))
    n_days = len(days)
    boundaries = [clock.midnight_epoch(d) for d in days]
    after_last = date.fromordinal(config.span.last_day.toordinal() + 1)
    boundaries.append(clock.midnight_epoch(after_last))
    midnights = np.asarray(boundaries[:-1], dtype=np.int64)
    day_len = np.diff(np.asarray(boundaries, dtype=np.int64))  # DST days differ

    home_cdf = np.cumsum(pop / pop.sum()) if pop.sum() > 0 else np.ones(len(pop))
    # work pool slot 0 is the home tower itself: dispersing day activity over
    # the pool hands home an extra 1/pool_size of the work share, keeping it
    # the long-run modal business-hour tower
    if config.work_pool_size >= 1:
        near = _nearest_pools(registry.lon, registry.lat, config.work_pool_size - 1)
        self_col = np.arange(len(registry), dtype=np.int64)[:, None]
        work_pools = np.concatenate([self_col, near], axis=1)
    else:
        work_pools = np.zeros((len(registry), 0), dtype=np.int64)
    nb_pools = _nearest_pools(registry.lon, registry.lat, config.neighbor_pool_size)
    nb_k = nb_pools.shape[1]

    mig = config.migration
    if mig is not None and mig.fraction > 0:
        if not (
            config.span.contains(mig.first_day)
            and config.span.contains(mig.last_day)
        ):
            raise ValueError(
                f"migration range {mig.first_day}..{mig.last_day} not inside "
                f"span {config.span}"
            )
        tour_rows = registry.rows_for(np.asarray(mig.touristic_towers, dtype=np.int64))
        mig_start_idx = (mig.first_day - config.span.first_day).days
        mig_span_days = mig.n_range_days
        mig_stay_spread = mig_span_days - mig.min_stay_days + 1
    else:
        mig = None
        tour_rows = np.zeros(0, dtype=np.int64)
        mig_start_idx = 0
        mig_span_days = 0
        mig_stay_spread = 1

    p_event = 1.0 / (1.0 + config.daily_event_rate)
    day_index = np.arange(n_days)

    uid_col: list[np.ndarray] = []
    tower_col: list[np.ndarray] = []
    ts_col: list[np.ndarray] = []
    t_home = np.empty(n_subs, dtype=np.int64)
    t_work = np.empty(n_subs, dtype=np.int64)
    t_mig = np.full(n_subs, -1, dtype=np.int64)

    for i in range(n_subs):
        uid = i + 1
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, _TAG_USER, uid]))
        # fixed draw order; every branch consumes the same stream positions
        u_home = rng.random()
        u_work = rng.random()
        u_mig = rng.random()
        u_dest = rng.random()
        u_stay_len = rng.random()
        u_stay_off = rng.random()
        counts = rng.geometric(p_event, size=n_days) - 1
        total = int(counts.sum())
        secs = rng.random(total)
        branch = rng.random(total)
        pick = rng.random(total)

        home_row = min(int(np.searchsorted(home_cdf, u_home, side="right")), len(pop) - 1)
        wp = work_pools[home_row]
        work_row = int(wp[int(u_work * len(wp))]) if len(wp) else home_row
        migrant = mig is not None and u_mig < mig.fraction
        dest_row = int(tour_rows[int(u_dest * len(tour_rows))]) if migrant else home_row

        t_home[i] = registry.tower_ids[home_row]
        t_work[i] = registry.tower_ids[work_row]
        if migrant:
            t_mig[i] = registry.tower_ids[dest_row]
        if total == 0:
            continue

        d_idx = np.repeat(day_index, counts)
        offs = (secs * day_len[d_idx]).astype(np.int64)
        ts = midnights[d_idx] + offs
        hour = offs // 3600
        night = (hour >= NIGHT_START_HOUR) | (hour < NIGHT_END_HOUR)

        if migrant:
            stay = mig.min_stay_days + int(u_stay_len * mig_stay_spread)
            a0 = mig_start_idx + int(u_stay_off * (mig_span_days - stay + 1))
            away = (d_idx >= a0) & (d_idx < a0 + stay)
        else:
            away = np.zeros(total, dtype=bool)
        base_home = np.where(away, dest_row, home_row)
        if nb_k > 0:
            wander = nb_pools[base_home, (pick * nb_k).astype(np.int64)]
        else:
            wander = base_home
        # Business-hour activity disperses over the whole work pool (slot 0
        # of which is the home tower), so no single work site outweighs the
        # home tower once enough days accumulate. Tourists neither commute
        # nor disperse: away-day work-share events stay at the destination,
        # which makes a long stay flip daytime criteria sooner than night
        # ones.
        if len(wp):
            work_scatter = wp[(pick * len(wp)).astype(np.int64)]
        else:
            work_scatter = np.full(total, home_row, dtype=np.int64)
        day_work_rows = np.where(away, base_home, work_scatter)
        day_cut = config.work_call_share_day + config.home_call_share_day
        day_rows = np.where(
            branch < config.work_call_share_day,
            day_work_rows,
            np.where(branch < day_cut, base_home, wander),
        )
        night_rows = np.where(
            branch < config.home_call_share_night, base_home, wander
        )
        rows = np.where(night, night_rows, day_rows)

        uid_col.append(np.full(total, uid, dtype=np.uint64))
        tower_col.append(registry.tower_ids[rows])
        ts_col.append(ts)

    if uid_col:
        users = np.concatenate(uid_col)
        towers = np.concatenate(tower_col)
        stamps = np.concatenate(ts_col)
    else:
        users = np.zeros(0, dtype=np.uint64)
        towers = np.zeros(0, dtype=np.int64)
        stamps = np.zeros(0, dtype=np.int64)

    order = np.lexsort((towers, users, stamps))
    truth = GroundTruthTable(
        user_ids=np.arange(1, n_subs + 1, dtype=np.uint64),
        home_towers=t_home,
        work_towers=t_work,
        migration_towers=t_mig,
    )
    return SynthResult(
        config=config,
        registry=registry,
        truth=truth,
        users=users[order],
        towers=towers[order],
        timestamps=stamps[order],
    )


@dataclass(frozen=True)
class AccuracyRow:
    """Detection accuracy for one HDA and one user subgroup."""

    hda: str
    window: str
    group: str  # all | migrant | non_migrant
    n_users: int
    n_correct: int

    @property
    def accuracy(self) -> float | None:
        return self.n_correct / self.n_users if self.n_users else None


@dataclass
class AccuracyReport:
    window: str
    rows: list[AccuracyRow]

    def by_group(self, hda: str) -> dict[str, AccuracyRow]:
        return {r.group: r for r in self.rows if r.hda == hda}

    def as_csv(self) -> str:
        lines = ["hda,window,group,n_users,n_correct,accuracy"]
        for r in self.rows:
            acc = "" if r.accuracy is None else repr(r.accuracy)
            lines.append(
                f"{r.hda},{r.window},{r.group},{r.n_users},{r.n_correct},{acc}"
            )
        return "\n".join(lines) + "\n"


def _assignment_arrays(assignments) -> tuple[np.ndarray, np.ndarray]:
    """Normalize assignment containers to (user_ids, home_towers[-1=none])."""
    if isinstance(assignments, BulkAssignments):
        return assignments.user_ids, assignments.home_towers
    if isinstance(assignments, (list, tuple)) and assignments and isinstance(
        assignments[0], BulkAssignments
    ):
        uids = np.concatenate([a.user_ids for a in assignments])
        homes = np.concatenate([a.home_towers for a in assignments])
        return uids, homes
    items = list(assignments)
    uids = np.asarray([a.user_id for a in items], dtype=np.uint64)
    homes = np.asarray(
        [a.home_tower if a.home_tower is not None else -1 for a in items],
        dtype=np.int64,
    )
    return uids, homes


def score_against_truth(
    assignments_by_hda: dict,
    truth: GroundTruthTable,
    window: ObservationWindow,
    migration: "MigrationConfig | tuple[date, date] | None" = None,
) -> AccuracyReport:
    """Fraction of users whose detected home matches the true home.

    Truth is the pre-migration home. Users count as migrants only when they
    have a destination AND the window overlaps the migration range (which
    the truth table alone cannot date, hence the explicit argument, either a
    MigrationConfig or a bare (first_day, last_day) pair). An unassigned
    user is simply wrong, never dropped from the denominator.
    """
    if isinstance(migration, tuple):
        mig_first, mig_last = migration
    elif migration is not None:
        mig_first, mig_last = migration.first_day, migration.last_day
    else:
        mig_first = mig_last = None
    overlap = mig_first is not None and window.overlaps(mig_first, mig_last)
    rows: list[AccuracyRow] = []
    for hda_name in assignments_by_hda:
        uids, homes = _assignment_arrays(assignments_by_hda[hda_name])
        tr = truth.rows_for_users(uids)
        correct = homes == truth.home_towers[tr]
        migrant = truth.is_migrant[tr] & overlap
        for group, mask in (
            ("all", np.ones(len(uids), dtype=bool)),
            ("migrant", migrant),
            ("non_migrant", ~migrant),
        ):
            rows.append(
                AccuracyRow(
                    hda=hda_name,
                    window=window.label,
                    group=group,
                    n_users=int(mask.sum()),
                    n_correct=int((correct & mask).sum()),
                )
            )
    return AccuracyReport(window=window.label, rows=rows)


def summer_scenario(
    seed: int,
    *,
    n_towers: int = 60,
    n_population: int = 10000,
    span: DatasetSpan | None = None,
    migration_range: tuple[date, date] = (date(2007, 6, 1), date(2007, 9, 30)),
    migration_fraction: float = 0.3,
    min_stay_days: int = 30,
    n_touristic: int = 6,
    daily_event_rate: float = 1.2,
    **overrides,
) -> SynthConfig:
    """Canonical demonstration config: a summer relocation shock mid-span.

    Personal stays range from one month up to the whole four-month range, so
    the away period dominates some migrants' records but not others: short
    windows inside the range are badly distorted, while the full span
    recovers only part of the cohort (mitigation, not immunity).

    Touristic destinations are the least-populated towers of the registry
    this exact config will produce (the registry depends only on seed,
    n_towers and n_population, so it can be built ahead of the full config).
    """
    span = span or DatasetSpan(date(2007, 5, 13), date(2007, 10, 13))
    registry = build_registry(seed, n_towers, n_population)
    touristic = pick_touristic_towers(registry, n_touristic)
    migration = MigrationConfig(
        first_day=migration_range[0],
        last_day=migration_range[1],
        fraction=migration_fraction,
        touristic_towers=touristic,
        min_stay_days=min_stay_days,
    )
    return SynthConfig(
        seed=seed,
        n_towers=n_towers,
        n_population=n_population,
        span=span,
        daily_event_rate=daily_event_rate,
        migration=migration,
        **overrides,
    )
