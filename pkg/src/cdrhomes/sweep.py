"""Grid sweeps: every (HDA, window) cell detected, scored, and persisted.

Cells are independent, so parallelism is cell-level: each cell is computed
wholly inside one process and pure numpy makes its numbers bitwise
reproducible, which keeps final report files byte-identical for any worker
count. Completed cells are appended to cells.jsonl as they land; a killed
run resumes by skipping cells already recorded there.

Worker processes use the fork start method and read the shared state from a
module global set before the pool starts; where fork is unavailable the
sweep degrades to sequential execution with identical outputs.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import multiprocessing
import os
import time
import traceback
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import IngestReport, TowerRegistry, UserPartition
from .hda import HdaSpec, detect_homes_bulk, aggregate_homes, merge_vectors
from .metrics import MetricReport, compute_metric_report
from .svgplot import line_chart
from .synth import (
    AccuracyReport,
    AccuracyRow,
    GroundTruthTable,
    score_against_truth,
)
from .windows import ObservationWindow, windows_table

CELLS_FILE = "cells.jsonl"
MANIFEST_FILE = "manifest.json"
TOWERS_DIR = "towers"
ASSIGNMENTS_DIR = "assignments"


@dataclass(frozen=True)
class SweepOptions:
    """Knobs that apply to every cell of a sweep."""

    exclusion_threshold: int = 0
    min_qualifying: int = 1
    workers: int = 1
    per_tower_exports: bool = True
    dump_assignments: bool = False
    resume: bool = False

    def __post_init__(self):
        if self.exclusion_threshold < 0:
            raise ValueError("exclusion_threshold must be >= 0")
        if self.min_qualifying < 1:
            raise ValueError("min_qualifying must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def as_dict(self) -> dict:
        return {
            "exclusion_threshold": self.exclusion_threshold,
            "min_qualifying": self.min_qualifying,
            "workers": self.workers,
            "per_tower_exports": self.per_tower_exports,
            "dump_assignments": self.dump_assignments,
            "resume": self.resume,
        }


@dataclass
class SweepResult:
    """Everything a finished sweep knows, keyed by (hda, window) labels."""

    windows: list[ObservationWindow]
    hdas: list[HdaSpec]
    reports: dict[tuple[str, str], MetricReport] = field(default_factory=dict)
    accuracy: dict[tuple[str, str], list[AccuracyRow]] = field(default_factory=dict)
    errors: dict[tuple[str, str], str] = field(default_factory=dict)

    @property
    def n_cells(self) -> int:
        return len(self.hdas) * len(self.windows)

    @property
    def n_failed(self) -> int:
        return len(self.errors)

    def report_for(self, hda: str, window: str) -> MetricReport:
        return self.reports[(hda, window)]

    def accuracy_report(self, window: ObservationWindow) -> AccuracyReport:
        rows = []
        for spec in self.hdas:
            rows.extend(self.accuracy.get((spec.name, window.label), []))
        return AccuracyReport(window=window.label, rows=rows)


@dataclass
class RunManifest:
    """Reproduction record for one sweep run."""

    created_utc: str
    version: str
    span: str
    tz_name: str
    n_partitions: int
    options: dict
    hdas: list[str]
    windows: list[dict]
    n_cells: int
    n_failed: int
    failed_cells: list[str]
    cell_status: dict
    elapsed_seconds: float
    ingest: dict | None = None
    seeds: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "tool": "cdrhomes",
            "version": self.version,
            "created_utc": self.created_utc,
            "span": self.span,
            "tz": self.tz_name,
            "n_partitions": self.n_partitions,
            "options": self.options,
            "hdas": self.hdas,
            "windows": self.windows,
            "n_cells": self.n_cells,
            "n_failed": self.n_failed,
            "failed_cells": self.failed_cells,
            "cell_status": self.cell_status,
            "elapsed_seconds": round(self.elapsed_seconds, 3),
            "ingest": self.ingest,
            "seeds": self.seeds,
            "extra": self.extra,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / MANIFEST_FILE
        _atomic_write(path, self.to_json())
        return path


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _ffmt(v) -> str:
    """Lossless float cell, empty for missing/NaN."""
    if v is None:
        return ""
    f = float(v)
    if f != f:  # NaN
        return ""
    return repr(f)


# shared state for forked workers; set in the parent before the pool starts
_STATE: dict | None = None


def _cell_key(hda: str, window: str) -> str:
    return f"{hda}|{window}"


def _compute_cell(state: dict, h_idx: int, w_idx: int) -> dict:
    spec: HdaSpec = state["hdas"][h_idx]
    window: ObservationWindow = state["windows"][w_idx]
    t0 = time.perf_counter()
    try:
        bulks = [
            detect_homes_bulk(
                part, window, spec, min_qualifying=state["min_qualifying"]
            )
            for part in state["partitions"]
        ]
        registry: TowerRegistry = state["registry"]
        vectors = merge_vectors([aggregate_homes(b, registry) for b in bulks])
        report = compute_metric_report(
            vectors,
            registry.population,
            window.duration_class,
            exclusion_threshold=state["exclusion_threshold"],
        )
        accuracy = None
        if state["truth"] is not None:
            acc = score_against_truth(
                {spec.name: bulks}, state["truth"], window, state["migration"]
            )
            accuracy = [
                [r.group, r.n_users, r.n_correct] for r in acc.rows
            ]
        assignments = None
        if state["dump_assignments"]:
            assignments = [
                (b.user_ids, b.home_towers, b.qualifying, b.tie_broken)
                for b in bulks
            ]
        return {
            "h": h_idx,
            "w": w_idx,
            "report": report,
            "x": vectors.x,
            "accuracy": accuracy,
            "assignments": assignments,
            "error": None,
            "elapsed": time.perf_counter() - t0,
        }
    except Exception:
        return {
            "h": h_idx,
            "w": w_idx,
            "report": None,
            "x": None,
            "accuracy": None,
            "assignments": None,
            "error": traceback.format_exc(limit=8),
            "elapsed": time.perf_counter() - t0,
        }


def _cell_entry(h_idx: int, w_idx: int) -> dict:
    assert _STATE is not None, "worker state missing (fork expected)"
    return _compute_cell(_STATE, h_idx, w_idx)


def _load_completed(out_dir: Path) -> dict[str, dict]:
    """Cells already recorded by an interrupted run; bad tail lines skipped."""
    path = out_dir / CELLS_FILE
    done: dict[str, dict] = {}
    if not path.exists():
        return done
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn final write from a killed run
            if rec.get("status") == "ok":
                done[_cell_key(rec["hda"], rec["window"])] = rec
    return done


def _persist_cell(out_dir: Path, rec: dict) -> None:
    with open(out_dir / CELLS_FILE, "a") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
        fh.flush()


def _write_tower_export(
    out_dir: Path, report: MetricReport, x: np.ndarray, registry: TowerRegistry
) -> None:
    path = out_dir / TOWERS_DIR / f"{report.hda}__{report.window}.csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tower_id", "lon", "lat", "x", "y", "logratio"])
    logratio = report.logratio
    for i in range(len(registry)):
        w.writerow(
            [
                int(registry.tower_ids[i]),
                repr(float(registry.lon[i])),
                repr(float(registry.lat[i])),
                int(x[i]),
                int(registry.population[i]),
                _ffmt(logratio[i]) if logratio is not None else "",
            ]
        )
    _atomic_write(path, buf.getvalue())


def _write_assignment_dump(out_dir: Path, hda: str, window: str, parts) -> None:
    path = out_dir / ASSIGNMENTS_DIR / f"{hda}__{window}.csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user_id", "home_tower", "qualifying_count", "tie_broken"])
    for user_ids, homes, qual, tie in parts:
        for uid, home, q, t in zip(user_ids, homes, qual, tie):
            w.writerow(
                [int(uid), int(home) if home >= 0 else "", int(q), int(bool(t))]
            )
    _atomic_write(path, buf.getvalue())


def run_sweep(
    partitions: list[UserPartition],
    registry: TowerRegistry,
    windows: list[ObservationWindow],
    hdas: list[HdaSpec],
    out_dir=None,
    options: SweepOptions = SweepOptions(),
    *,
    truth: GroundTruthTable | None = None,
    migration=None,  # MigrationConfig or (first_day, last_day) pair
    span: str = "",
    tz_name: str = "",
    ingest_report: IngestReport | None = None,
    seeds: dict | None = None,
) -> tuple[SweepResult, RunManifest]:
    """Compute the full grid, persisting each cell as it completes.

    With out_dir=None nothing is written (in-memory use); otherwise the
    directory is probed for writability before any computation starts, and
    emit_reports is invoked at the end. options.resume skips cells already
    recorded in an existing cells.jsonl.
    """
    t_start = time.perf_counter()
    out_path: Path | None = None
    completed: dict[str, dict] = {}
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        probe = out_path / ".write_probe"
        try:
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise OSError(f"output directory not writable: {out_path}") from exc
        if options.per_tower_exports:
            (out_path / TOWERS_DIR).mkdir(exist_ok=True)
        if options.dump_assignments:
            (out_path / ASSIGNMENTS_DIR).mkdir(exist_ok=True)
        if options.resume:
            completed = _load_completed(out_path)
        elif (out_path / CELLS_FILE).exists():
            (out_path / CELLS_FILE).unlink()

    result = SweepResult(windows=list(windows), hdas=list(hdas))
    state = {
        "partitions": partitions,
        "registry": registry,
        "windows": result.windows,
        "hdas": result.hdas,
        "min_qualifying": options.min_qualifying,
        "exclusion_threshold": options.exclusion_threshold,
        "truth": truth,
        "migration": migration,
        "dump_assignments": options.dump_assignments,
    }

    todo: list[tuple[int, int]] = []
    for h_idx, spec in enumerate(result.hdas):
        for w_idx, window in enumerate(result.windows):
            key = _cell_key(spec.name, window.label)
            if key in completed:
                rec = completed[key]
                result.reports[(spec.name, window.label)] = MetricReport.from_cell_dict(
                    rec
                )
                if rec.get("accuracy") is not None:
                    result.accuracy[(spec.name, window.label)] = [
                        AccuracyRow(spec.name, window.label, g, n, c)
                        for g, n, c in rec["accuracy"]
                    ]
            else:
                todo.append((h_idx, w_idx))

    def take(payload: dict) -> None:
        spec = result.hdas[payload["h"]]
        window = result.windows[payload["w"]]
        key = (spec.name, window.label)
        if payload["error"] is not None:
            result.errors[key] = payload["error"]
            if out_path is not None:
                _persist_cell(
                    out_path,
                    {
                        "hda": spec.name,
                        "window": window.label,
                        "status": "failed",
                        "error": payload["error"],
                        "elapsed": round(payload["elapsed"], 4),
                    },
                )
            return
        report: MetricReport = payload["report"]
        result.reports[key] = report
        if payload["accuracy"] is not None:
            result.accuracy[key] = [
                AccuracyRow(spec.name, window.label, g, n, c)
                for g, n, c in payload["accuracy"]
            ]
        if out_path is not None:
            rec = report.as_cell_dict()
            rec["status"] = "ok"
            rec["accuracy"] = payload["accuracy"]
            rec["elapsed"] = round(payload["elapsed"], 4)
            _persist_cell(out_path, rec)
            if options.per_tower_exports:
                _write_tower_export(out_path, report, payload["x"], registry)
            if options.dump_assignments and payload["assignments"] is not None:
                _write_assignment_dump(
                    out_path, spec.name, window.label, payload["assignments"]
                )

    use_workers = options.workers if len(todo) > 1 else 1
    if use_workers > 1:
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:
            ctx = None
        if ctx is None:
            use_workers = 1

    if use_workers > 1:
        global _STATE
        _STATE = state
        try:
            with concurrent.futures.ProcessPoolExecutor(
                max_workers=use_workers, mp_context=ctx
            ) as pool:
                futures = [pool.submit(_cell_entry, h, w) for h, w in todo]
                for fut in concurrent.futures.as_completed(futures):
                    take(fut.result())
        finally:
            _STATE = None
    else:
        for h, w in todo:
            take(_compute_cell(state, h, w))

    manifest = RunManifest(
        created_utc=datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        version=__version__,
        span=span,
        tz_name=tz_name,
        n_partitions=len(partitions),
        options=options.as_dict(),
        hdas=[s.name for s in result.hdas],
        windows=[
            {
                "label": w.label,
                "first_day": w.first_day.isoformat(),
                "last_day": w.last_day.isoformat(),
                "class": w.duration_class,
            }
            for w in result.windows
        ],
        n_cells=result.n_cells,
        n_failed=result.n_failed,
        failed_cells=sorted(_cell_key(h, w) for h, w in result.errors),
        cell_status={
            _cell_key(s.name, w.label): (
                "failed" if (s.name, w.label) in result.errors else "ok"
            )
            for s in result.hdas
            for w in result.windows
        },
        elapsed_seconds=time.perf_counter() - t_start,
        ingest=ingest_report.as_dict() if ingest_report else None,
        seeds=dict(seeds or {}),
    )
    if out_path is not None:
        emit_reports(result, out_path)
        manifest.write(out_path)
    return result, manifest


def _cells_in_order(result: SweepResult):
    for spec in result.hdas:
        for window in result.windows:
            key = (spec.name, window.label)
            if key in result.reports:
                yield spec, window, result.reports[key]


def emit_reports(result: SweepResult, out_dir) -> list[Path]:
    """Write the final report files; an empty grid still yields valid headers."""
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = out_path / name
        _atomic_write(path, text)
        written.append(path)

    # windows.csv: the grid audit table
    emit("windows.csv", windows_table(result.windows))

    # metrics.csv: one row per computed cell
    buf = ["hda,window,class,pearson_r,n_used,excluded"]
    for spec, window, rep in _cells_in_order(result):
        buf.append(
            f"{spec.name},{window.label},{window.duration_class},"
            f"{_ffmt(rep.pearson)},{rep.n_used},{rep.n_excluded}"
        )
    emit("metrics.csv", "\n".join(buf) + "\n")

    # correlation_over_time.csv: r against window midpoint
    buf = ["hda,window,class,midpoint,pearson_r"]
    for spec, window, rep in _cells_in_order(result):
        buf.append(
            f"{spec.name},{window.label},{window.duration_class},"
            f"{window.midpoint.isoformat()},{_ffmt(rep.pearson)}"
        )
    emit("correlation_over_time.csv", "\n".join(buf) + "\n")

    # duration_sensitivity.csv: r spread per HDA per duration class
    buf = ["hda,class,n_windows,mean_pearson,min_pearson,max_pearson"]
    for spec in result.hdas:
        for cls in _classes_in_order(result):
            rs = [
                rep.pearson
                for s, w, rep in _cells_in_order(result)
                if s.name == spec.name
                and w.duration_class == cls
                and rep.pearson is not None
            ]
            if rs:
                buf.append(
                    f"{spec.name},{cls},{len(rs)},{_ffmt(sum(rs) / len(rs))},"
                    f"{_ffmt(min(rs))},{_ffmt(max(rs))}"
                )
            else:
                buf.append(f"{spec.name},{cls},0,,,")
    emit("duration_sensitivity.csv", "\n".join(buf) + "\n")

    # criteria_sensitivity.csv: r spread across HDAs per window
    buf = ["window,class,n_hdas,mean_pearson,min_pearson,max_pearson,spread"]
    for window in result.windows:
        rs = [
            rep.pearson
            for s, w, rep in _cells_in_order(result)
            if w.label == window.label and rep.pearson is not None
        ]
        if rs:
            buf.append(
                f"{window.label},{window.duration_class},{len(rs)},"
                f"{_ffmt(sum(rs) / len(rs))},{_ffmt(min(rs))},{_ffmt(max(rs))},"
                f"{_ffmt(max(rs) - min(rs))}"
            )
        else:
            buf.append(f"{window.label},{window.duration_class},0,,,,")
    emit("criteria_sensitivity.csv", "\n".join(buf) + "\n")

    # decile_summary.csv: population-decile profile per cell
    buf = ["hda,window,bin,n,y_lo,y_hi,mean_x,std_x"]
    for spec, window, rep in _cells_in_order(result):
        for b in rep.deciles:
            buf.append(
                f"{spec.name},{window.label},{b.index},{b.n},"
                f"{_ffmt(b.y_lo)},{_ffmt(b.y_hi)},{_ffmt(b.mean_x)},{_ffmt(b.std_x)}"
            )
    emit("decile_summary.csv", "\n".join(buf) + "\n")

    # accuracy.csv only when the sweep was truth-scored
    if result.accuracy:
        buf = ["hda,window,group,n_users,n_correct,accuracy"]
        for spec in result.hdas:
            for window in result.windows:
                for r in result.accuracy.get((spec.name, window.label), []):
                    acc = "" if r.accuracy is None else repr(r.accuracy)
                    buf.append(
                        f"{r.hda},{r.window},{r.group},{r.n_users},{r.n_correct},{acc}"
                    )
        emit("accuracy.csv", "\n".join(buf) + "\n")

    written.extend(_emit_charts(result, out_path))
    return written


def _classes_in_order(result: SweepResult) -> list[str]:
    seen: list[str] = []
    for w in result.windows:
        if w.duration_class not in seen:
            seen.append(w.duration_class)
    return seen


def _emit_charts(result: SweepResult, out_path: Path) -> list[Path]:
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = out_path / name
        _atomic_write(path, text)
        written.append(path)

    # one time-series chart per duration class, a polyline per HDA
    for cls in _classes_in_order(result):
        series = []
        for spec in result.hdas:
            pts = [
                (float(w.midpoint.toordinal()), rep.pearson)
                for s, w, rep in _cells_in_order(result)
                if s.name == spec.name
                and w.duration_class == cls
                and rep.pearson is not None
            ]
            series.append((spec.name, pts))
        if any(pts for _, pts in series):
            emit(
                f"correlation_over_time_{cls}.svg",
                line_chart(
                    series,
                    title=f"Correlation with population over time ({cls} windows)",
                    x_label="window midpoint",
                    y_label="Pearson r",
                    x_date_ticks=True,
                ),
            )

    # duration sensitivity: r against window length, a series per HDA
    series = []
    for spec in result.hdas:
        pts = [
            (float(w.n_days), rep.pearson)
            for s, w, rep in _cells_in_order(result)
            if s.name == spec.name and rep.pearson is not None
        ]
        series.append((spec.name, pts))
    if any(pts for _, pts in series):
        emit(
            "duration_sensitivity.svg",
            line_chart(
                series,
                title="Correlation against observation-window length",
                x_label="window length (days)",
                y_label="Pearson r",
                scatter=True,
            ),
        )

    # criteria sensitivity: cross-HDA r spread per window over time
    series = []
    for cls in _classes_in_order(result):
        pts = []
        for window in result.windows:
            if window.duration_class != cls:
                continue
            rs = [
                rep.pearson
                for s, w, rep in _cells_in_order(result)
                if w.label == window.label and rep.pearson is not None
            ]
            if len(rs) > 1:
                pts.append((float(window.midpoint.toordinal()), max(rs) - min(rs)))
        series.append((cls, pts))
    if any(pts for _, pts in series):
        emit(
            "criteria_sensitivity.svg",
            line_chart(
                series,
                title="Spread of Pearson r across detection criteria",
                x_label="window midpoint",
                y_label="max r - min r",
                x_date_ticks=True,
            ),
        )
    return written
