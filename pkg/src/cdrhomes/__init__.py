"""Home detection from call detail records.

Detect each user's home tower under interchangeable criteria, sweep the
detection over grids of observation windows, score the resulting per-tower
counts against ground-truth population, and generate synthetic mobility
datasets with known truth to validate the whole chain.
"""

__version__ = "0.1.0"

from .core import (
    CdrRecord,
    DatasetSpan,
    IngestError,
    IngestReport,
    TowerRegistry,
    UserPartition,
    ingest,
    partition_of,
    partition_records,
)
from .hda import (
    CANONICAL_HDA_NAMES,
    CANONICAL_HDAS,
    BulkAssignments,
    HdaSpec,
    HomeAssignment,
    TowerVectors,
    aggregate_homes,
    canonical_hda,
    detect_home,
    detect_homes_bulk,
    hdas_by_name,
    merge_vectors,
    tc_filter_accepts,
)
from .metrics import (
    DecileBin,
    MetricReport,
    UndefinedMetric,
    compute_metric_report,
    decile_summary,
    exclusion_policy,
    log_ratio,
    log_ratio_array,
    pearson_r,
)
from .sweep import RunManifest, SweepOptions, SweepResult, emit_reports, run_sweep
from .synth import (
    AccuracyReport,
    AccuracyRow,
    GroundTruthTable,
    MigrationConfig,
    SynthConfig,
    SynthResult,
    build_registry,
    generate,
    pick_touristic_towers,
    score_against_truth,
    summer_scenario,
)
from .timebase import DEFAULT_TZ, CivilClock
from .windows import (
    DURATION_CLASSES,
    ObservationWindow,
    generate_windows,
    window_contains,
    windows_table,
)

__all__ = [
    "__version__",
    "CdrRecord",
    "DatasetSpan",
    "IngestError",
    "IngestReport",
    "TowerRegistry",
    "UserPartition",
    "ingest",
    "partition_of",
    "partition_records",
    "CANONICAL_HDA_NAMES",
    "CANONICAL_HDAS",
    "BulkAssignments",
    "HdaSpec",
    "HomeAssignment",
    "TowerVectors",
    "aggregate_homes",
    "canonical_hda",
    "detect_home",
    "detect_homes_bulk",
    "hdas_by_name",
    "merge_vectors",
    "tc_filter_accepts",
    "DecileBin",
    "MetricReport",
    "UndefinedMetric",
    "compute_metric_report",
    "decile_summary",
    "exclusion_policy",
    "log_ratio",
    "log_ratio_array",
    "pearson_r",
    "RunManifest",
    "SweepOptions",
    "SweepResult",
    "emit_reports",
    "run_sweep",
    "AccuracyReport",
    "AccuracyRow",
    "GroundTruthTable",
    "MigrationConfig",
    "SynthConfig",
    "SynthResult",
    "build_registry",
    "generate",
    "pick_touristic_towers",
    "score_against_truth",
    "summer_scenario",
    "DEFAULT_TZ",
    "CivilClock",
    "DURATION_CLASSES",
    "ObservationWindow",
    "generate_windows",
    "window_contains",
    "windows_table",
]
