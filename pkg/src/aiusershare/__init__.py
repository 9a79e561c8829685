"""AI User Share: the share of an economy's working-age population using AI tools.

Estimated from pre-aggregated desktop telemetry, scaled for device access
and mobile usage, with eligibility filtering, regional grouping and
cross-country analytics.
"""
__version__ = "0.1.0"

from .aggregate import (
    EligibilityConfig,
    EligibilityDecision,
    Verdict,
    aggregate_region,
    classify,
    connected_population_view,
    global_summary,
    impute_members,
    regional_summary,
    rolling_average,
)
from .analytics import (
    EventDelta,
    RankingRow,
    TrendFit,
    event_delta,
    loglinear_fit,
    rank_economies,
    spearman,
)
from .estimator import (
    EstimatorConfig,
    adjust_opt_in,
    combine_shares,
    device_ratio,
    device_scaling,
    estimate,
    global_context,
    mobile_factor,
    ratio_context,
    raw_usage_share,
)
from .ingest import IngestReport, TableSchema, join_snapshots, load_inputs, load_table
from .model import (
    EconomySnapshot,
    GlobalContext,
    Imputation,
    Period,
    ReferenceRecord,
    RegionDef,
    SeriesPoint,
    ShareEstimate,
    TelemetryAggregate,
    validate_snapshot,
)
from .pipeline import PeriodResult, run, run_period
