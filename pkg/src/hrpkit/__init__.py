"""Toolkit for highly responsive /24 prefixes in IPv4 port-scan output.

Detects prefixes where nearly every address answers on a port, enriches
them with origin-AS context, analyzes them across ports, time, and vantage
points, joins application-layer outcomes, and builds sampling-aware target
plans that cut application-layer scan volume while keeping the unique
content identifiers reachable.
"""

from .analytics import (
    PersistenceSummary,
    PortProfile,
    PortProfileReport,
    StabilityPoint,
    VantageDiff,
    persistence,
    port_profile,
    stability_series,
    vantage_diff,
)
from .applayer import (
    AddressComparison,
    AppReportSet,
    AppResult,
    HrpAppReport,
    SuccessCdf,
    address_comparison,
    hrp_app_report,
    read_app_results,
    success_cdf,
    write_app_results_csv,
)
from .ingest import (
    IngestError,
    IngestStats,
    ScanMeta,
    format_ipv4,
    open_scan_source,
    parse_address_line,
    parse_ipv4,
)
from .planner import (
    DnsSeed,
    PlanEvaluationError,
    PlanMetrics,
    SamplePolicy,
    TargetPlan,
    build_plan,
    classify_sample,
    escalate,
    evaluate_plan,
    read_dns_seeds,
    read_plan_csv,
    write_plan_csv,
)
from .prefixes import (
    HrpThreshold,
    PrefixStat,
    PrefixTable,
    ResponsivenessHistogram,
    aggregate,
    classify,
    hrp_address_share,
    hrp_set,
    merge,
    read_prefix_stats,
    responsiveness_histogram,
    slash24_of,
    write_prefix_stats_csv,
    write_prefix_stats_jsonl,
)
from .routing import (
    AsSummary,
    RouteEntry,
    RouteParseError,
    RoutingTable,
    as_summary,
    enrich,
    load_route_table,
)

__version__ = "0.1.0"

__all__ = [
    "AddressComparison",
    "AppReportSet",
    "AppResult",
    "AsSummary",
    "DnsSeed",
    "HrpAppReport",
    "HrpThreshold",
    "IngestError",
    "IngestStats",
    "PersistenceSummary",
    "PlanEvaluationError",
    "PlanMetrics",
    "PortProfile",
    "PortProfileReport",
    "PrefixStat",
    "PrefixTable",
    "ResponsivenessHistogram",
    "RouteEntry",
    "RouteParseError",
    "RoutingTable",
    "SamplePolicy",
    "ScanMeta",
    "StabilityPoint",
    "SuccessCdf",
    "TargetPlan",
    "VantageDiff",
    "address_comparison",
    "aggregate",
    "as_summary",
    "build_plan",
    "classify",
    "classify_sample",
    "enrich",
    "escalate",
    "evaluate_plan",
    "format_ipv4",
    "hrp_address_share",
    "hrp_app_report",
    "hrp_set",
    "load_route_table",
    "merge",
    "open_scan_source",
    "parse_address_line",
    "parse_ipv4",
    "persistence",
    "port_profile",
    "read_app_results",
    "read_dns_seeds",
    "read_plan_csv",
    "read_prefix_stats",
    "responsiveness_histogram",
    "slash24_of",
    "stability_series",
    "success_cdf",
    "vantage_diff",
    "write_app_results_csv",
    "write_plan_csv",
    "write_prefix_stats_csv",
    "write_prefix_stats_jsonl",
]
