"""Joins of application-layer scan outcomes with HRP classifications.

Results arrive as one row per probed address with a status and, for
successes, an optional content identifier (certificate hash for TLS, body
hash for HTTP). The join is against the port scan's occupancy table: the
denominator for a prefix is its previously responsive address count, and
results aimed at addresses the port scan never saw are excluded and
counted as anomalies. Repeated rows for one address keep the first row.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable

from .ingest import ScanMeta, format_ipv4, parse_ipv4
from .prefixes import PrefixTable

SUCCESS = "success"
APP_ERROR = "app_error"
UNREACHABLE = "unreachable"
STATUSES = (SUCCESS, APP_ERROR, UNREACHABLE)

APP_RESULT_COLUMNS = ("ip", "port", "proto", "status", "identifier")


@dataclass(frozen=True)
class AppResult:
    """Outcome of one application-layer probe."""

    target: int
    meta: ScanMeta
    status: str
    identifier: str | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}, got {self.status!r}")
        if self.identifier is not None and self.status != SUCCESS:
            raise ValueError("identifier is only valid on success results")


@dataclass(frozen=True)
class HrpAppReport:
    """Application-layer outcome of one HRP.

    same_identifier is true only when every success carries an identifier
    and all of them are equal; dominant_identifier_share is the share of
    successes carrying the most common identifier (0 when no success has
    one). gt90_success compares success_count/denominator > 9/10 exactly.
    """

    prefix: int
    denominator: int
    success_count: int
    success_fraction: float
    any_success: bool
    gt90_success: bool
    same_identifier: bool
    dominant_identifier_share: float


@dataclass
class AppReportSet:
    """Per-HRP reports plus join accounting."""

    reports: list[HrpAppReport]
    anomaly_count: int  # results at addresses without an occupancy bit
    duplicate_count: int  # repeated result rows for one address (first kept)


@dataclass
class AddressComparison:
    """Address-level success rates inside vs outside HRPs for one port.

    Rates are None when their partition is empty (undefined, not zero).
    gt90_subset_share is the share of HRP successes that sit in prefixes
    with >90% success; gt90_same_identifier_share is the share of those
    that sit in single-identifier prefixes.
    """

    non_hrp_targets: int
    non_hrp_successes: int
    hrp_targets: int
    hrp_successes: int
    non_hrp_success_rate: float | None
    hrp_success_rate: float | None
    gt90_subset_share: float | None
    gt90_same_identifier_share: float | None


@dataclass
class SuccessCdf:
    """Cumulative distribution of per-HRP success counts over 0..256."""

    total_reports: int
    cumulative: tuple[float, ...]  # index c: share of reports with success_count <= c

    def at(self, success_count: int) -> float:
        return self.cumulative[success_count]


def _dedupe(results: Iterable[AppResult], occupancy: PrefixTable) -> tuple[dict[int, AppResult], int, int]:
    """First result per target, with duplicate and anomaly counts."""
    by_target: dict[int, AppResult] = {}
    duplicates = 0
    anomalies = 0
    port_key = occupancy.meta.port_key()
    for r in results:
        if r.meta.port_key() != port_key:
            raise ValueError(
                f"result port/proto {r.meta.protocol}/{r.meta.port} does not match "
                f"occupancy {port_key[0]}/{port_key[1]}"
            )
        if r.target in by_target:
            duplicates += 1
            continue
        if not occupancy.has_address(r.target):
            anomalies += 1
            continue
        by_target[r.target] = r
    return by_target, duplicates, anomalies


def hrp_app_report(
    results: Iterable[AppResult],
    hrps: Iterable[int],
    occupancy: PrefixTable,
    exclude_app_errors: bool = False,
) -> AppReportSet:
    """Per-HRP application-layer report (every HRP appears, ascending).

    By default app_error counts as a failed target. With exclude_app_errors
    those targets are disregarded entirely: they leave the denominator, so a
    prefix where every reachable host trips an SNI-style error is judged on
    the remaining targets only.
    """
    hrp_prefixes = sorted(set(hrps))
    missing = [p for p in hrp_prefixes if not occupancy.count(p)]
    if missing:
        raise ValueError(f"HRPs missing from the occupancy table: {missing[:5]}")
    by_target, duplicates, anomalies = _dedupe(results, occupancy)
    successes: dict[int, list[AppResult]] = defaultdict(list)
    app_errors: Counter[int] = Counter()
    hrp_set = set(hrp_prefixes)
    for target, r in by_target.items():
        prefix = target >> 8
        if prefix not in hrp_set:
            continue
        if r.status == SUCCESS:
            successes[prefix].append(r)
        elif r.status == APP_ERROR:
            app_errors[prefix] += 1
    reports = []
    for prefix in hrp_prefixes:
        denominator = occupancy.count(prefix)
        if exclude_app_errors:
            denominator -= app_errors[prefix]
        prefix_successes = successes.get(prefix, [])
        success_count = len(prefix_successes)
        identifiers = [r.identifier for r in prefix_successes if r.identifier is not None]
        dominant = max(Counter(identifiers).values()) if identifiers else 0
        reports.append(
            HrpAppReport(
                prefix=prefix,
                denominator=denominator,
                success_count=success_count,
                success_fraction=success_count / denominator if denominator else 0.0,
                any_success=success_count > 0,
                gt90_success=success_count * 10 > denominator * 9 if denominator else False,
                same_identifier=(
                    success_count > 0
                    and len(identifiers) == success_count
                    and len(set(identifiers)) == 1
                ),
                dominant_identifier_share=dominant / success_count if success_count else 0.0,
            )
        )
    return AppReportSet(reports=reports, anomaly_count=anomalies, duplicate_count=duplicates)


def address_comparison(
    results: Iterable[AppResult], hrps: Iterable[int], occupancy: PrefixTable
) -> AddressComparison:
    """Success rates of non-HRP vs HRP addresses, plus the >90% subset shares."""
    results = list(results)
    hrp_set = set(hrps)
    report_set = hrp_app_report(results, hrp_set, occupancy)
    gt90 = {r.prefix for r in report_set.reports if r.gt90_success}
    gt90_same_id = {r.prefix for r in report_set.reports if r.gt90_success and r.same_identifier}
    by_target, _, _ = _dedupe(results, occupancy)
    non_hrp_targets = non_hrp_successes = 0
    hrp_targets = hrp_successes = 0
    gt90_successes = gt90_same_id_successes = 0
    for target, r in by_target.items():
        prefix = target >> 8
        ok = r.status == SUCCESS
        if prefix in hrp_set:
            hrp_targets += 1
            if ok:
                hrp_successes += 1
                if prefix in gt90:
                    gt90_successes += 1
                    if prefix in gt90_same_id:
                        gt90_same_id_successes += 1
        else:
            non_hrp_targets += 1
            if ok:
                non_hrp_successes += 1
    return AddressComparison(
        non_hrp_targets=non_hrp_targets,
        non_hrp_successes=non_hrp_successes,
        hrp_targets=hrp_targets,
        hrp_successes=hrp_successes,
        non_hrp_success_rate=non_hrp_successes / non_hrp_targets if non_hrp_targets else None,
        hrp_success_rate=hrp_successes / hrp_targets if hrp_targets else None,
        gt90_subset_share=gt90_successes / hrp_successes if hrp_successes else None,
        gt90_same_identifier_share=(
            gt90_same_id_successes / gt90_successes if gt90_successes else None
        ),
    )


def success_cdf(reports: Iterable[HrpAppReport]) -> SuccessCdf:
    """Nondecreasing step function over success counts 0..256 (all zero when empty)."""
    counts = Counter(r.success_count for r in reports)
    total = sum(counts.values())
    cumulative = []
    running = 0
    for c in range(257):
        running += counts.get(c, 0)
        cumulative.append(running / total if total else 0.0)
    return SuccessCdf(total_reports=total, cumulative=tuple(cumulative))


def write_app_results_csv(results: Iterable[AppResult], out: IO[str]) -> None:
    """CSV form; the identifier field is empty when absent."""
    out.write(",".join(APP_RESULT_COLUMNS) + "\n")
    for r in results:
        identifier = r.identifier if r.identifier is not None else ""
        out.write(f"{format_ipv4(r.target)},{r.meta.port},{r.meta.protocol},{r.status},{identifier}\n")


def read_app_results(
    lines: Iterable[str],
    scan_id: str,
    timestamp: datetime | None = None,
    vantage: str | None = None,
) -> list[AppResult]:
    """Read the CSV form back; port/proto must agree across rows."""
    if timestamp is None:
        timestamp = datetime(1970, 1, 1, tzinfo=timezone.utc)
    results: list[AppResult] = []
    meta: ScanMeta | None = None
    header_seen = False
    for line_number, line in enumerate(lines, start=1):
        row = line.rstrip("\r\n")
        if not row or row.startswith("#"):
            continue
        if not header_seen:
            if row.split(",")[0].strip() != "ip":
                raise ValueError(f"line {line_number}: expected header row {APP_RESULT_COLUMNS}")
            header_seen = True
            continue
        fields = row.split(",")
        if len(fields) != len(APP_RESULT_COLUMNS):
            raise ValueError(f"line {line_number}: expected {len(APP_RESULT_COLUMNS)} fields, got {len(fields)}")
        ip_text, port_text, proto, status, identifier = (f.strip() for f in fields)
        target = parse_ipv4(ip_text)
        if target is None:
            raise ValueError(f"line {line_number}: invalid address {ip_text!r}")
        if meta is None:
            meta = ScanMeta(proto, int(port_text), scan_id, timestamp, vantage)
        elif (proto, int(port_text)) != meta.port_key():
            raise ValueError(
                f"line {line_number}: port/proto mismatch within file: "
                f"{proto}/{port_text} vs {meta.protocol}/{meta.port}"
            )
        results.append(AppResult(target, meta, status, identifier or None))
    return results
