"""Cross-port, temporal, and vantage-point analysis of classified scans.

All functions are pure over immutable inputs. A "classified scan" is the
list of PrefixStat records from one scan; multi-scan inputs must agree on
(protocol, port) and, where ordered, arrive with strictly ascending
timestamps.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime
from math import ceil
from typing import IO, Iterable, Sequence

from .fmt import fmt_real
from .ingest import ScanMeta, format_timestamp
from .prefixes import HrpThreshold, PrefixStat, format_slash24


@dataclass(frozen=True)
class PortProfile:
    """How many of the supplied ports a /24 answers on, and is an HRP on."""

    prefix: int
    ports_responsive: int
    ports_hrp: int


@dataclass
class PortProfileReport:
    """Per-prefix port profiles plus bucket histograms over both counts.

    responsive_histogram buckets all visible prefixes by ports_responsive;
    hrp_histogram buckets prefixes that are an HRP somewhere by ports_hrp.
    The supplied port list is the universe.
    """

    port_count: int
    profiles: list[PortProfile]
    responsive_histogram: dict[int, int]
    hrp_histogram: dict[int, int]


@dataclass(frozen=True)
class StabilityPoint:
    """HRP weight of one scan at the 0.90 and 0.95 cuts.

    hrp_count is the number of prefixes at the 0.90 cut.
    """

    scan_id: str
    timestamp: datetime
    hrp_address_share_90: float
    hrp_address_share_95: float
    hrp_count: int


@dataclass
class PersistenceSummary:
    """How consistently prefixes keep their HRP classification over a series.

    scans_classified maps each prefix that was ever an HRP to the number of
    scans that classified it so. half_period_count uses an inclusive
    ceil(total/2) reading of "at least half"; full_period_count requires
    every scan, and both are reported because "consistently" admits either.
    """

    total_scans: int
    distinct_hrps: int
    scans_classified: dict[int, int]
    half_period_count: int
    full_period_count: int
    missing_at_most_n: int
    missing_at_most_n_count: int
    missing_at_most_n_share: float


@dataclass
class VantageDiff:
    """Set difference of two vantage points' HRP sets for one port."""

    only_a: frozenset[int]
    only_b: frozenset[int]
    both: frozenset[int]
    divergence: float


def port_profile(scans: Sequence[Sequence[PrefixStat]]) -> PortProfileReport:
    """Profile prefixes across one scan per port.

    A prefix is responsive on a port when visible there (count >= 1) and an
    HRP on a port when that scan classified it so.
    """
    keys = [_scan_meta(scan).port_key() for scan in scans]
    if len(set(keys)) != len(keys):
        duplicates = [k for k, n in Counter(keys).items() if n > 1]
        raise ValueError(f"duplicate (proto, port) in port profile input: {duplicates}")
    responsive: dict[int, int] = defaultdict(int)
    hrp: dict[int, int] = defaultdict(int)
    for scan in scans:
        for s in scan:
            responsive[s.prefix] += 1
            if s.is_hrp:
                hrp[s.prefix] += 1
    profiles = [
        PortProfile(prefix, responsive[prefix], hrp.get(prefix, 0)) for prefix in sorted(responsive)
    ]
    responsive_histogram = dict(sorted(Counter(p.ports_responsive for p in profiles).items()))
    hrp_histogram = dict(sorted(Counter(p.ports_hrp for p in profiles if p.ports_hrp).items()))
    return PortProfileReport(
        port_count=len(scans),
        profiles=profiles,
        responsive_histogram=responsive_histogram,
        hrp_histogram=hrp_histogram,
    )


def stability_series(scans: Sequence[Sequence[PrefixStat]]) -> list[StabilityPoint]:
    """HRP address share per scan, recomputed at both the 0.90 and 0.95 cuts."""
    metas = _series_metas(scans)
    t90 = HrpThreshold(0.90)
    t95 = HrpThreshold(0.95)
    points = []
    for meta, scan in zip(metas, scans):
        total = sum(s.responsive_count for s in scan)
        addrs_90 = sum(s.responsive_count for s in scan if s.responsive_count >= t90.min_count)
        addrs_95 = sum(s.responsive_count for s in scan if s.responsive_count >= t95.min_count)
        points.append(
            StabilityPoint(
                scan_id=meta.scan_id,
                timestamp=meta.timestamp,
                hrp_address_share_90=addrs_90 / total if total else 0.0,
                hrp_address_share_95=addrs_95 / total if total else 0.0,
                hrp_count=sum(1 for s in scan if s.responsive_count >= t90.min_count),
            )
        )
    return points


def persistence(scans: Sequence[Sequence[PrefixStat]], missing_at_most_n: int = 5) -> PersistenceSummary:
    """Per-prefix persistence of the stored HRP classification over a series."""
    if len(scans) < 2:
        raise ValueError("persistence needs at least two scans")
    if missing_at_most_n < 0:
        raise ValueError("missing_at_most_n must be non-negative")
    _series_metas(scans)
    total = len(scans)
    classified: Counter[int] = Counter()
    for scan in scans:
        for s in scan:
            if s.is_hrp:
                classified[s.prefix] += 1
    half = ceil(total / 2)
    scans_classified = dict(sorted(classified.items()))
    missing_ok = sum(1 for n in classified.values() if total - n <= missing_at_most_n)
    return PersistenceSummary(
        total_scans=total,
        distinct_hrps=len(classified),
        scans_classified=scans_classified,
        half_period_count=sum(1 for n in classified.values() if n >= half),
        full_period_count=sum(1 for n in classified.values() if n == total),
        missing_at_most_n=missing_at_most_n,
        missing_at_most_n_count=missing_ok,
        missing_at_most_n_share=missing_ok / len(classified) if classified else 0.0,
    )


def vantage_diff(a: Iterable[int], b: Iterable[int]) -> VantageDiff:
    """Partition two HRP sets and their divergence (symmetric diff / union)."""
    set_a = frozenset(a)
    set_b = frozenset(b)
    union = set_a | set_b
    only_a = set_a - set_b
    only_b = set_b - set_a
    return VantageDiff(
        only_a=only_a,
        only_b=only_b,
        both=set_a & set_b,
        divergence=(len(only_a) + len(only_b)) / len(union) if union else 0.0,
    )


def _scan_meta(scan: Sequence[PrefixStat]) -> ScanMeta:
    """The shared meta of one classified scan; empty scans are rejected."""
    if not scan:
        raise ValueError("classified scan is empty; cannot derive its scan meta")
    meta = scan[0].meta
    for s in scan:
        if s.meta != meta:
            raise ValueError(f"mixed scan meta within one scan: {s.meta} vs {meta}")
    return meta


def _series_metas(scans: Sequence[Sequence[PrefixStat]]) -> list[ScanMeta]:
    if not scans:
        raise ValueError("no scans supplied")
    metas = [_scan_meta(scan) for scan in scans]
    first = metas[0].port_key()
    for meta in metas[1:]:
        if meta.port_key() != first:
            raise ValueError(
                f"port/proto mismatch across scans: {meta.protocol}/{meta.port} "
                f"vs {first[0]}/{first[1]}"
            )
    for earlier, later in zip(metas, metas[1:]):
        if later.timestamp <= earlier.timestamp:
            raise ValueError(
                f"scan timestamps must be strictly ascending: "
                f"{later.scan_id} ({later.timestamp}) after {earlier.scan_id} ({earlier.timestamp})"
            )
    return metas


def write_series_csv(points: Iterable[StabilityPoint], out: IO[str]) -> None:
    """One row per stability point."""
    out.write("scan_id,timestamp,hrp_address_share_90,hrp_address_share_95,hrp_count\n")
    for p in points:
        out.write(
            f"{p.scan_id},{format_timestamp(p.timestamp)},"
            f"{fmt_real(p.hrp_address_share_90)},{fmt_real(p.hrp_address_share_95)},{p.hrp_count}\n"
        )


def write_port_histogram_csv(report: PortProfileReport, out: IO[str]) -> None:
    """One row per port-count bucket, responsive and HRP prefix counts side by side."""
    out.write("ports,responsive_prefixes,hrp_prefixes\n")
    buckets = sorted(set(report.responsive_histogram) | set(report.hrp_histogram))
    for bucket in buckets:
        out.write(
            f"{bucket},{report.responsive_histogram.get(bucket, 0)},{report.hrp_histogram.get(bucket, 0)}\n"
        )


def write_port_profiles_csv(report: PortProfileReport, out: IO[str]) -> None:
    """One row per visible prefix."""
    out.write("prefix,ports_responsive,ports_hrp\n")
    for p in report.profiles:
        out.write(f"{format_slash24(p.prefix)},{p.ports_responsive},{p.ports_hrp}\n")
