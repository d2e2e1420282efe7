"""/24 occupancy aggregation and highly-responsive-prefix classification.

A scan's responsive addresses are folded into one 256-bit bitmap per /24
(bit i set iff host byte i answered), so duplicate responses are free and
per-prefix counts are popcounts. A prefix is highly responsive when its
count reaches ``ceil(fraction * 256)``; the default fraction 0.90 puts the
cut at 231 responsive addresses. All 256 host values count toward the
denominator, network and broadcast addresses included.

Tables are value-like: aggregation is single-pass, and tables built from
shards of the input merge by bitwise OR into the same result as one pass
over everything.
"""

from __future__ import annotations

import ipaddress
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from typing import IO, Iterable

from .fmt import fmt_real
from .ingest import ScanMeta, format_ipv4

SLASH24_SIZE = 256

PREFIX_STAT_COLUMNS = (
    "prefix",
    "port",
    "proto",
    "count",
    "is_hrp",
    "threshold_fraction",
    "origin_asn",
    "covering_prefix",
)


def slash24_of(addr: int) -> int:
    """The 24-bit network identifier (top 24 bits) of an address."""
    return addr >> 8


def format_slash24(prefix: int) -> str:
    """Dotted CIDR text for a 24-bit network value, e.g. ``198.51.100.0/24``."""
    return f"{prefix >> 16}.{(prefix >> 8) & 0xFF}.{prefix & 0xFF}.0/24"


def parse_slash24(text: str) -> int:
    """Parse ``a.b.c.0/24`` back to the 24-bit network value."""
    network = ipaddress.IPv4Network(text.strip())
    if network.prefixlen != 24:
        raise ValueError(f"not a /24: {text!r}")
    return int(network.network_address) >> 8


@dataclass(frozen=True)
class HrpThreshold:
    """Responsiveness cut for a /24: fraction in (0, 1] and the derived count.

    The count is ``ceil(fraction * 256)`` computed on the decimal value of
    the fraction so that e.g. 0.90 -> 231 and 0.95 -> 244 exactly.
    """

    fraction: float
    min_count: int = field(init=False, compare=False)

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError(f"threshold fraction must be in (0, 1], got {self.fraction}")
        min_count = math.ceil(Fraction(str(self.fraction)) * SLASH24_SIZE)
        object.__setattr__(self, "min_count", min_count)


DEFAULT_THRESHOLD = HrpThreshold(0.90)


@dataclass(frozen=True)
class PrefixStat:
    """Classified record for one visible /24 of one scan."""

    prefix: int
    meta: ScanMeta
    responsive_count: int
    is_hrp: bool
    threshold: HrpThreshold
    origin_asn: int | None = None
    covering_route: tuple[int, int] | None = None  # (network value, prefix length)


@dataclass
class PrefixTable:
    """Per-/24 occupancy bitmaps for one scan.

    bitmaps maps the 24-bit network value to a 256-bit int; prefixes with
    no responsive address are never materialized.
    """

    meta: ScanMeta
    bitmaps: dict[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.bitmaps)

    def add(self, addr: int) -> None:
        prefix = addr >> 8
        self.bitmaps[prefix] = self.bitmaps.get(prefix, 0) | (1 << (addr & 0xFF))

    def count(self, prefix: int) -> int:
        return self.bitmaps.get(prefix, 0).bit_count()

    def has_address(self, addr: int) -> bool:
        return bool(self.bitmaps.get(addr >> 8, 0) >> (addr & 0xFF) & 1)

    def addresses(self, prefix: int) -> list[int]:
        """Member addresses of one prefix, ascending."""
        bits = self.bitmaps.get(prefix, 0)
        base = prefix << 8
        return [base | host for host in range(SLASH24_SIZE) if bits >> host & 1]

    def total_addresses(self) -> int:
        return sum(bits.bit_count() for bits in self.bitmaps.values())

    def prefixes(self) -> list[int]:
        """Visible prefixes, ascending."""
        return sorted(self.bitmaps)


def aggregate(addresses: Iterable[int], meta: ScanMeta) -> PrefixTable:
    """Fold a finite address stream into occupancy bitmaps (single pass)."""
    bitmaps: dict[int, int] = {}
    get = bitmaps.get
    for addr in addresses:
        prefix = addr >> 8
        bitmaps[prefix] = get(prefix, 0) | (1 << (addr & 0xFF))
    return PrefixTable(meta, bitmaps)


def merge(a: PrefixTable, b: PrefixTable) -> PrefixTable:
    """Combine two shards of the same scan by per-prefix bitwise OR."""
    if a.meta != b.meta:
        raise ValueError(f"cannot merge tables with different scan meta: {a.meta} vs {b.meta}")
    merged = dict(a.bitmaps)
    get = merged.get
    for prefix, bits in b.bitmaps.items():
        merged[prefix] = get(prefix, 0) | bits
    return PrefixTable(a.meta, merged)


def classify(table: PrefixTable, threshold: HrpThreshold = DEFAULT_THRESHOLD) -> list[PrefixStat]:
    """One PrefixStat per visible prefix, ascending by prefix."""
    min_count = threshold.min_count
    stats = []
    for prefix, bits in sorted(table.bitmaps.items()):
        count = bits.bit_count()
        stats.append(
            PrefixStat(
                prefix=prefix,
                meta=table.meta,
                responsive_count=count,
                is_hrp=count >= min_count,
                threshold=threshold,
            )
        )
    return stats


def hrp_set(stats: Iterable[PrefixStat]) -> frozenset[int]:
    """Prefixes flagged highly responsive."""
    return frozenset(s.prefix for s in stats if s.is_hrp)


def hrp_address_share(stats: Iterable[PrefixStat]) -> float:
    """Responsive addresses inside HRPs over all responsive addresses (0 if none)."""
    hrp_addresses = 0
    total = 0
    for s in stats:
        total += s.responsive_count
        if s.is_hrp:
            hrp_addresses += s.responsive_count
    return hrp_addresses / total if total else 0.0


@dataclass
class ResponsivenessHistogram:
    """Distribution of per-prefix responsive counts.

    Lists are indexed by responsive count 0..256; index 0 stays zero because
    empty prefixes are not materialized. Cumulative shares are over prefixes
    and over addresses separately, each ending at 1 (all zero when empty).
    """

    prefix_count: list[int]
    address_count: list[int]
    cumulative_prefix_share: list[float]
    cumulative_address_share: list[float]
    total_prefixes: int
    total_addresses: int


def responsiveness_histogram(stats: Iterable[PrefixStat]) -> ResponsivenessHistogram:
    """Exact bucket counts for the per-prefix responsiveness distribution."""
    prefix_count = [0] * (SLASH24_SIZE + 1)
    for s in stats:
        prefix_count[s.responsive_count] += 1
    address_count = [c * n for c, n in enumerate(prefix_count)]
    total_prefixes = sum(prefix_count)
    total_addresses = sum(address_count)
    cumulative_prefix_share = [0.0] * (SLASH24_SIZE + 1)
    cumulative_address_share = [0.0] * (SLASH24_SIZE + 1)
    running_prefixes = 0
    running_addresses = 0
    for c in range(SLASH24_SIZE + 1):
        running_prefixes += prefix_count[c]
        running_addresses += address_count[c]
        if total_prefixes:
            cumulative_prefix_share[c] = running_prefixes / total_prefixes
        if total_addresses:
            cumulative_address_share[c] = running_addresses / total_addresses
    return ResponsivenessHistogram(
        prefix_count=prefix_count,
        address_count=address_count,
        cumulative_prefix_share=cumulative_prefix_share,
        cumulative_address_share=cumulative_address_share,
        total_prefixes=total_prefixes,
        total_addresses=total_addresses,
    )


def write_prefix_stats_csv(stats: Iterable[PrefixStat], out: IO[str]) -> None:
    """CSV form of classified prefixes; optional fields stay empty."""
    out.write(",".join(PREFIX_STAT_COLUMNS) + "\n")
    for s in stats:
        out.write(",".join(_stat_fields(s)) + "\n")


def write_prefix_stats_jsonl(stats: Iterable[PrefixStat], out: IO[str]) -> None:
    """JSON-lines form with the same field names as the CSV."""
    for s in stats:
        prefix, port, proto, count, is_hrp, fraction, asn, covering = _stat_fields(s)
        parts = [
            f'"prefix": "{prefix}"',
            f'"port": {port}',
            f'"proto": "{proto}"',
            f'"count": {count}',
            f'"is_hrp": {is_hrp}',
            f'"threshold_fraction": {fraction}',
            f'"origin_asn": {asn if asn else "null"}',
            f'"covering_prefix": {_quoted(covering) if covering else "null"}',
        ]
        out.write("{" + ", ".join(parts) + "}\n")


def _quoted(text: str) -> str:
    return f'"{text}"'


def _stat_fields(s: PrefixStat) -> tuple[str, ...]:
    covering = ""
    if s.covering_route is not None:
        network, length = s.covering_route
        covering = f"{format_ipv4(network)}/{length}"
    return (
        format_slash24(s.prefix),
        str(s.meta.port),
        s.meta.protocol,
        str(s.responsive_count),
        "true" if s.is_hrp else "false",
        fmt_real(s.threshold.fraction),
        "" if s.origin_asn is None else str(s.origin_asn),
        covering,
    )


def read_prefix_stats(
    lines: Iterable[str],
    scan_id: str,
    timestamp: datetime | None = None,
    vantage: str | None = None,
) -> list[PrefixStat]:
    """Read the CSV form back; port/proto must agree across rows.

    The CSV schema carries no scan identity, so the caller supplies it.
    """
    if timestamp is None:
        timestamp = datetime(1970, 1, 1, tzinfo=timezone.utc)
    stats: list[PrefixStat] = []
    meta: ScanMeta | None = None
    header_seen = False
    for line_number, line in enumerate(lines, start=1):
        row = line.rstrip("\r\n")
        if not row or row.startswith("#"):
            continue
        if not header_seen:
            if row.split(",")[0].strip() != "prefix":
                raise ValueError(f"line {line_number}: expected header row {PREFIX_STAT_COLUMNS}")
            header_seen = True
            continue
        fields = row.split(",")
        if len(fields) != len(PREFIX_STAT_COLUMNS):
            raise ValueError(f"line {line_number}: expected {len(PREFIX_STAT_COLUMNS)} fields, got {len(fields)}")
        prefix_text, port_text, proto, count_text, hrp_text, fraction_text, asn_text, covering_text = fields
        if meta is None:
            meta = ScanMeta(proto, int(port_text), scan_id, timestamp, vantage)
        elif (proto, int(port_text)) != meta.port_key():
            raise ValueError(
                f"line {line_number}: port/proto mismatch within file: "
                f"{proto}/{port_text} vs {meta.protocol}/{meta.port}"
            )
        covering = None
        if covering_text:
            network_text, length_text = covering_text.rsplit("/", 1)
            covering = (int(ipaddress.IPv4Address(network_text)), int(length_text))
        stats.append(
            PrefixStat(
                prefix=parse_slash24(prefix_text),
                meta=meta,
                responsive_count=int(count_text),
                is_hrp=hrp_text.strip().lower() == "true",
                threshold=HrpThreshold(float(fraction_text)),
                origin_asn=int(asn_text) if asn_text else None,
                covering_route=covering,
            )
        )
    return stats
