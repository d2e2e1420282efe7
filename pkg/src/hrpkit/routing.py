"""Routing-table snapshots and origin-AS enrichment.

The snapshot format is one ``prefix/length,asn`` entry per line with ``#``
comments, e.g. a flattened RouteViews RIB. Lookups are longest-prefix
match over per-length hash maps, walked from the most specific length
present down to a default route; tables are immutable after loading, so
concurrent lookups need no locking.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from typing import IO, Iterable, Iterator

from .ingest import parse_ipv4
from .prefixes import PrefixStat

_MAX_ASN = (1 << 32) - 1

# MASKS[length] keeps the top `length` bits of a 32-bit address.
MASKS = tuple(((0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF) if length else 0 for length in range(33))

STRICT = "strict"
LENIENT = "lenient"


class RouteParseError(Exception):
    """A snapshot line could not be used (raised under strict policy)."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class RouteEntry:
    """One announced route: normalized network value, length, origin ASN."""

    network: int
    length: int
    origin_asn: int


@dataclass
class RouteLoadStats:
    """Accounting for one snapshot load (lenient mode keeps going and counts)."""

    lines_read: int = 0
    entries_loaded: int = 0
    comment_lines: int = 0
    invalid_lines: int = 0
    normalized_lines: int = 0  # host bits were set and got cleared
    duplicate_conflicts: int = 0  # same (network, length), different ASN; first kept
    duplicate_repeats: int = 0  # exact repeats of an existing entry


class RoutingTable:
    """Longest-prefix-match table over route entries.

    At most one entry exists per (network, length); the default route
    0.0.0.0/0 is accepted and matches anything not otherwise covered.
    """

    def __init__(self):
        self._by_length: dict[int, dict[int, int]] = {}
        self._lengths_desc: tuple[int, ...] = ()
        self.load_stats = RouteLoadStats()

    def __len__(self) -> int:
        return sum(len(nets) for nets in self._by_length.values())

    def add(self, entry: RouteEntry) -> None:
        """Insert an entry; the network must be normalized and not yet present."""
        if entry.network & ~MASKS[entry.length] & 0xFFFFFFFF:
            raise ValueError(f"host bits set in {entry}")
        nets = self._by_length.get(entry.length)
        if nets is None:
            nets = self._by_length[entry.length] = {}
            self._lengths_desc = tuple(sorted(self._by_length, reverse=True))
        if entry.network in nets:
            raise ValueError(f"duplicate route for length {entry.length}: {entry}")
        nets[entry.network] = entry.origin_asn

    def get(self, network: int, length: int) -> RouteEntry | None:
        asn = self._by_length.get(length, {}).get(network)
        return None if asn is None else RouteEntry(network, length, asn)

    def lookup(self, addr: int) -> RouteEntry | None:
        """The covering entry of maximal length, or None."""
        for length in self._lengths_desc:
            network = addr & MASKS[length]
            asn = self._by_length[length].get(network)
            if asn is not None:
                return RouteEntry(network, length, asn)
        return None

    def entries(self) -> Iterator[RouteEntry]:
        """All entries, ascending (length, network)."""
        for length in sorted(self._by_length):
            for network in sorted(self._by_length[length]):
                yield RouteEntry(network, length, self._by_length[length][network])

    def split_slash24s(self) -> frozenset[int]:
        """/24 networks that contain routes more specific than /24.

        A classified /24 whose network falls in this set is ambiguous: parts
        of it are routed separately from the entry its network address hits.
        """
        split = set()
        for length, nets in self._by_length.items():
            if length > 24:
                split.update(network >> 8 for network in nets)
        return frozenset(split)


def load_route_table(lines: Iterable[str] | IO[str] | IO[bytes], policy: str = LENIENT) -> RoutingTable:
    """Load a snapshot; strict raises on the first bad line, lenient counts.

    Lenient normalizes entries with host bits set and keeps the first ASN
    for conflicting duplicates. Blank lines count as comments.
    """
    if policy not in (STRICT, LENIENT):
        raise ValueError(f"unknown policy: {policy!r}")
    table = RoutingTable()
    stats = table.load_stats
    for line_number, raw in enumerate(lines, start=1):
        line = raw.decode("utf-8", "replace") if isinstance(raw, bytes) else raw
        stats.lines_read += 1
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            stats.comment_lines += 1
            continue
        parsed = _parse_route_line(stripped)
        if parsed is None:
            if policy == STRICT:
                raise RouteParseError(f"invalid route line: {stripped!r}", line_number)
            stats.invalid_lines += 1
            continue
        network, length, asn = parsed
        normalized = network & MASKS[length]
        if normalized != network:
            if policy == STRICT:
                raise RouteParseError(f"host bits set in prefix: {stripped!r}", line_number)
            stats.normalized_lines += 1
            network = normalized
        existing = table.get(network, length)
        if existing is not None:
            if existing.origin_asn == asn:
                stats.duplicate_repeats += 1
            elif policy == STRICT:
                raise RouteParseError(
                    f"conflicting origin for {stripped!r}: AS{existing.origin_asn} already loaded",
                    line_number,
                )
            else:
                stats.duplicate_conflicts += 1
            continue
        table.add(RouteEntry(network, length, asn))
        stats.entries_loaded += 1
    return table


def _parse_route_line(line: str) -> tuple[int, int, int] | None:
    parts = line.split(",")
    if len(parts) != 2:
        return None
    cidr, asn_text = parts[0].strip(), parts[1].strip()
    if "/" not in cidr:
        return None
    network_text, length_text = cidr.rsplit("/", 1)
    network = parse_ipv4(network_text)
    if network is None:
        return None
    try:
        length = int(length_text)
        asn = int(asn_text)
    except ValueError:
        return None
    if not 0 <= length <= 32 or not 0 <= asn <= _MAX_ASN:
        return None
    return network, length, asn


def enrich(stats: Iterable[PrefixStat], table: RoutingTable) -> list[PrefixStat]:
    """Attach origin ASN and covering route to each stat via LPM.

    The lookup key is the /24's network address; stats without a covering
    entry pass through unchanged. Counts and HRP flags are never touched.
    """
    enriched = []
    for s in stats:
        entry = table.lookup(s.prefix << 8)
        if entry is None:
            enriched.append(s)
        else:
            enriched.append(
                replace(s, origin_asn=entry.origin_asn, covering_route=(entry.network, entry.length))
            )
    return enriched


@dataclass
class AsSummary:
    """How strongly one origin AS is filled with highly responsive prefixes.

    Prefix counts are over distinct /24s across all supplied scans: a /24
    visible on several ports counts once, and counts as HRP if any port
    classified it so.
    """

    asn: int
    visible_24s: int
    hrp_count: int
    hrp_share: float
    ports_visible: int
    ports_with_hrps: int


def as_summary(stats: Iterable[PrefixStat]) -> list[AsSummary]:
    """Per-AS rollup of enriched stats, ordered by HRP count descending."""
    visible: dict[int, set[int]] = defaultdict(set)
    hrps: dict[int, set[int]] = defaultdict(set)
    ports: dict[int, set[tuple[str, int]]] = defaultdict(set)
    hrp_ports: dict[int, set[tuple[str, int]]] = defaultdict(set)
    for s in stats:
        if s.origin_asn is None:
            continue
        visible[s.origin_asn].add(s.prefix)
        ports[s.origin_asn].add(s.meta.port_key())
        if s.is_hrp:
            hrps[s.origin_asn].add(s.prefix)
            hrp_ports[s.origin_asn].add(s.meta.port_key())
    summaries = [
        AsSummary(
            asn=asn,
            visible_24s=len(visible[asn]),
            hrp_count=len(hrps[asn]),
            hrp_share=len(hrps[asn]) / len(visible[asn]),
            ports_visible=len(ports[asn]),
            ports_with_hrps=len(hrp_ports[asn]),
        )
        for asn in visible
    ]
    summaries.sort(key=lambda row: (-row.hrp_count, row.asn))
    return summaries
