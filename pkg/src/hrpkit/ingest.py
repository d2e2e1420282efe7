"""Readers for IPv4 port-scan output files.

Two input layouts are supported:

* ``plain``: one dotted-quad address per line, ``#`` starts a comment line.
* ``csv_saddr``: comma-separated with a header row; only the ``saddr``
  column is read (the layout ZMap's CSV output module produces).

Reading is streaming and single-pass: addresses come out in file order and
every input line lands in exactly one counter of :class:`IngestStats`.
Fields in ``csv_saddr`` rows are split on plain commas; scan output never
quotes fields, so no quote processing is done.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable, Iterator

PLAIN = "plain"
CSV_SADDR = "csv_saddr"
FORMATS = (PLAIN, CSV_SADDR)

STRICT = "strict"
LENIENT = "lenient"
POLICIES = (STRICT, LENIENT)

SADDR_COLUMN = "saddr"

_PROTOCOLS = ("tcp", "udp")


class IngestError(Exception):
    """A scan input line could not be used (raised under strict policy)."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class ScanMeta:
    """Identity of one scan: protocol, port, and provenance.

    The timestamp is normalized to UTC; naive datetimes are assumed UTC.
    """

    protocol: str
    port: int
    scan_id: str
    timestamp: datetime
    vantage: str | None = None

    def __post_init__(self):
        if self.protocol not in _PROTOCOLS:
            raise ValueError(f"protocol must be one of {_PROTOCOLS}, got {self.protocol!r}")
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")
        if not self.scan_id:
            raise ValueError("scan_id must be non-empty")
        if self.timestamp.tzinfo is None:
            object.__setattr__(self, "timestamp", self.timestamp.replace(tzinfo=timezone.utc))
        else:
            object.__setattr__(self, "timestamp", self.timestamp.astimezone(timezone.utc))

    def port_key(self) -> tuple[str, int]:
        return (self.protocol, self.port)


@dataclass
class IngestStats:
    """Line accounting for one ingest run.

    Invariant: lines_read == addresses_emitted + invalid_lines + comment_lines.
    The csv_saddr header row counts as a comment line.
    """

    lines_read: int = 0
    addresses_emitted: int = 0
    invalid_lines: int = 0
    comment_lines: int = 0

    def merge(self, other: "IngestStats") -> None:
        self.lines_read += other.lines_read
        self.addresses_emitted += other.addresses_emitted
        self.invalid_lines += other.invalid_lines
        self.comment_lines += other.comment_lines


def parse_ipv4(text: str) -> int | None:
    """Parse a dotted-quad IPv4 address to its 32-bit value, or None."""
    try:
        return int(ipaddress.IPv4Address(text))
    except ValueError:
        return None


def format_ipv4(value: int) -> str:
    """Dotted-quad text for a 32-bit address value."""
    return f"{value >> 24}.{(value >> 16) & 0xFF}.{(value >> 8) & 0xFF}.{value & 0xFF}"


def parse_address_line(line: str, fmt: str, saddr_index: int = 0) -> int | None:
    """Extract the address from one input line, or None if the line is invalid.

    For csv_saddr the caller supplies the column index found in the header.
    """
    if fmt == PLAIN:
        return parse_ipv4(line.strip())
    if fmt == CSV_SADDR:
        fields = line.rstrip("\r\n").split(",")
        if saddr_index >= len(fields):
            return None
        return parse_ipv4(fields[saddr_index].strip())
    raise ValueError(f"unknown scan format: {fmt!r}")


def open_scan_source(
    source: IO[bytes] | IO[str] | Iterable[str],
    fmt: str = PLAIN,
    policy: str = LENIENT,
) -> tuple[Iterator[int], IngestStats]:
    """Stream addresses out of a scan file.

    Returns the address iterator and the stats object it fills in while
    being consumed; the stats are final once the iterator is exhausted.
    Strict policy raises :class:`IngestError` at the first invalid line,
    lenient skips and counts it.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown scan format: {fmt!r}")
    if policy not in POLICIES:
        raise ValueError(f"unknown policy: {policy!r}")
    stats = IngestStats()
    return _read_addresses(source, fmt, policy, stats), stats


def _iter_text_lines(source: IO[bytes] | IO[str] | Iterable[str]) -> Iterator[str]:
    for raw in source:
        yield raw.decode("utf-8", "replace") if isinstance(raw, bytes) else raw


def _read_addresses(source, fmt: str, policy: str, stats: IngestStats) -> Iterator[int]:
    saddr_index: int | None = 0 if fmt == PLAIN else None
    for line_number, line in enumerate(_iter_text_lines(source), start=1):
        stats.lines_read += 1
        stripped = line.strip()
        if fmt == PLAIN:
            if stripped.startswith("#"):
                stats.comment_lines += 1
                continue
        elif saddr_index is None:
            # First csv_saddr line is the header; without a saddr column no
            # later row can be interpreted, so that is fatal under any policy.
            header = [name.strip() for name in stripped.split(",")]
            if SADDR_COLUMN not in header:
                raise IngestError(f"header row has no {SADDR_COLUMN!r} column: {stripped!r}", line_number)
            saddr_index = header.index(SADDR_COLUMN)
            stats.comment_lines += 1
            continue
        addr = parse_address_line(line, fmt, saddr_index)
        if addr is None:
            if policy == STRICT:
                raise IngestError(f"invalid address line: {stripped!r}", line_number)
            stats.invalid_lines += 1
            continue
        stats.addresses_emitted += 1
        yield addr


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO 8601 timestamp; a trailing Z and naive forms mean UTC."""
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def format_timestamp(value: datetime) -> str:
    """Fixed ``YYYY-MM-DDTHH:MM:SSZ`` rendering for report output."""
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
