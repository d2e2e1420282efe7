"""HRP-aware application-layer target plans.

Non-HRP prefixes are planned in full. Each HRP gets at most ``k`` targets:
addresses named by DNS seeds first (most-referenced first, then lowest
address), topped up with a uniform without-replacement draw from the
prefix's remaining responsive addresses. Sampled outcomes classify the
prefix as proxy, cdn_like, or diverse; diverse prefixes escalate to a full
scan of their responsive addresses.

Plans must be byte-identical across platforms and Python versions, so
sampling uses an in-repo SplitMix64 generator (Steele et al.'s mix
constants) rather than ``random``: stream state for a prefix is
``(rng_seed * 0x9E3779B97F4A7C15 + prefix) mod 2^64`` and draws are
rejection-sampled, so a plan is a pure function of (occupancy, HRP set,
seeds, policy) and per-prefix work can run in parallel without changing
the result.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .applayer import SUCCESS, AppResult
from .ingest import format_ipv4, parse_ipv4
from .prefixes import PrefixTable, format_slash24, parse_slash24

STRATEGY_FULL = "full"
STRATEGY_SAMPLED = "sampled"
STRATEGIES = (STRATEGY_FULL, STRATEGY_SAMPLED)

NON_HRP_FULL = "non_hrp_full"
DNS_SEED = "dns_seed"
UNIFORM_FILL = "uniform_fill"
ESCALATION = "escalation"
PROVENANCES = (NON_HRP_FULL, DNS_SEED, UNIFORM_FILL, ESCALATION)

PROXY = "proxy"
CDN_LIKE = "cdn_like"
DIVERSE = "diverse"
SCENARIOS = (PROXY, CDN_LIKE, DIVERSE)

PLAN_COLUMNS = ("ip", "prefix", "strategy", "provenance")

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class PlanEvaluationError(Exception):
    """Ground truth does not cover the plan under evaluation."""


class SplitMix64:
    """SplitMix64: fixed 64-bit generator for reproducible sampling."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform draw from [0, n) via rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("randbelow needs a positive bound")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n


def _prefix_stream(rng_seed: int, prefix: int) -> SplitMix64:
    return SplitMix64((rng_seed * _GAMMA + prefix) & _MASK64)


def _sample_without_replacement(items: Sequence[int], m: int, rng: SplitMix64) -> list[int]:
    """First m entries of a partial Fisher-Yates shuffle, in draw order."""
    pool = list(items)
    for i in range(m):
        j = i + rng.randbelow(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:m]


@dataclass(frozen=True)
class DnsSeed:
    """An address DNS points at, weighted by how many names reference it."""

    address: int
    name_count: int

    def __post_init__(self):
        if self.name_count < 1:
            raise ValueError(f"name_count must be >= 1, got {self.name_count}")


@dataclass(frozen=True)
class SamplePolicy:
    """Sampling knobs: targets per HRP, PRNG seed, and scenario cutoffs.

    include_unresponsive_seeds keeps DNS-seeded targets that the port scan
    missed (SNI-dependent services); disable to sample responsive addresses
    only. The proxy/cdn cutoffs bound the sampled success rate and are
    compared exactly on their decimal values.
    """

    k: int = 10
    rng_seed: int = 0
    proxy_max_success: float = 0.10
    cdn_min_success: float = 0.90
    include_unresponsive_seeds: bool = True

    def __post_init__(self):
        if not 1 <= self.k <= 256:
            raise ValueError(f"k must be in [1, 256], got {self.k}")
        proxy = Fraction(str(self.proxy_max_success))
        cdn = Fraction(str(self.cdn_min_success))
        if not 0 <= proxy < cdn <= 1:
            raise ValueError(
                f"need 0 <= proxy_max_success < cdn_min_success <= 1, "
                f"got {self.proxy_max_success} / {self.cdn_min_success}"
            )


@dataclass(frozen=True)
class PlanTarget:
    address: int
    provenance: str


@dataclass(frozen=True)
class PlanEntry:
    prefix: int
    strategy: str
    targets: tuple[PlanTarget, ...]


@dataclass
class TargetPlan:
    """Per-prefix strategies and concrete target addresses."""

    entries: dict[int, PlanEntry]

    def prefixes(self) -> list[int]:
        return sorted(self.entries)

    def iter_targets(self) -> Iterator[tuple[int, PlanTarget]]:
        """(prefix, target) pairs, prefixes ascending, targets in plan order."""
        for prefix in sorted(self.entries):
            for target in self.entries[prefix].targets:
                yield prefix, target

    def total_targets(self) -> int:
        return sum(len(entry.targets) for entry in self.entries.values())

    def target_addresses(self) -> set[int]:
        return {t.address for _, t in self.iter_targets()}


@dataclass(frozen=True)
class PlanMetrics:
    """Cost and coverage of a plan against full-scan ground truth."""

    handshakes_planned: int
    handshakes_full_baseline: int
    reduction: float
    identifier_coverage: float


def build_plan(
    occupancy: PrefixTable,
    hrps: Iterable[int],
    seeds: Iterable[DnsSeed],
    policy: SamplePolicy,
) -> TargetPlan:
    """Deterministic target plan over every visible prefix of the scan."""
    hrp_set = set(hrps)
    missing = sorted(p for p in hrp_set if not occupancy.count(p))
    if missing:
        raise ValueError(f"HRPs missing from the occupancy table: {missing[:5]}")
    seeds_by_prefix: dict[int, dict[int, int]] = {}
    for seed in seeds:
        per_prefix = seeds_by_prefix.setdefault(seed.address >> 8, {})
        per_prefix[seed.address] = per_prefix.get(seed.address, 0) + seed.name_count
    entries: dict[int, PlanEntry] = {}
    for prefix in occupancy.prefixes():
        responsive = occupancy.addresses(prefix)
        if prefix not in hrp_set:
            targets = tuple(PlanTarget(addr, NON_HRP_FULL) for addr in responsive)
            entries[prefix] = PlanEntry(prefix, STRATEGY_FULL, targets)
            continue
        entries[prefix] = _sample_hrp(prefix, responsive, seeds_by_prefix.get(prefix, {}), policy)
    return TargetPlan(entries)


def _sample_hrp(
    prefix: int, responsive: list[int], seed_names: dict[int, int], policy: SamplePolicy
) -> PlanEntry:
    responsive_set = set(responsive)
    eligible = [
        (address, names)
        for address, names in seed_names.items()
        if policy.include_unresponsive_seeds or address in responsive_set
    ]
    eligible.sort(key=lambda pair: (-pair[1], pair[0]))
    seeded = [address for address, _ in eligible[: policy.k]]
    targets = [PlanTarget(address, DNS_SEED) for address in seeded]
    fill_budget = policy.k - len(seeded)
    if fill_budget > 0:
        candidates = [addr for addr in responsive if addr not in seed_names]
        rng = _prefix_stream(policy.rng_seed, prefix)
        drawn = _sample_without_replacement(candidates, min(fill_budget, len(candidates)), rng)
        targets.extend(PlanTarget(address, UNIFORM_FILL) for address in drawn)
    return PlanEntry(prefix, STRATEGY_SAMPLED, tuple(targets))


def classify_sample(sample_results: Sequence[AppResult], policy: SamplePolicy) -> str:
    """Scenario for one HRP from its sampled outcomes.

    success rate <= proxy_max_success -> proxy; rate >= cdn_min_success with
    every success carrying one shared identifier -> cdn_like; else diverse.
    """
    if not sample_results:
        raise ValueError("classify_sample needs at least one result")
    n = len(sample_results)
    successes = [r for r in sample_results if r.status == SUCCESS]
    rate = Fraction(len(successes), n)
    if rate <= Fraction(str(policy.proxy_max_success)):
        return PROXY
    identifiers = {r.identifier for r in successes}
    if (
        rate >= Fraction(str(policy.cdn_min_success))
        and None not in identifiers
        and len(identifiers) == 1
    ):
        return CDN_LIKE
    return DIVERSE


def escalate(plan: TargetPlan, classes: Mapping[int, str], occupancy: PrefixTable) -> TargetPlan:
    """Grow diverse prefixes to their full responsive sets; others unchanged."""
    for prefix, scenario in classes.items():
        if prefix not in plan.entries:
            raise ValueError(f"classified prefix not in plan: {format_slash24(prefix)}")
        if scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {scenario!r} for {format_slash24(prefix)}")
    entries = dict(plan.entries)
    for prefix, scenario in classes.items():
        if scenario != DIVERSE:
            continue
        entry = entries[prefix]
        planned = {t.address for t in entry.targets}
        additions = tuple(
            PlanTarget(addr, ESCALATION)
            for addr in occupancy.addresses(prefix)
            if addr not in planned
        )
        entries[prefix] = replace(entry, targets=entry.targets + additions)
    return TargetPlan(entries)


def evaluate_plan(final_plan: TargetPlan, truth: Iterable[AppResult]) -> PlanMetrics:
    """Cost/coverage of a plan against ground truth for every responsive address.

    Raises PlanEvaluationError when a planned target has no truth row. With
    an empty plan and empty truth, reduction is 0 and coverage 1 (vacuous).
    """
    truth_by_target: dict[int, AppResult] = {}
    for r in truth:
        truth_by_target.setdefault(r.target, r)
    planned = final_plan.target_addresses()
    uncovered = sorted(a for a in planned if a not in truth_by_target)
    if uncovered:
        raise PlanEvaluationError(
            f"{len(uncovered)} planned targets missing from ground truth, "
            f"first: {format_ipv4(uncovered[0])}"
        )
    baseline = len(truth_by_target)
    all_identifiers = {r.identifier for r in truth_by_target.values() if r.identifier is not None}
    reached = {
        truth_by_target[a].identifier
        for a in planned
        if truth_by_target[a].identifier is not None
    }
    return PlanMetrics(
        handshakes_planned=len(planned),
        handshakes_full_baseline=baseline,
        reduction=1 - len(planned) / baseline if baseline else 0.0,
        identifier_coverage=len(reached) / len(all_identifiers) if all_identifiers else 1.0,
    )


def read_dns_seeds(lines: Iterable[str]) -> list[DnsSeed]:
    """Seeds CSV ``ip,name_count`` with a header; duplicate addresses merge."""
    merged: dict[int, int] = {}
    header_seen = False
    for line_number, line in enumerate(lines, start=1):
        row = line.rstrip("\r\n")
        if not row or row.startswith("#"):
            continue
        if not header_seen:
            if row.split(",")[0].strip() != "ip":
                raise ValueError(f"line {line_number}: expected header row ip,name_count")
            header_seen = True
            continue
        fields = row.split(",")
        if len(fields) != 2:
            raise ValueError(f"line {line_number}: expected 2 fields, got {len(fields)}")
        address = parse_ipv4(fields[0].strip())
        if address is None:
            raise ValueError(f"line {line_number}: invalid address {fields[0]!r}")
        try:
            name_count = int(fields[1])
        except ValueError:
            raise ValueError(f"line {line_number}: invalid name_count {fields[1]!r}") from None
        if name_count < 1:
            raise ValueError(f"line {line_number}: name_count must be >= 1")
        merged[address] = merged.get(address, 0) + name_count
    return [DnsSeed(address, merged[address]) for address in sorted(merged)]


def write_plan_csv(plan: TargetPlan, out: IO[str]) -> None:
    """CSV form, prefixes ascending and targets in plan order."""
    out.write(",".join(PLAN_COLUMNS) + "\n")
    for prefix, target in plan.iter_targets():
        entry = plan.entries[prefix]
        out.write(
            f"{format_ipv4(target.address)},{format_slash24(prefix)},"
            f"{entry.strategy},{target.provenance}\n"
        )


def write_plan_targets(plan: TargetPlan, out: IO[str]) -> None:
    """One target address per line: a ready-made input list for a scanner."""
    for _, target in plan.iter_targets():
        out.write(format_ipv4(target.address) + "\n")


def read_plan_csv(lines: Iterable[str]) -> TargetPlan:
    """Read the CSV form back into a plan."""
    rows: dict[int, tuple[str, list[PlanTarget]]] = {}
    header_seen = False
    for line_number, line in enumerate(lines, start=1):
        row = line.rstrip("\r\n")
        if not row or row.startswith("#"):
            continue
        if not header_seen:
            if row.split(",")[0].strip() != "ip":
                raise ValueError(f"line {line_number}: expected header row {PLAN_COLUMNS}")
            header_seen = True
            continue
        fields = row.split(",")
        if len(fields) != len(PLAN_COLUMNS):
            raise ValueError(f"line {line_number}: expected {len(PLAN_COLUMNS)} fields, got {len(fields)}")
        ip_text, prefix_text, strategy, provenance = (f.strip() for f in fields)
        address = parse_ipv4(ip_text)
        if address is None:
            raise ValueError(f"line {line_number}: invalid address {ip_text!r}")
        if strategy not in STRATEGIES:
            raise ValueError(f"line {line_number}: unknown strategy {strategy!r}")
        if provenance not in PROVENANCES:
            raise ValueError(f"line {line_number}: unknown provenance {provenance!r}")
        prefix = parse_slash24(prefix_text)
        stored = rows.setdefault(prefix, (strategy, []))
        if stored[0] != strategy:
            raise ValueError(f"line {line_number}: mixed strategies for {prefix_text}")
        stored[1].append(PlanTarget(address, provenance))
    return TargetPlan(
        {
            prefix: PlanEntry(prefix, strategy, tuple(targets))
            for prefix, (strategy, targets) in rows.items()
        }
    )


def plan_summary(plan: TargetPlan) -> dict:
    """Counts by strategy and provenance for the JSON summary."""
    strategy_counts = {STRATEGY_FULL: 0, STRATEGY_SAMPLED: 0}
    provenance_counts = {p: 0 for p in PROVENANCES}
    for entry in plan.entries.values():
        strategy_counts[entry.strategy] += 1
        for target in entry.targets:
            provenance_counts[target.provenance] += 1
    return {
        "prefixes": len(plan.entries),
        "targets": plan.total_targets(),
        "strategy_prefixes": strategy_counts,
        "provenance_targets": provenance_counts,
    }
