"""Command-line front end: detect -> enrich -> analyze -> plan -> evaluate.

Every subcommand is a thin adapter over one module operation and writes
machine-readable output with deterministic ordering, fixed six-digit
decimals, and a trailing newline. Exit codes: 0 success, 2 usage or
schema error, 3 strict-policy data failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from datetime import datetime, timedelta, timezone
from functools import reduce
from pathlib import Path
from typing import IO, Callable, Sequence

from . import analytics, applayer, planner, prefixes, routing
from .fmt import write_json_report
from .ingest import (
    CSV_SADDR,
    LENIENT,
    PLAIN,
    STRICT,
    IngestError,
    IngestStats,
    ScanMeta,
    format_timestamp,
    open_scan_source,
    parse_timestamp,
)
from .planner import PlanEvaluationError
from .prefixes import HrpThreshold, format_slash24
from .routing import RouteParseError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_IO = 4

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class SchemaError(Exception):
    """Inputs that parse individually but disagree with each other or the flags."""


def _threshold(text: str) -> float:
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"threshold must be in (0, 1], got {text}")
    return value


def _port(text: str) -> int:
    value = int(text)
    if not 0 <= value <= 65535:
        raise argparse.ArgumentTypeError(f"port must be in [0, 65535], got {text}")
    return value


def _timestamp(text: str) -> datetime:
    try:
        return parse_timestamp(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid timestamp {text!r}: {exc}") from None


def _open_in(path: str):
    if path == "-":
        return nullcontext(sys.stdin)
    return open(path, "r", encoding="utf-8")


def _write_to(path: str | None, write: Callable[[IO[str]], None], default=None) -> None:
    if path is None:
        if default is None:
            return
        write(default)
        return
    if path == "-":
        write(sys.stdout)
        return
    with open(path, "w", encoding="utf-8", newline="") as out:
        write(out)


def _stem(path: str) -> str:
    return "stdin" if path == "-" else Path(path).stem


def _meta_from_args(args, default_scan_id: str) -> ScanMeta:
    return ScanMeta(
        protocol=args.proto,
        port=args.port,
        scan_id=args.scan_id or default_scan_id,
        timestamp=args.timestamp or _EPOCH,
        vantage=args.vantage,
    )


def _load_occupancy(args) -> tuple[prefixes.PrefixTable, IngestStats]:
    """Aggregate the scan file(s) named on the command line, sharded then merged."""
    meta = _meta_from_args(args, default_scan_id=_stem(args.scan[0]))
    total = IngestStats()
    tables = []
    for path in args.scan:
        with _open_in(path) as source:
            addresses, stats = open_scan_source(source, args.format, args.policy)
            tables.append(prefixes.aggregate(addresses, meta))
            total.merge(stats)
    return reduce(prefixes.merge, tables), total


def _read_stats_file(path: str, scan_id: str | None = None, timestamp: datetime | None = None):
    with _open_in(path) as source:
        return prefixes.read_prefix_stats(source, scan_id or _stem(path), timestamp)


def _file_port_key(stats) -> tuple[str, int] | None:
    return stats[0].meta.port_key() if stats else None


def _check_port_agreement(named_stats: Sequence[tuple[str, list]]) -> None:
    seen: tuple[str, tuple[str, int]] | None = None
    for name, stats in named_stats:
        key = _file_port_key(stats)
        if key is None:
            continue
        if seen is None:
            seen = (name, key)
        elif key != seen[1]:
            raise SchemaError(
                f"port/proto mismatch: {seen[1][0]}/{seen[1][1]} ({seen[0]}) "
                f"vs {key[0]}/{key[1]} ({name})"
            )


def _check_results_port(results, args, name: str) -> None:
    key = _file_port_key(results)
    if key is not None and key != (args.proto, args.port):
        raise SchemaError(
            f"port/proto mismatch: {key[0]}/{key[1]} ({name}) vs "
            f"{args.proto}/{args.port} (flags)"
        )


def _write_stats(stats, args) -> None:
    writer = (
        prefixes.write_prefix_stats_jsonl
        if args.output_format == "jsonl"
        else prefixes.write_prefix_stats_csv
    )
    _write_to(args.output, lambda out: writer(stats, out), default=sys.stdout)


# --- subcommands -----------------------------------------------------------


def _cmd_detect(args) -> int:
    table, ingest_stats = _load_occupancy(args)
    stats = prefixes.classify(table, HrpThreshold(args.threshold))
    _write_stats(stats, args)
    summary = {
        "files": len(args.scan),
        "lines_read": ingest_stats.lines_read,
        "addresses_emitted": ingest_stats.addresses_emitted,
        "invalid_lines": ingest_stats.invalid_lines,
        "comment_lines": ingest_stats.comment_lines,
        "distinct_addresses": table.total_addresses(),
        "prefixes": len(table),
        "hrp_prefixes": sum(1 for s in stats if s.is_hrp),
        "hrp_address_share": prefixes.hrp_address_share(stats),
    }
    _write_to(args.summary, lambda out: write_json_report(summary, out), default=sys.stderr)
    return EXIT_OK


def _cmd_enrich(args) -> int:
    stats = _read_stats_file(args.stats)
    with _open_in(args.routes) as source:
        table = routing.load_route_table(source, args.policy)
    enriched = routing.enrich(stats, table)
    _write_stats(enriched, args)
    split = table.split_slash24s()
    load = table.load_stats
    summary = {
        "routes_loaded": load.entries_loaded,
        "route_lines_read": load.lines_read,
        "route_invalid_lines": load.invalid_lines,
        "route_normalized_lines": load.normalized_lines,
        "route_duplicate_conflicts": load.duplicate_conflicts,
        "route_duplicate_repeats": load.duplicate_repeats,
        "prefixes": len(enriched),
        "prefixes_with_origin": sum(1 for s in enriched if s.origin_asn is not None),
        "split_slash24_ambiguities": sum(1 for s in enriched if s.prefix in split),
    }
    _write_to(args.summary, lambda out: write_json_report(summary, out), default=sys.stderr)
    return EXIT_OK


def _cmd_portmatrix(args) -> int:
    scans = [_read_stats_file(path) for path in args.stats]
    report = analytics.port_profile(scans)
    ports = sorted({s.meta.port_key() for scan in scans for s in scan})
    doc = {
        "ports": [f"{proto}/{port}" for proto, port in ports],
        "port_count": report.port_count,
        "prefixes": len(report.profiles),
        "hrp_prefixes": sum(1 for p in report.profiles if p.ports_hrp),
        "responsive_histogram": [
            {"ports": bucket, "prefixes": count}
            for bucket, count in report.responsive_histogram.items()
        ],
        "hrp_histogram": [
            {"ports": bucket, "prefixes": count} for bucket, count in report.hrp_histogram.items()
        ],
    }
    if args.as_summary is not None:
        rows = routing.as_summary([s for scan in scans for s in scan])
        as_doc = [
            {
                "asn": row.asn,
                "visible_24s": row.visible_24s,
                "hrp_count": row.hrp_count,
                "hrp_share": row.hrp_share,
                "ports_visible": row.ports_visible,
                "ports_with_hrps": row.ports_with_hrps,
            }
            for row in rows
        ]
        _write_to(args.as_summary, lambda out: write_json_report(as_doc, out))
    if args.histogram_csv is not None:
        _write_to(args.histogram_csv, lambda out: analytics.write_port_histogram_csv(report, out))
    if args.profiles_csv is not None:
        _write_to(args.profiles_csv, lambda out: analytics.write_port_profiles_csv(report, out))
    _write_to(args.output, lambda out: write_json_report(doc, out), default=sys.stdout)
    return EXIT_OK


def _series_inputs(args):
    scan_ids = args.scan_ids.split(",") if args.scan_ids else [_stem(p) for p in args.stats]
    if len(scan_ids) != len(args.stats):
        raise SchemaError(f"--scan-ids names {len(scan_ids)} scans but {len(args.stats)} files given")
    if args.timestamps:
        stamps = [parse_timestamp(t) for t in args.timestamps.split(",")]
        if len(stamps) != len(args.stats):
            raise SchemaError(
                f"--timestamps names {len(stamps)} scans but {len(args.stats)} files given"
            )
    else:
        # Argument order is the series order when no explicit timestamps come in.
        stamps = [_EPOCH + timedelta(days=i) for i in range(len(args.stats))]
    scans = [
        _read_stats_file(path, scan_id, stamp)
        for path, scan_id, stamp in zip(args.stats, scan_ids, stamps)
    ]
    _check_port_agreement(list(zip(args.stats, scans)))
    return scans


def _cmd_stability(args) -> int:
    scans = _series_inputs(args)
    points = analytics.stability_series(scans)
    summary = analytics.persistence(scans, args.persistence_n)
    key = scans[0][0].meta.port_key()
    doc = {
        "proto": key[0],
        "port": key[1],
        "series": [
            {
                "scan_id": p.scan_id,
                "timestamp": format_timestamp(p.timestamp),
                "hrp_address_share_90": p.hrp_address_share_90,
                "hrp_address_share_95": p.hrp_address_share_95,
                "hrp_count": p.hrp_count,
            }
            for p in points
        ],
        "persistence": {
            "total_scans": summary.total_scans,
            "distinct_hrps": summary.distinct_hrps,
            "half_period_count": summary.half_period_count,
            "full_period_count": summary.full_period_count,
            "missing_at_most_n": summary.missing_at_most_n,
            "missing_at_most_n_count": summary.missing_at_most_n_count,
            "missing_at_most_n_share": summary.missing_at_most_n_share,
        },
    }
    if args.series_csv is not None:
        _write_to(args.series_csv, lambda out: analytics.write_series_csv(points, out))
    _write_to(args.output, lambda out: write_json_report(doc, out), default=sys.stdout)
    return EXIT_OK


def _cmd_vantage(args) -> int:
    stats_a = _read_stats_file(args.stats_a)
    stats_b = _read_stats_file(args.stats_b)
    _check_port_agreement([(args.stats_a, stats_a), (args.stats_b, stats_b)])
    diff = analytics.vantage_diff(prefixes.hrp_set(stats_a), prefixes.hrp_set(stats_b))
    key = _file_port_key(stats_a) or _file_port_key(stats_b)
    doc = {
        "proto": key[0] if key else None,
        "port": key[1] if key else None,
        "vantage_a": args.stats_a,
        "vantage_b": args.stats_b,
        "only_a": [format_slash24(p) for p in sorted(diff.only_a)],
        "only_b": [format_slash24(p) for p in sorted(diff.only_b)],
        "only_a_count": len(diff.only_a),
        "only_b_count": len(diff.only_b),
        "both_count": len(diff.both),
        "divergence": diff.divergence,
    }
    _write_to(args.output, lambda out: write_json_report(doc, out), default=sys.stdout)
    return EXIT_OK


def _cmd_applayer(args) -> int:
    occupancy, _ = _load_occupancy(args)
    stats = prefixes.classify(occupancy, HrpThreshold(args.threshold))
    hrps = prefixes.hrp_set(stats)
    with _open_in(args.results) as source:
        results = applayer.read_app_results(source, _stem(args.results))
    _check_results_port(results, args, args.results)
    report_set = applayer.hrp_app_report(results, hrps, occupancy, args.exclude_app_errors)
    comparison = applayer.address_comparison(results, hrps, occupancy)
    cdf = applayer.success_cdf(report_set.reports)
    steps = sorted({r.success_count for r in report_set.reports})
    doc = {
        "proto": args.proto,
        "port": args.port,
        "threshold_fraction": args.threshold,
        "exclude_app_errors": args.exclude_app_errors,
        "hrp_count": len(hrps),
        "anomalies": report_set.anomaly_count,
        "duplicate_results": report_set.duplicate_count,
        "reports": [
            {
                "prefix": format_slash24(r.prefix),
                "denominator": r.denominator,
                "success_count": r.success_count,
                "success_fraction": r.success_fraction,
                "any_success": r.any_success,
                "gt90_success": r.gt90_success,
                "same_identifier": r.same_identifier,
                "dominant_identifier_share": r.dominant_identifier_share,
            }
            for r in report_set.reports
        ],
        "address_comparison": {
            "non_hrp_targets": comparison.non_hrp_targets,
            "non_hrp_successes": comparison.non_hrp_successes,
            "hrp_targets": comparison.hrp_targets,
            "hrp_successes": comparison.hrp_successes,
            "non_hrp_success_rate": comparison.non_hrp_success_rate,
            "hrp_success_rate": comparison.hrp_success_rate,
            "gt90_subset_share": comparison.gt90_subset_share,
            "gt90_same_identifier_share": comparison.gt90_same_identifier_share,
        },
        "success_cdf": {
            "total_reports": cdf.total_reports,
            "steps": [
                {"success_count": c, "cumulative_share": cdf.at(c)} for c in steps
            ],
        },
    }
    _write_to(args.output, lambda out: write_json_report(doc, out), default=sys.stdout)
    return EXIT_OK


def _policy_from_args(args) -> planner.SamplePolicy:
    return planner.SamplePolicy(
        k=args.k,
        rng_seed=args.rng_seed,
        proxy_max_success=args.proxy_max_success,
        cdn_min_success=args.cdn_min_success,
        include_unresponsive_seeds=not args.no_unresponsive_seeds,
    )


def _cmd_plan(args) -> int:
    occupancy, _ = _load_occupancy(args)
    stats = prefixes.classify(occupancy, HrpThreshold(args.threshold))
    hrps = prefixes.hrp_set(stats)
    if args.seeds is not None:
        with _open_in(args.seeds) as source:
            seeds = planner.read_dns_seeds(source)
    else:
        seeds = []
    policy = _policy_from_args(args)
    plan = planner.build_plan(occupancy, hrps, seeds, policy)
    _write_to(args.output, lambda out: planner.write_plan_csv(plan, out), default=sys.stdout)
    if args.targets_out is not None:
        _write_to(args.targets_out, lambda out: planner.write_plan_targets(plan, out))
    summary = {
        "proto": args.proto,
        "port": args.port,
        "threshold_fraction": args.threshold,
        "k": policy.k,
        "rng_seed": policy.rng_seed,
        "hrp_prefixes": len(hrps),
        "dns_seeds": len(seeds),
        **planner.plan_summary(plan),
    }
    _write_to(args.summary, lambda out: write_json_report(summary, out), default=sys.stderr)
    return EXIT_OK


def _cmd_escalate(args) -> int:
    with _open_in(args.plan) as source:
        plan = planner.read_plan_csv(source)
    with _open_in(args.results) as source:
        results = applayer.read_app_results(source, _stem(args.results))
    _check_results_port(results, args, args.results)
    occupancy, _ = _load_occupancy(args)
    policy = _policy_from_args(args)
    by_prefix: dict[int, list] = {}
    off_plan = 0
    for r in results:
        prefix = r.target >> 8
        entry = plan.entries.get(prefix)
        if entry is None or entry.strategy != planner.STRATEGY_SAMPLED:
            off_plan += 1
            continue
        by_prefix.setdefault(prefix, []).append(r)
    classes = {
        prefix: planner.classify_sample(sample, policy) for prefix, sample in sorted(by_prefix.items())
    }
    escalated = planner.escalate(plan, classes, occupancy)
    _write_to(args.output, lambda out: planner.write_plan_csv(escalated, out), default=sys.stdout)
    class_counts = {name: 0 for name in planner.SCENARIOS}
    for scenario in classes.values():
        class_counts[scenario] += 1
    summary = {
        "classified_prefixes": len(classes),
        "scenario_counts": class_counts,
        "off_plan_results": off_plan,
        "added_targets": escalated.total_targets() - plan.total_targets(),
        **planner.plan_summary(escalated),
    }
    _write_to(args.summary, lambda out: write_json_report(summary, out), default=sys.stderr)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    with _open_in(args.plan) as source:
        plan = planner.read_plan_csv(source)
    with _open_in(args.truth) as source:
        truth = applayer.read_app_results(source, _stem(args.truth))
    metrics = planner.evaluate_plan(plan, truth)
    doc = {
        "handshakes_planned": metrics.handshakes_planned,
        "handshakes_full_baseline": metrics.handshakes_full_baseline,
        "reduction": metrics.reduction,
        "identifier_coverage": metrics.identifier_coverage,
    }
    _write_to(args.output, lambda out: write_json_report(doc, out), default=sys.stdout)
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrpkit",
        description="Detect and analyze highly responsive /24 prefixes in port-scan output.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    meta = argparse.ArgumentParser(add_help=False)
    meta.add_argument("--port", type=_port, required=True, help="scanned port")
    meta.add_argument("--proto", choices=("tcp", "udp"), default="tcp", help="scan protocol")
    meta.add_argument("--scan-id", default=None, help="scan identifier (default: input file stem)")
    meta.add_argument(
        "--timestamp", type=_timestamp, default=None,
        help="scan time, ISO 8601 (default: 1970-01-01T00:00:00Z for reproducible output)",
    )
    meta.add_argument("--vantage", default=None, help="vantage point label")

    scan_input = argparse.ArgumentParser(add_help=False)
    scan_input.add_argument("--format", choices=(PLAIN, CSV_SADDR), default=PLAIN,
                            help="scan file layout")
    scan_input.add_argument("--policy", choices=(STRICT, LENIENT), default=LENIENT,
                            help="invalid input lines: abort (strict) or count and skip")

    thresh = argparse.ArgumentParser(add_help=False)
    thresh.add_argument("--threshold", type=_threshold, default=0.90,
                        help="responsive fraction of 256 that makes a /24 an HRP")

    output = argparse.ArgumentParser(add_help=False)
    output.add_argument("--output", default=None, help="output path ('-' for stdout, the default)")

    summary_opt = argparse.ArgumentParser(add_help=False)
    summary_opt.add_argument("--summary", default=None,
                             help="write the run summary JSON here instead of stderr")

    stats_format = argparse.ArgumentParser(add_help=False)
    stats_format.add_argument("--output-format", choices=("csv", "jsonl"), default="csv",
                              help="prefix stats output form")

    p = sub.add_parser("detect", parents=[meta, scan_input, thresh, output, summary_opt, stats_format],
                       help="aggregate a scan into /24 stats and flag HRPs")
    p.add_argument("scan", nargs="+", help="scan result file(s); shards of one scan")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("enrich", parents=[output, summary_opt, stats_format],
                       help="attach origin AS and covering route to prefix stats")
    p.add_argument("--policy", choices=(STRICT, LENIENT), default=LENIENT,
                   help="route snapshot problems: abort (strict) or count and continue")
    p.add_argument("stats", help="prefix stats CSV from detect")
    p.add_argument("routes", help="route snapshot CSV: prefix/length,asn")
    p.set_defaults(func=_cmd_enrich)

    p = sub.add_parser("portmatrix", parents=[output],
                       help="cross-port responsiveness profile of prefixes")
    p.add_argument("--histogram-csv", default=None, help="also write the bucket histogram as CSV")
    p.add_argument("--profiles-csv", default=None, help="also write per-prefix profiles as CSV")
    p.add_argument("--as-summary", default=None,
                   help="also write the per-AS rollup JSON (needs enriched stats)")
    p.add_argument("stats", nargs="+", help="one classified stats CSV per port")
    p.set_defaults(func=_cmd_portmatrix)

    p = sub.add_parser("stability", parents=[output],
                       help="HRP share over an ordered series of scans, plus persistence")
    p.add_argument("--persistence-n", type=int, default=5,
                   help="max missed scans for the missing-at-most-n share")
    p.add_argument("--scan-ids", default=None, help="comma-separated scan ids (default: file stems)")
    p.add_argument("--timestamps", default=None,
                   help="comma-separated ISO timestamps (default: argument order)")
    p.add_argument("--series-csv", default=None, help="also write the series as CSV")
    p.add_argument("stats", nargs="+", help="two or more classified stats CSVs, oldest first")
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("vantage", parents=[output],
                       help="diff the HRP sets of two vantage points")
    p.add_argument("stats_a", help="classified stats CSV from vantage A")
    p.add_argument("stats_b", help="classified stats CSV from vantage B")
    p.set_defaults(func=_cmd_vantage)

    p = sub.add_parser("applayer", parents=[meta, scan_input, thresh, output],
                       help="join application-layer results with HRP classifications")
    p.add_argument("--exclude-app-errors", action="store_true",
                   help="disregard app_error targets instead of counting them as failures")
    p.add_argument("results", help="application results CSV: ip,port,proto,status,identifier")
    p.add_argument("scan", nargs="+", help="the port scan the results were targeted from")
    p.set_defaults(func=_cmd_applayer)

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--k", type=int, default=10, help="targets per HRP before escalation")
    sampling.add_argument("--rng-seed", type=int, default=0, help="sampling seed (fixed generator)")
    sampling.add_argument("--proxy-max-success", type=float, default=0.10,
                          help="sampled success rate at or below this is a proxy")
    sampling.add_argument("--cdn-min-success", type=float, default=0.90,
                          help="sampled success rate at or above this with one identifier is cdn_like")
    sampling.add_argument("--no-unresponsive-seeds", action="store_true",
                          help="drop DNS seeds the port scan did not see")

    p = sub.add_parser("plan", parents=[meta, scan_input, thresh, output, summary_opt, sampling],
                       help="build an HRP-aware application-layer target plan")
    p.add_argument("--targets-out", default=None, help="also write targets one per line")
    p.add_argument("scan", nargs=1, help="port scan result file")
    p.add_argument("seeds", nargs="?", default=None, help="DNS seeds CSV: ip,name_count")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("escalate", parents=[meta, scan_input, output, summary_opt, sampling],
                       help="classify sampled outcomes and escalate diverse HRPs to full scans")
    p.add_argument("plan", help="plan CSV produced by plan")
    p.add_argument("results", help="application results CSV for the sampled targets")
    p.add_argument("scan", nargs=1, help="port scan result file backing the plan")
    p.set_defaults(func=_cmd_escalate)

    p = sub.add_parser("evaluate", parents=[output],
                       help="score a plan against full-scan ground truth")
    p.add_argument("plan", help="plan CSV")
    p.add_argument("truth", help="application results CSV covering every responsive address")
    p.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (IngestError, RouteParseError) as exc:
        print(f"hrpkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SchemaError, PlanEvaluationError, ValueError) as exc:
        print(f"hrpkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"hrpkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
