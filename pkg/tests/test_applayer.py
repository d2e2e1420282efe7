"""Application-layer joins: per-HRP reports, address comparison, success CDF."""

from __future__ import annotations

import io
import random

import pytest

from hrpkit.applayer import (
    APP_ERROR,
    SUCCESS,
    UNREACHABLE,
    AppResult,
    address_comparison,
    hrp_app_report,
    read_app_results,
    success_cdf,
    write_app_results_csv,
)

from conftest import make_meta, table_with_counts

META = make_meta(scan_id="app")


def _result(addr: int, status: str = SUCCESS, identifier: str | None = None) -> AppResult:
    return AppResult(addr, META, status, identifier)


def _results_for(prefix: int, n_success: int, identifiers, n_fail: int = 0, fail=UNREACHABLE):
    """Successes on the first hosts of the prefix, failures right after."""
    results = []
    for host in range(n_success):
        ident = identifiers(host) if callable(identifiers) else identifiers
        results.append(_result((prefix << 8) | host, SUCCESS, ident))
    for host in range(n_success, n_success + n_fail):
        results.append(_result((prefix << 8) | host, fail))
    return results


def test_identifier_requires_success():
    with pytest.raises(ValueError):
        AppResult(1, META, UNREACHABLE, "h1")
    with pytest.raises(ValueError):
        AppResult(1, META, "timeout")


def test_report_high_success_single_identifier():
    occupancy = table_with_counts({5: 256})
    results = _results_for(5, 250, "h1", n_fail=6)
    report_set = hrp_app_report(results, {5}, occupancy)
    (report,) = report_set.reports
    assert report.denominator == 256
    assert report.success_count == 250
    assert report.success_fraction == 250 / 256
    assert report.any_success and report.gt90_success and report.same_identifier
    assert report.dominant_identifier_share == 1.0


def test_report_no_successes():
    occupancy = table_with_counts({5: 240})
    results = _results_for(5, 0, None, n_fail=240)
    (report,) = hrp_app_report(results, {5}, occupancy).reports
    assert not report.any_success
    assert report.success_count == 0
    assert report.dominant_identifier_share == 0.0


def test_report_gt90_boundary_is_exact():
    occupancy = table_with_counts({5: 256})
    results = _results_for(5, 231, lambda host: "h1" if host % 2 else "h2")
    (report,) = hrp_app_report(results, {5}, occupancy).reports
    # Oracle: cross multiplication, 231/256 > 9/10 iff 2310 > 2304.
    assert (231 * 10 > 256 * 9) is True
    assert report.gt90_success is True
    assert report.same_identifier is False
    # And one fewer success falls below the cut: 2300 < 2304.
    fewer = _results_for(5, 230, "h1")
    (report_230,) = hrp_app_report(fewer, {5}, occupancy).reports
    assert report_230.gt90_success is False


def test_success_without_identifier_breaks_same_identifier():
    occupancy = table_with_counts({5: 4})
    results = [
        _result((5 << 8) | 0, SUCCESS, "h1"),
        _result((5 << 8) | 1, SUCCESS, "h1"),
        _result((5 << 8) | 2, SUCCESS, None),
    ]
    (report,) = hrp_app_report(results, {5}, occupancy).reports
    assert report.same_identifier is False
    assert report.dominant_identifier_share == 2 / 3


def test_same_identifier_is_permutation_invariant():
    rng = random.Random(55)
    occupancy = table_with_counts({5: 16})
    results = _results_for(5, 10, "h1", n_fail=2)
    baseline = hrp_app_report(results, {5}, occupancy).reports
    for _ in range(5):
        shuffled = results[:]
        rng.shuffle(shuffled)
        assert hrp_app_report(shuffled, {5}, occupancy).reports == baseline


def test_hrps_without_results_still_reported():
    occupancy = table_with_counts({5: 256, 6: 256})
    report_set = hrp_app_report(_results_for(5, 3, "h1"), {5, 6}, occupancy)
    assert [r.prefix for r in report_set.reports] == [5, 6]
    assert report_set.reports[1].success_count == 0


def test_anomalous_and_duplicate_results_are_counted():
    occupancy = table_with_counts({5: 10})  # hosts 0..9 responsive
    results = [
        _result((5 << 8) | 1, SUCCESS, "h1"),
        _result((5 << 8) | 1, SUCCESS, "h2"),  # duplicate target, first kept
        _result((5 << 8) | 200, SUCCESS, "h3"),  # no occupancy bit
    ]
    report_set = hrp_app_report(results, {5}, occupancy)
    assert report_set.duplicate_count == 1
    assert report_set.anomaly_count == 1
    (report,) = report_set.reports
    assert report.success_count == 1
    assert report.same_identifier is True  # the h2 row was a duplicate


def test_report_rejects_port_mismatch_and_missing_hrp():
    occupancy = table_with_counts({5: 10})
    other_port = AppResult(5 << 8, make_meta(port=80), SUCCESS, "x")
    with pytest.raises(ValueError, match="port/proto"):
        hrp_app_report([other_port], {5}, occupancy)
    with pytest.raises(ValueError, match="missing"):
        hrp_app_report([], {5, 77}, occupancy)


def test_address_comparison_rates():
    # 100 non-HRP targets with 89 successes, plus one HRP fully succeeding.
    counts = {p: 1 for p in range(100)}
    counts[1000] = 256
    occupancy = table_with_counts(counts)
    results = [_result(p << 8, SUCCESS if p < 89 else UNREACHABLE) for p in range(100)]
    results += _results_for(1000, 256, "h1")
    comparison = address_comparison(results, {1000}, occupancy)
    assert comparison.non_hrp_success_rate == 0.89
    assert comparison.hrp_success_rate == 1.0
    assert comparison.gt90_subset_share == 1.0
    assert comparison.non_hrp_targets + comparison.hrp_targets == len(results)


def test_address_comparison_planted_gt90_identifier_share():
    # 25 HRPs, each 256 responsive with 250 successes (gt90). 23 prefixes
    # serve one identifier; 2 serve mixed identifiers.
    counts = {p: 256 for p in range(25)}
    occupancy = table_with_counts(counts)
    results = []
    for p in range(23):
        results += _results_for(p, 250, f"id{p}", n_fail=6)
    for p in range(23, 25):
        results += _results_for(p, 250, lambda host: f"mix{host % 5}", n_fail=6)
    comparison = address_comparison(results, set(range(25)), occupancy)
    # Oracle: 23*250 single-identifier successes of 25*250 gt90 successes.
    assert comparison.gt90_subset_share == 1.0
    assert comparison.gt90_same_identifier_share == (23 * 250) / (25 * 250)
    assert comparison.gt90_same_identifier_share == 0.92


def test_address_comparison_empty_partition_is_undefined():
    occupancy = table_with_counts({5: 256})
    results = _results_for(5, 10, "h1")
    comparison = address_comparison(results, {5}, occupancy)
    assert comparison.non_hrp_success_rate is None
    assert comparison.hrp_success_rate == 1.0
    no_hrp_successes = address_comparison(_results_for(5, 0, None, n_fail=5), {5}, occupancy)
    assert no_hrp_successes.hrp_success_rate == 0.0
    assert no_hrp_successes.gt90_subset_share is None
    assert no_hrp_successes.gt90_same_identifier_share is None


def test_app_error_counts_as_failure():
    occupancy = table_with_counts({5: 10})
    results = _results_for(5, 5, "h1", n_fail=5, fail=APP_ERROR)
    (report,) = hrp_app_report(results, {5}, occupancy).reports
    assert report.success_count == 5
    assert report.success_fraction == 0.5


def test_app_errors_can_be_disregarded():
    # 5 successes, 3 SNI-style errors, 2 silent: excluding errors shrinks the
    # denominator to 7 and flips nothing else.
    occupancy = table_with_counts({5: 10})
    results = _results_for(5, 5, "h1", n_fail=3, fail=APP_ERROR)
    (report,) = hrp_app_report(results, {5}, occupancy, exclude_app_errors=True).reports
    assert report.denominator == 7
    assert report.success_fraction == 5 / 7
    assert report.gt90_success is False
    all_errors = _results_for(5, 0, None, n_fail=10, fail=APP_ERROR)
    (dark,) = hrp_app_report(all_errors, {5}, occupancy, exclude_app_errors=True).reports
    assert dark.denominator == 0
    assert dark.success_fraction == 0.0
    assert dark.gt90_success is False


def test_success_cdf_all_zero():
    occupancy = table_with_counts({p: 256 for p in range(4)})
    reports = hrp_app_report([], set(range(4)), occupancy).reports
    cdf = success_cdf(reports)
    assert cdf.at(0) == 1.0
    assert cdf.at(256) == 1.0


def test_success_cdf_uniform_three_levels():
    counts = {0: 256, 1: 256, 2: 256}
    occupancy = table_with_counts(counts)
    results = _results_for(1, 128, "a") + _results_for(2, 256, "b")
    reports = hrp_app_report(results, {0, 1, 2}, occupancy).reports
    cdf = success_cdf(reports)
    assert cdf.at(0) == 1 / 3
    assert cdf.at(128) == 2 / 3
    assert cdf.at(256) == 1.0
    assert cdf.at(127) == cdf.at(0)  # step function


def test_success_cdf_planted_twenty_percent_dark():
    counts = {p: 256 for p in range(10)}
    occupancy = table_with_counts(counts)
    results = []
    for p in range(2, 10):  # prefixes 0 and 1 stay dark
        results += _results_for(p, 200, "h")
    reports = hrp_app_report(results, set(range(10)), occupancy).reports
    cdf = success_cdf(reports)
    assert cdf.at(0) == 0.20
    values = [cdf.at(c) for c in range(257)]
    assert values == sorted(values)
    assert values[-1] == 1.0


def test_success_cdf_empty():
    cdf = success_cdf([])
    assert cdf.total_reports == 0
    assert cdf.at(0) == 0.0


def test_results_csv_roundtrip():
    results = [
        _result(0xC6336407, SUCCESS, "sha256:aa"),
        _result(0xC6336408, APP_ERROR),
        _result(0xC6336409, UNREACHABLE),
    ]
    out = io.StringIO()
    write_app_results_csv(results, out)
    parsed = read_app_results(io.StringIO(out.getvalue()), scan_id="app")
    assert [(r.target, r.status, r.identifier) for r in parsed] == [
        (r.target, r.status, r.identifier) for r in results
    ]
    again = io.StringIO()
    write_app_results_csv(parsed, again)
    assert again.getvalue() == out.getvalue()
