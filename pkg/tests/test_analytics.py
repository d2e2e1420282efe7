"""Cross-port profiles, stability series, persistence, vantage diffing."""

from __future__ import annotations

import random

import pytest

from hrpkit.analytics import (
    persistence,
    port_profile,
    stability_series,
    vantage_diff,
)
from hrpkit.prefixes import classify

from conftest import make_meta, table_with_counts


def _scan(counts: dict[int, int], port=443, scan_id="s", week=0):
    meta = make_meta(port=port, scan_id=scan_id, week=week)
    return classify(table_with_counts(counts, meta))


def test_port_profile_counts():
    scans = [
        _scan({1: 10, 2: 256}, port=80),
        _scan({1: 256, 2: 256}, port=443),
    ]
    report = port_profile(scans)
    by_prefix = {p.prefix: p for p in report.profiles}
    assert (by_prefix[1].ports_responsive, by_prefix[1].ports_hrp) == (2, 1)
    assert (by_prefix[2].ports_responsive, by_prefix[2].ports_hrp) == (2, 2)


def test_port_profile_hrp_on_all_supplied_ports():
    ports = [80, 443, 8080, 8443, 25]
    scans = [_scan({7: 256}, port=port) for port in ports]
    report = port_profile(scans)
    (profile,) = report.profiles
    assert (profile.ports_responsive, profile.ports_hrp) == (5, 5)


def test_port_profile_histogram_planted_single_port_share():
    # 40 HRP prefixes; half are HRPs on exactly one port, half on both ports.
    port_80 = {p: 256 for p in range(40)}
    port_443 = {p: 256 for p in range(20)}
    port_443.update({p: 10 for p in range(20, 40)})
    report = port_profile([_scan(port_80, port=80), _scan(port_443, port=443)])
    hrp_prefixes = sum(report.hrp_histogram.values())
    assert hrp_prefixes == 40
    assert report.hrp_histogram[1] / hrp_prefixes == 0.5
    assert report.hrp_histogram[2] / hrp_prefixes == 0.5


def test_port_profile_rejects_duplicate_ports():
    with pytest.raises(ValueError, match="duplicate"):
        port_profile([_scan({1: 5}, port=443), _scan({2: 5}, port=443)])


def test_stability_identical_scans_give_identical_shares():
    counts = {1: 256, 2: 100}
    scans = [_scan(counts, scan_id="a", week=0), _scan(counts, scan_id="b", week=1)]
    points = stability_series(scans)
    assert len(points) == 2
    assert points[0].hrp_address_share_90 == points[1].hrp_address_share_90
    assert points[0].hrp_address_share_95 == points[1].hrp_address_share_95
    assert points[0].hrp_count == points[1].hrp_count == 1


def test_stability_no_hrps_gives_zero_shares():
    (point,) = stability_series([_scan({1: 10, 2: 30})])
    assert point.hrp_address_share_90 == 0.0
    assert point.hrp_address_share_95 == 0.0
    assert point.hrp_count == 0


def test_stability_flat_planted_series():
    # Per scan: 3 full /24s (768 addresses) + 256 prefixes of 7 (1792) -> share 0.30.
    counts = {p: 256 for p in range(3)}
    counts.update({100 + p: 7 for p in range(256)})
    scans = [_scan(counts, scan_id=f"w{i}", week=i) for i in range(10)]
    points = stability_series(scans)
    assert [p.hrp_address_share_90 for p in points] == [768 / 2560] * 10
    assert [p.hrp_address_share_95 for p in points] == [768 / 2560] * 10


def test_stability_share95_never_exceeds_share90():
    rng = random.Random(8)
    for week in range(20):
        counts = {p: rng.choice([1, 50, 231, 240, 244, 256]) for p in range(30)}
        (point,) = stability_series([_scan(counts, week=week)])
        assert point.hrp_address_share_95 <= point.hrp_address_share_90


def test_stability_rejects_unordered_timestamps():
    scans = [_scan({1: 5}, scan_id="late", week=3), _scan({1: 5}, scan_id="early", week=1)]
    with pytest.raises(ValueError, match="ascending"):
        stability_series(scans)


def test_stability_rejects_port_mismatch():
    scans = [_scan({1: 5}, port=443, week=0), _scan({1: 5}, port=80, week=1)]
    with pytest.raises(ValueError, match="mismatch"):
        stability_series(scans)


def test_persistence_counts():
    # Prefix 1 is an HRP in scans 0..6 (7 of 10), prefix 2 in all 10.
    scans = []
    for week in range(10):
        counts = {2: 256}
        counts[1] = 256 if week < 7 else 10
        scans.append(_scan(counts, scan_id=f"w{week}", week=week))
    summary = persistence(scans, missing_at_most_n=5)
    assert summary.total_scans == 10
    assert summary.distinct_hrps == 2
    assert summary.scans_classified == {1: 7, 2: 10}
    assert summary.half_period_count == 2
    assert summary.full_period_count == 1
    assert summary.missing_at_most_n_count == 2
    assert summary.missing_at_most_n_share == 1.0


def test_persistence_excludes_prefixes_missing_too_often():
    scans = []
    for week in range(10):
        counts = {1: 256 if week < 4 else 10, 2: 256}
        scans.append(_scan(counts, week=week))
    summary = persistence(scans, missing_at_most_n=5)
    assert summary.scans_classified[1] == 4
    assert summary.missing_at_most_n_count == 1  # prefix 1 misses 6 > 5
    assert summary.half_period_count == 1
    assert summary.missing_at_most_n_share == 0.5


def test_persistence_is_order_insensitive():
    rng = random.Random(13)
    memberships = [{1: 256, 2: 256}, {1: 256, 2: 10}, {2: 256, 3: 256}, {1: 256}]
    baseline = persistence([_scan(m, week=i) for i, m in enumerate(memberships)])
    for _ in range(5):
        shuffled = memberships[:]
        rng.shuffle(shuffled)
        again = persistence([_scan(m, week=i) for i, m in enumerate(shuffled)])
        assert again.scans_classified == baseline.scans_classified
        assert again.half_period_count == baseline.half_period_count
        assert again.missing_at_most_n_share == baseline.missing_at_most_n_share


def test_persistence_needs_two_scans():
    with pytest.raises(ValueError):
        persistence([_scan({1: 256})])


def test_vantage_diff_identical_and_disjoint():
    assert vantage_diff({1, 2}, {1, 2}).divergence == 0.0
    disjoint = vantage_diff({1, 2}, {3, 4})
    assert disjoint.divergence == 1.0
    assert disjoint.both == frozenset()


def test_vantage_diff_small_divergence():
    shared = set(range(99))
    diff = vantage_diff(shared | {1000}, shared | {2000})
    assert diff.only_a == {1000}
    assert diff.only_b == {2000}
    assert diff.divergence == 2 / 101


def test_vantage_diff_empty_sets():
    assert vantage_diff(set(), set()).divergence == 0.0


def test_vantage_diff_mirrors():
    rng = random.Random(4)
    for _ in range(20):
        a = {rng.randrange(100) for _ in range(rng.randrange(0, 30))}
        b = {rng.randrange(100) for _ in range(rng.randrange(0, 30))}
        ab = vantage_diff(a, b)
        ba = vantage_diff(b, a)
        assert ab.only_a == ba.only_b
        assert ab.only_b == ba.only_a
        assert ab.both == ba.both
        assert ab.divergence == ba.divergence
        assert not (ab.only_a & ab.only_b) and not (ab.only_a & ab.both) and not (ab.only_b & ab.both)
