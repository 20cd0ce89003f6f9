import math

import pytest
from hypothesis import given, settings, strategies as st

from conftest import stationary_trace
from navisim.dissem import DeliveryLog, DisseminationRequest, Reception, SelectionRecord, Transmission
from navisim.metrics import (AGGREGATE_COLUMNS, CDF_COLUMNS, REQUEST_COLUMNS, ConfigReport, RequestMetrics,
                             aggregate, config_id, covered_area, degree_cdf, degree_samples, delay_stats,
                             mean_ci, overhead, read_csv, request_metrics, vi_usage, write_report)
from navisim.model import Capability
from navisim.simcore import RequestRecord
from navisim.trace import Rect

LTE, SR = Capability.LTE, Capability.SHORT_RANGE
AREA = Rect.from_size(600, 700)


def _record(rid=0, pop=range(45), issue_us=0):
    return RequestRecord(DisseminationRequest(rid, AREA), issue_us, frozenset(pop), frozenset(pop))


def test_covered_area_examples():
    log = DeliveryLog()
    for v in range(5):
        log.receive(Reception(0, v, 50_000, LTE, 0, "geoserver"))
    assert covered_area(log, 0, range(45)) == pytest.approx(11.11, abs=0.01)
    assert covered_area(log, 0, range(5)) == 100.0
    assert covered_area(log, 0, []) is None
    # receivers outside the population do not count
    assert covered_area(log, 0, [3, 4, 100, 101]) == 50.0


def test_all_lte_byte_accounting():
    log = DeliveryLog()
    log.transmit(Transmission(0, LTE, 100, "request", "application", "geoserver", 0))
    for v in range(45):
        log.transmit(Transmission(0, LTE, 560, "lte_unicast", "geoserver", v, 0))
    log.transmit(Transmission(0, SR, 300, "cam", 1, "broadcast"))          # background, excluded
    assert overhead(log, 0) == {"Lte": 25_300, "ShortRange": 0}


def test_navi_byte_accounting_beats_all_lte():
    log = DeliveryLog()
    log.transmit(Transmission(0, LTE, 100, "request", "application", "geoserver", 0))
    for v in range(7):
        log.transmit(Transmission(0, LTE, 700, "vi_notify", "geoserver", v, 0))
        log.transmit(Transmission(50_000, SR, 540, "local_broadcast", v, "broadcast", 0))
    log.selections.append(SelectionRecord(0, 0, tuple(range(7)), (3,) * 7, "k_reached"))
    (m,) = request_metrics(log, [_record()])
    assert (m.bytes_lte, m.bytes_sr) == (100 + 7 * 700, 7 * 540)
    assert m.bytes_total == 8_780 < 25_300
    assert m.vi_count == 7


def test_failed_request_costs_only_the_request():
    log = DeliveryLog()
    log.transmit(Transmission(0, LTE, 100, "request", "application", "geoserver", 0))
    (m,) = request_metrics(log, [_record()])
    assert (m.bytes_lte, m.bytes_sr, m.covered_area_pct, m.delay) == (100, 0, 0.0, None)
    assert vi_usage(None) == 0


def test_delays_and_stats():
    log = DeliveryLog()
    log.receive(Reception(0, 0, 1_050_000, LTE, 0, "geoserver"))
    for v in (1, 2, 3):
        log.receive(Reception(0, v, 1_055_000, SR, 1, 0))
    (m,) = request_metrics(log, [_record(issue_us=1_000_000)])
    assert sorted(m.delays) == [50.0, 55.0, 55.0, 55.0]
    assert m.delay.mean == 53.75 and m.delay.max == 55.0
    assert delay_stats([]) is None


def test_mean_ci_small_sample_uses_t():
    vals = [1.0, 2.0, 3.0, 4.0, 5.0]
    mean, lo, hi, n = mean_ci(vals)
    half = 2.776445 * math.sqrt(2.5) / math.sqrt(5)           # t(0.975, 4)
    assert (mean, n) == (3.0, 5)
    assert (lo, hi) == pytest.approx((3 - half, 3 + half), abs=1e-5)


def test_mean_ci_large_sample_uses_normal():
    vals = [float(i % 2) for i in range(40)]
    mean, lo, hi, _ = mean_ci(vals)
    sd = math.sqrt(sum((v - 0.5) ** 2 for v in vals) / 39)
    assert hi - mean == pytest.approx(1.959964 * sd / math.sqrt(40), abs=1e-6)


def test_mean_ci_degenerate():
    assert mean_ci([7.0] * 10)[1:3] == (7.0, 7.0)
    m, lo, hi, n = mean_ci([4.0])
    assert m == 4.0 and math.isnan(lo) and math.isnan(hi) and n == 1
    assert math.isnan(mean_ci([])[0])


def test_degree_samples_and_cdf():
    tr = stationary_trace({0: (0, 0), 1: (100, 0), 2: (200, 0)})
    s = degree_samples(tr, 100.0, duration=3.0)
    assert s == [1, 2, 1] * 3
    assert degree_cdf(s) == [(1, pytest.approx(2 / 3)), (2, 1.0)]
    assert degree_cdf([]) == []


@given(st.lists(st.integers(0, 40), min_size=1, max_size=200))
def test_degree_cdf_is_a_cdf(samples):
    cdf = degree_cdf(samples)
    ys = [c for _, c in cdf]
    assert ys == sorted(ys) and ys[-1] == pytest.approx(1.0)
    assert [d for d, _ in cdf] == sorted(set(samples))


def test_empty_report_set_writes_headers_only(tmp_path):
    paths = write_report([], str(tmp_path))
    assert (tmp_path / "metrics_requests.csv").read_text() == ",".join(REQUEST_COLUMNS) + "\n"
    assert (tmp_path / "metrics_aggregate.csv").read_text() == ",".join(AGGREGATE_COLUMNS) + "\n"
    assert (tmp_path / "degree_cdf.csv").read_text() == ",".join(CDF_COLUMNS) + "\n"
    assert set(paths) == {"requests", "aggregate", "degree_cdf"}


def _report(strategy, k, tx, covered, total):
    reqs = [RequestMetrics(i, c, k if strategy == "navi" else 0, {"Lte": b, "ShortRange": 0}, [50.0])
            for i, (c, b) in enumerate(zip(covered, total))]
    for m in reqs:
        m.delay = delay_stats(m.delays)
    return ConfigReport(config_id(strategy, k, tx), strategy, k, tx, reqs)


def test_csv_round_trip(tmp_path):
    covered = [100 / 3, 200 / 7, None, 12.345678901]
    reports = [_report("navi", 3, 16.0, covered, [1000, 1200, 100, 900]),
               _report("all_lte", 1, 16.0, [100.0] * 4, [25300] * 4)]
    write_report(reports, str(tmp_path), {16.0: [1, 2, 2, 3]})
    rows = read_csv(tmp_path / "metrics_requests.csv")
    assert len(rows) == 8 and rows[0]["config_id"] == "navi-k3-tx16"
    for row, c in zip(rows, covered):
        if c is None:
            assert row["covered_pct"] == ""
        else:
            assert float(row["covered_pct"]) == pytest.approx(c, rel=1e-6)
    agg = read_csv(tmp_path / "metrics_aggregate.csv")
    ratio = [r for r in agg if r["metric"] == "overhead_ratio_vs_all_lte"]
    assert len(ratio) == 1 and ratio[0]["config_id"] == "navi-k3-tx16"
    assert float(ratio[0]["mean"]) == pytest.approx((1000 + 1200 + 100 + 900) / 25300 / 4, rel=1e-6)
    cdf = read_csv(tmp_path / "degree_cdf.csv")
    assert [(r["degree"], float(r["cdf"])) for r in cdf] == [("1", 0.25), ("2", 0.75), ("3", 1.0)]


def test_aggregate_rows_per_config():
    reports = [_report("navi", 1, 23.0, [50.0, 60.0], [10, 20]),
               _report("all_lte", 1, 23.0, [100.0, 100.0], [40, 40])]
    rows = aggregate(reports)
    assert len([r for r in rows if r["config_id"] == "navi-k1-tx23"]) == 7
    assert len([r for r in rows if r["config_id"] == "all_lte-k1-tx23"]) == 6
    cov = next(r for r in rows if r["config_id"] == "navi-k1-tx23" and r["metric"] == "covered_pct")
    assert cov["mean"] == 55.0 and cov["n"] == 2


def test_config_id_format():
    assert config_id("navi", 5, 23.0) == "navi-k5-tx23"
    assert config_id("all_lte", 1, 20.5) == "all_lte-k1-tx20.5"
