"""Per-request metrics, confidence intervals, degree CDFs and CSV output."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .dissem import ALL_LTE, DISSEMINATION_PURPOSES, NAVI, DeliveryLog
from .model import Capability
from .radio import connectivity_snapshot
from .trace import MobilityTrace, positions_at

REQUEST_COLUMNS = ["config_id", "request_id", "strategy", "k", "tx_power_dbm", "covered_pct", "vi_count",
                   "bytes_lte", "bytes_sr", "delay_mean_ms", "delay_p95_ms"]
AGGREGATE_COLUMNS = ["config_id", "metric", "mean", "ci95_low", "ci95_high", "n"]
CDF_COLUMNS = ["tx_power_dbm", "degree", "cdf"]

AGGREGATE_METRICS = ("covered_pct", "vi_count", "bytes_lte", "bytes_sr", "bytes_total", "delay_mean_ms",
                     "overhead_ratio_vs_all_lte")


@dataclass(frozen=True)
class DelayStats:
    mean: float
    p50: float
    p95: float
    max: float


@dataclass
class RequestMetrics:
    request: int
    covered_area_pct: Optional[float]
    vi_count: int
    overhead_bytes: Dict[str, int]
    delays: List[float]              # ms
    delay: Optional[DelayStats] = None

    @property
    def bytes_lte(self) -> int:
        return self.overhead_bytes.get(Capability.LTE.value, 0)

    @property
    def bytes_sr(self) -> int:
        return self.overhead_bytes.get(Capability.SHORT_RANGE.value, 0)

    @property
    def bytes_total(self) -> int:
        return self.bytes_lte + self.bytes_sr


def covered_area(log: DeliveryLog, request: int, population: Iterable[int]) -> Optional[float]:
    """Percentage of the in-area population that received ``request``; None if nobody was there."""
    pop = set(population)
    if not pop:
        return None
    return 100.0 * len(log.receivers(request) & pop) / len(pop)


def vi_usage(selection) -> int:
    return len(selection.selected) if selection is not None else 0


def overhead(log: DeliveryLog, request: int) -> Dict[str, int]:
    out = {Capability.LTE.value: 0, Capability.SHORT_RANGE.value: 0}
    for tx in log.transmissions:
        if tx.request == request and tx.purpose in DISSEMINATION_PURPOSES:
            out[tx.technology.value] += tx.bytes
    return out


def background_overhead(log: DeliveryLog) -> Dict[str, Dict[str, int]]:
    """Bytes per purpose and technology for the cam / nt_upload traffic."""
    out: Dict[str, Dict[str, int]] = {}
    for tx in log.transmissions:
        if tx.purpose in ("cam", "nt_upload"):
            per = out.setdefault(tx.purpose, {})
            per[tx.technology.value] = per.get(tx.technology.value, 0) + tx.bytes
    return out


def request_delays(log: DeliveryLog, request: int, issue_us: int) -> List[float]:
    return [(r.time_us - issue_us) / 1000.0 for r in log.receptions if r.request == request]


def delay_stats(delays: Sequence[float]) -> Optional[DelayStats]:
    if not delays:
        return None
    arr = np.asarray(delays, dtype=float)
    return DelayStats(float(arr.mean()), float(np.percentile(arr, 50)), float(np.percentile(arr, 95)),
                      float(arr.max()))


def request_metrics(log: DeliveryLog, requests) -> List[RequestMetrics]:
    """One RequestMetrics per RequestRecord, in request order."""
    selections = {s.request: s for s in log.selections}
    # index once; the log can hold hundreds of thousands of records
    rx_by_req: Dict[int, list] = {}
    for r in log.receptions:
        rx_by_req.setdefault(r.request, []).append(r)
    bytes_by_req: Dict[int, Dict[str, int]] = {}
    for tx in log.transmissions:
        if tx.request is not None and tx.purpose in DISSEMINATION_PURPOSES:
            per = bytes_by_req.setdefault(tx.request, {Capability.LTE.value: 0, Capability.SHORT_RANGE.value: 0})
            per[tx.technology.value] += tx.bytes
    out = []
    for rec in requests:
        rid = rec.request.id
        rxs = rx_by_req.get(rid, [])
        pop = rec.population
        covered = (100.0 * len({r.vehicle for r in rxs} & pop) / len(pop)) if pop else None
        delays = [(r.time_us - rec.issue_us) / 1000.0 for r in rxs]
        out.append(RequestMetrics(
            rid, covered, vi_usage(selections.get(rid)),
            bytes_by_req.get(rid, {Capability.LTE.value: 0, Capability.SHORT_RANGE.value: 0}),
            delays, delay_stats(delays)))
    return out


def mean_ci(values: Sequence[float], level: float = 0.95) -> Tuple[float, float, float, int]:
    """(mean, low, high, n); Student-t below 30 samples, normal above. NaN bounds for n < 2."""
    n = len(values)
    if n == 0:
        return math.nan, math.nan, math.nan, 0
    mean = float(np.mean(values))
    if n < 2:
        return mean, math.nan, math.nan, n
    sd = float(np.std(values, ddof=1))
    q = 0.5 + level / 2
    crit = float(stats.t.ppf(q, n - 1)) if n < 30 else NormalDist().inv_cdf(q)
    half = crit * sd / math.sqrt(n)
    return mean, mean - half, mean + half, n


# --- neighbor degree -----------------------------------------------------------

def degree_samples(trace: MobilityTrace, range_m: float, duration: float, step: float = 1.0,
                   vehicles: Optional[Iterable[int]] = None) -> List[int]:
    """Ground-truth node degrees of every vehicle at every sampling instant in [0, duration)."""
    keep = set(vehicles) if vehicles is not None else None
    out = []
    i = 0
    while i * step < duration:
        t = i * step
        pos = positions_at(trace, t)
        if keep is not None:
            pos = {v: p for v, p in pos.items() if v in keep}
        if pos:
            out.extend(d for _, d in sorted(connectivity_snapshot(pos, range_m, t).degrees().items()))
        i += 1
    return out


def degree_cdf(samples: Sequence[int]) -> List[Tuple[int, float]]:
    if not samples:
        return []
    values, counts = np.unique(np.asarray(samples), return_counts=True)
    cum = np.cumsum(counts) / counts.sum()
    return [(int(v), float(c)) for v, c in zip(values, cum)]


# --- reports ----------------------------------------------------------------------

@dataclass
class ConfigReport:
    config_id: str
    strategy: str
    k: int
    tx_power: float
    requests: List[RequestMetrics] = field(default_factory=list)


def config_id(strategy: str, k: int, tx_power: float) -> str:
    return f"{strategy}-k{k}-tx{_fmt(tx_power)}"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return format(x, ".10g")


def _overhead_ratios(report: ConfigReport, reports: Sequence[ConfigReport]) -> List[float]:
    if report.strategy != NAVI:
        return []
    base = next((r for r in reports if r.strategy == ALL_LTE and r.tx_power == report.tx_power), None)
    if base is None:
        return []
    lte_bytes = {m.request: m.bytes_total for m in base.requests}
    return [m.bytes_total / lte_bytes[m.request] for m in report.requests
            if lte_bytes.get(m.request)]


def aggregate(reports: Sequence[ConfigReport]) -> List[dict]:
    rows = []
    for rep in reports:
        series = {
            "covered_pct": [m.covered_area_pct for m in rep.requests if m.covered_area_pct is not None],
            "vi_count": [m.vi_count for m in rep.requests],
            "bytes_lte": [m.bytes_lte for m in rep.requests],
            "bytes_sr": [m.bytes_sr for m in rep.requests],
            "bytes_total": [m.bytes_total for m in rep.requests],
            "delay_mean_ms": [m.delay.mean for m in rep.requests if m.delay is not None],
            "overhead_ratio_vs_all_lte": _overhead_ratios(rep, reports),
        }
        for metric in AGGREGATE_METRICS:
            vals = series[metric]
            if metric == "overhead_ratio_vs_all_lte" and not vals:
                continue
            mean, lo, hi, n = mean_ci(vals)
            rows.append({"config_id": rep.config_id, "metric": metric, "mean": mean,
                         "ci95_low": lo, "ci95_high": hi, "n": n})
    return rows


def _atomic_csv(path: str, columns: Sequence[str], rows: Iterable[Mapping]) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(row.get(c)) if not isinstance(row.get(c), str) else row[c] for c in columns])
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def request_rows(reports: Sequence[ConfigReport]) -> List[dict]:
    rows = []
    for rep in reports:
        for m in rep.requests:
            rows.append({"config_id": rep.config_id, "request_id": m.request, "strategy": rep.strategy,
                         "k": rep.k, "tx_power_dbm": rep.tx_power, "covered_pct": m.covered_area_pct,
                         "vi_count": m.vi_count, "bytes_lte": m.bytes_lte, "bytes_sr": m.bytes_sr,
                         "delay_mean_ms": m.delay.mean if m.delay else None,
                         "delay_p95_ms": m.delay.p95 if m.delay else None})
    return rows


def write_report(reports: Sequence[ConfigReport], out_dir: str,
                 degree_samples_by_tx: Optional[Mapping[float, Sequence[int]]] = None) -> Dict[str, str]:
    """Write metrics_requests.csv, metrics_aggregate.csv and degree_cdf.csv into ``out_dir``."""
    paths = {
        "requests": os.path.join(out_dir, "metrics_requests.csv"),
        "aggregate": os.path.join(out_dir, "metrics_aggregate.csv"),
        "degree_cdf": os.path.join(out_dir, "degree_cdf.csv"),
    }
    _atomic_csv(paths["requests"], REQUEST_COLUMNS, request_rows(reports))
    _atomic_csv(paths["aggregate"], AGGREGATE_COLUMNS, aggregate(reports))
    cdf_rows = []
    for tx in sorted(degree_samples_by_tx or {}):
        for deg, c in degree_cdf(degree_samples_by_tx[tx]):
            cdf_rows.append({"tx_power_dbm": tx, "degree": deg, "cdf": c})
    _atomic_csv(paths["degree_cdf"], CDF_COLUMNS, cdf_rows)
    return paths


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
