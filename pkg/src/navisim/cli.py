"""Command line entry point: single runs, parameter sweeps and trace generation."""

from __future__ import annotations

import argparse
import logging
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import data, metrics
from .config import ConfigError, ScenarioConfig, load_config, parse_area, parse_float_list, parse_int_list
from .dissem import ALL_LTE, NAVI, STRATEGIES, Variant
from .model import Capability, to_us
from .radio import RadioConfig
from .simcore import (CapabilityMix, Latencies, MessageSizes, RunResult, SimParams, Simulator,
                      assign_capabilities)
from .trace import KMH, MobilityTrace, Position, Rect, generate_synthetic_trace, load_ns2_trace, to_ns2

log = logging.getLogger("navisim")


def group_seed(master: int, tx_power: float) -> int:
    """Per-run seed; depends only on (master seed, tx power) so any run can be redone alone."""
    return random.Random(f"{master}/tx{tx_power!r}").getrandbits(32)


def load_trace(cfg: ScenarioConfig) -> MobilityTrace:
    if cfg.trace_source == "synthetic":
        return generate_synthetic_trace(cfg.seed, cfg.vehicles, Rect.from_size(cfg.area_width, cfg.area_height),
                                        cfg.duration, (cfg.speed_min_kmh * KMH, cfg.speed_max_kmh * KMH), cfg.pause)
    return load_ns2_trace(cfg.trace_source)


def dissemination_area(cfg: ScenarioConfig, trace: MobilityTrace) -> Rect:
    if cfg.dissemination_area is not None:
        x0, y0, x1, y1 = cfg.dissemination_area
        return Rect(Position(x0, y0), Position(x1, y1))
    if cfg.trace_source == "synthetic":
        return Rect.from_size(cfg.area_width, cfg.area_height)
    return trace.bounds() or Rect.from_size(0, 0)


def radio_config(cfg: ScenarioConfig, tx_power: float) -> RadioConfig:
    return RadioConfig(tx_power, cfg.rx_sensitivity, cfg.frequency, cfg.model, cfg.fixed_range)


def sim_params(cfg: ScenarioConfig, tx_power: float, area: Rect) -> SimParams:
    return SimParams(
        duration=cfg.duration,
        radio_range=radio_config(cfg, tx_power).range,
        cam_frequency=cfg.cam_frequency,
        cam_jitter=cfg.cam_jitter,
        nt_upload_frequency=cfg.nt_upload_frequency,
        nt_timeout=cfg.nt_timeout,
        request_frequency=cfg.request_frequency,
        request_offset=cfg.request_offset / cfg.request_frequency,
        area=area,
        payload_bytes=cfg.payload_bytes,
        hop_limit=cfg.hop_limit,
        validity=cfg.validity,
        zone_cell=cfg.zone_cell,
        staleness=cfg.staleness,
        latencies=Latencies(cfg.short_range_ms / 1000, cfg.lte_down_ms / 1000, cfg.lte_up_ms / 1000),
        sizes=MessageSizes(cfg.cam_bytes, cfg.nt_base_bytes, cfg.nt_per_entry_bytes, cfg.vi_notify_base_bytes,
                           cfg.request_bytes, cfg.lte_header_bytes, cfg.sr_header_bytes),
        seed=group_seed(cfg.seed, tx_power),
    )


# --- invariant self-checks -------------------------------------------------------

def check_run(result: RunResult) -> List[str]:
    """Invariant violations found in a finished run."""
    p = result.params
    lte_down = to_us(p.latencies.lte_down)
    hop = to_us(p.latencies.short_range)
    problems = []
    issue = {r.request.id: r.issue_us for r in result.requests}
    for variant, dlog in result.logs.items():
        seen = set()
        for rx in dlog.receptions:
            key = (rx.request, rx.vehicle)
            if key in seen:
                problems.append(f"{variant.label}: duplicate reception {key}")
            seen.add(key)
            delay = rx.time_us - issue[rx.request]
            if variant.strategy == ALL_LTE:
                ok = delay == lte_down
            else:
                ok = any(delay == lte_down + h * hop for h in range(p.hop_limit + 1))
            if not ok:
                problems.append(f"{variant.label}: request {rx.request} vehicle {rx.vehicle} delay {delay} us")
        for sel in dlog.selections:
            if len(sel.selected) > variant.k:
                problems.append(f"{variant.label}: {len(sel.selected)} VIs > k")
            g = sel.gains
            if any(x <= 0 for x in g) or any(b > a for a, b in zip(g, g[1:])):
                problems.append(f"{variant.label}: bad gains {g} for request {sel.request}")
    return problems


# --- sweep -----------------------------------------------------------------------

@dataclass
class GroupOutcome:
    tx_power: float
    reports: List[metrics.ConfigReport] = field(default_factory=list)
    degrees: List[int] = field(default_factory=list)
    problems: List[str] = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class SweepResult:
    reports: List[metrics.ConfigReport]
    degrees: Dict[float, List[int]]
    problems: List[str]
    failures: List[str]

    @property
    def ok(self) -> bool:
        return not self.problems and not self.failures


def run_group(cfg: ScenarioConfig, trace: MobilityTrace, tx_power: float,
              variants: Sequence[Variant]) -> GroupOutcome:
    """One background simulation per tx power; every (strategy, k) variant rides on it.

    Requests never feed back into beaconing or uploads, so variants sharing a tx
    power see the same world and can be evaluated in a single event loop.
    """
    out = GroupOutcome(tx_power)
    try:
        area = dissemination_area(cfg, trace)
        params = sim_params(cfg, tx_power, area)
        caps = assign_capabilities(trace.vehicles, CapabilityMix(cfg.both, cfg.lte_only, cfg.short_range_only),
                                   cfg.seed)
        result = Simulator(trace, params, variants, caps).run()
        out.problems = check_run(result)
        for v in variants:
            rep = metrics.ConfigReport(metrics.config_id(v.strategy, v.k, tx_power), v.strategy, v.k, tx_power,
                                       metrics.request_metrics(result.logs[v], result.requests))
            out.reports.append(rep)
        sr = [v for v in trace.vehicles if Capability.SHORT_RANGE in caps[v]]
        out.degrees = metrics.degree_samples(trace, params.radio_range, cfg.duration, 1.0 / cfg.cam_frequency, sr)
    except Exception as e:  # isolate per-run failures; the sweep keeps going
        log.exception("run for tx=%s dBm failed", tx_power)
        out.error = f"tx={tx_power}: {type(e).__name__}: {e}"
    return out


def _threads(n_groups: int) -> int:
    env = os.environ.get("NAVI_SIM_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_groups))


def run_sweep(cfg: ScenarioConfig, k_values: Optional[Sequence[int]] = None,
              tx_powers: Optional[Sequence[float]] = None, strategies: Optional[Sequence[str]] = None,
              out_dir: Optional[str] = None, trace: Optional[MobilityTrace] = None) -> SweepResult:
    k_values = list(k_values or cfg.k_values)
    tx_powers = list(tx_powers or cfg.tx_powers)
    strategies = list(strategies or cfg.strategies)
    if not (k_values and tx_powers and strategies):
        raise ConfigError("sweep lists must be non-empty")
    bad = [s for s in strategies if s not in STRATEGIES]
    if bad or any(k < 1 for k in k_values):
        raise ConfigError(f"bad sweep: strategies must be in {list(STRATEGIES)}, k >= 1")
    if trace is None:
        trace = load_trace(cfg)
    variants = [Variant(s, k) for s in strategies for k in k_values]

    workers = _threads(len(tx_powers))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(run_group, [cfg] * len(tx_powers), [trace] * len(tx_powers),
                                     tx_powers, [variants] * len(tx_powers)))
    else:
        outcomes = [run_group(cfg, trace, tx, variants) for tx in tx_powers]

    reports = []
    # row order: strategy, k, tx, matching the cartesian product of the flags
    by_key = {(r.strategy, r.k, r.tx_power): r for o in outcomes for r in o.reports}
    for s in strategies:
        for k in k_values:
            for tx in tx_powers:
                if (s, k, tx) in by_key:
                    reports.append(by_key[(s, k, tx)])
    result = SweepResult(
        reports=reports,
        degrees={o.tx_power: o.degrees for o in outcomes if o.error is None},
        problems=[p for o in outcomes for p in o.problems],
        failures=[o.error for o in outcomes if o.error],
    )
    if out_dir is not None:
        metrics.write_report(result.reports, out_dir, result.degrees)
    return result


def run_scenario(cfg: ScenarioConfig, out_dir: str) -> int:
    return _finish(run_sweep(cfg, out_dir=out_dir), out_dir)


def _finish(result: SweepResult, out_dir: str) -> int:
    for p in result.problems[:20]:
        log.error("invariant violated: %s", p)
    for f in result.failures:
        log.error("run failed: %s", f)
    log.info("%d configurations, outputs in %s", len(result.reports), out_dir)
    return 0 if result.ok else 1


# --- argparse ----------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="navisim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the configured scenario")
    r.add_argument("--config", help="scenario file; defaults apply when omitted")
    r.add_argument("--reference", action="store_true", help="use the bundled reference scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="navisim-out")

    s = sub.add_parser("sweep", help="cartesian sweep over k, tx power and strategy")
    s.add_argument("--config")
    s.add_argument("--reference", action="store_true", help="use the bundled reference scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--k", type=parse_int_list, help="e.g. 1..20 or 1,2,5")
    s.add_argument("--tx", type=parse_float_list, help="e.g. 16,21,23")
    s.add_argument("--strategy", type=lambda t: [x.strip() for x in t.split(",") if x.strip()])
    s.add_argument("--out", default="navisim-out")

    g = sub.add_parser("gen-trace", help="write a synthetic random-waypoint NS-2 trace")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--vehicles", type=int, default=45)
    g.add_argument("--duration", type=float, default=180.0)
    g.add_argument("--area", type=parse_area, default=(600.0, 730.0))
    g.add_argument("--speed", type=parse_float_list, default=(10.0, 50.0), help="min,max km/h")
    g.add_argument("--out", required=True)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-trace":
            lo, hi = args.speed
            tr = generate_synthetic_trace(args.seed, args.vehicles, Rect.from_size(*args.area), args.duration,
                                          (lo * KMH, hi * KMH))
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(to_ns2(tr))
            return 0
        if args.reference and args.config:
            raise ConfigError("--reference and --config are mutually exclusive")
        if args.reference:
            cfg = load_config(data.reference_config_path())
        else:
            cfg = load_config(args.config) if args.config else ScenarioConfig()
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if args.command == "run":
            return run_scenario(cfg, args.out)
        result = run_sweep(cfg, args.k, args.tx, args.strategy, out_dir=args.out)
        return _finish(result, args.out)
    except (ConfigError, ValueError, OSError) as e:
        print(f"navisim: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
