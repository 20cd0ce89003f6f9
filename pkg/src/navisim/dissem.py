"""Dissemination requests, the delivery log, and the NAVI / All-LTE strategies."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, IO, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from .geoserver import SelectionResult, StopReason, ZoneGrid, _select
from .model import APPLICATION, BROADCAST, GEOSERVER, Capability, to_s, to_us
from .radio import neighbors_in_range
from .trace import Rect

if TYPE_CHECKING:
    from .simcore import Simulator

NAVI = "navi"
ALL_LTE = "all_lte"
STRATEGIES = (NAVI, ALL_LTE)

Node = Union[int, str]


@dataclass(frozen=True)
class DisseminationRequest:
    id: int
    area: Rect
    payload_bytes: int = 500
    k: int = 5
    hop_limit: int = 1
    validity: float = 1.0
    issue_time: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.payload_bytes < 1:
            raise ValueError("payload_bytes must be >= 1")
        if self.hop_limit < 0:
            raise ValueError("hop_limit must be >= 0")


class Variant(NamedTuple):
    strategy: str
    k: int

    @property
    def label(self) -> str:
        return f"{self.strategy}-k{self.k}"


# --- log -------------------------------------------------------------------

class Transmission(NamedTuple):
    time_us: int
    technology: Capability
    bytes: int
    purpose: str        # cam, nt_upload, request, vi_notify, local_broadcast, lte_unicast
    src: Node
    dst: Node
    request: Optional[int] = None

    @property
    def time(self) -> float:
        return to_s(self.time_us)


class Reception(NamedTuple):
    request: int
    vehicle: int
    time_us: int
    technology: Capability
    hop: int
    sender: Node

    @property
    def time(self) -> float:
        return to_s(self.time_us)


@dataclass(frozen=True)
class SelectionRecord:
    request: int
    time_us: int
    selected: Tuple[int, ...]
    gains: Tuple[int, ...]
    stop_reason: str


BACKGROUND_PURPOSES = frozenset({"cam", "nt_upload"})
DISSEMINATION_PURPOSES = frozenset({"request", "vi_notify", "local_broadcast", "lte_unicast"})


@dataclass
class DeliveryLog:
    receptions: List[Reception] = field(default_factory=list)
    transmissions: List[Transmission] = field(default_factory=list)
    selections: List[SelectionRecord] = field(default_factory=list)
    _seen: Dict[Tuple[int, int], Reception] = field(default_factory=dict, repr=False, compare=False)

    def transmit(self, tx: Transmission) -> None:
        self.transmissions.append(tx)

    def receive(self, rx: Reception) -> bool:
        """Record a first reception; duplicates are ignored and return False."""
        key = (rx.request, rx.vehicle)
        if key in self._seen:
            return False
        self._seen[key] = rx
        self.receptions.append(rx)
        return True

    def first_reception(self, request: int, vehicle: int) -> Optional[Reception]:
        return self._seen.get((request, vehicle))

    def receivers(self, request: int) -> set:
        return {r.vehicle for r in self.receptions if r.request == request}

    def to_records(self) -> List[dict]:
        recs = []
        for t in self.transmissions:
            recs.append({"time": t.time, "kind": "tx", "purpose": t.purpose, "src": t.src, "dst": t.dst,
                         "bytes": t.bytes, "technology": t.technology.value, "request": t.request})
        for r in self.receptions:
            recs.append({"time": r.time, "kind": "rx", "request": r.request, "src": r.sender,
                         "dst": r.vehicle, "bytes": 0, "technology": r.technology.value, "hop": r.hop})
        for s in self.selections:
            recs.append({"time": to_s(s.time_us), "kind": "selection", "request": s.request,
                         "selected": list(s.selected), "gains": list(s.gains), "stop_reason": s.stop_reason})
        recs.sort(key=lambda r: (r["time"], {"tx": 0, "selection": 1, "rx": 2}[r["kind"]]))
        return recs

    def write_jsonl(self, fh: IO[str]) -> None:
        for rec in self.to_records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, fh: Iterable[str]) -> "DeliveryLog":
        out = cls()
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            t_us = to_us(rec["time"])
            if rec["kind"] == "tx":
                out.transmit(Transmission(t_us, Capability(rec["technology"]), rec["bytes"], rec["purpose"],
                                          rec["src"], rec["dst"], rec["request"]))
            elif rec["kind"] == "rx":
                out.receive(Reception(rec["request"], rec["dst"], t_us, Capability(rec["technology"]),
                                      rec["hop"], rec["src"]))
            elif rec["kind"] == "selection":
                out.selections.append(SelectionRecord(rec["request"], t_us, tuple(rec["selected"]),
                                                      tuple(rec["gains"]), rec["stop_reason"]))
            else:
                raise ValueError(f"unknown record kind {rec['kind']!r}")
        return out


# --- execution -----------------------------------------------------------------

@dataclass(eq=False)
class Dispatch:
    """One physical dissemination, mirrored into every variant log that shares it."""

    request: int
    issue_us: int
    hop_limit: int
    relay: bool
    sinks: Sequence[DeliveryLog]
    label: str = ""
    payload_bytes: int = 0
    reached: Dict[int, int] = field(default_factory=dict)
    broadcasted: set = field(default_factory=set)

    def transmit(self, tx: Transmission) -> None:
        for log in self.sinks:
            log.transmit(tx)


class DataMsg(NamedTuple):
    dispatch: Dispatch
    hop: int
    sender: Node


def _request_tx(sim: "Simulator", req: DisseminationRequest, t_us: int) -> Transmission:
    return Transmission(t_us, Capability.LTE, sim.params.sizes.request, "request",
                        APPLICATION, GEOSERVER, req.id)


def handle_request(sim: "Simulator", req: DisseminationRequest, variants: Sequence[Variant],
                   logs: Dict[Variant, DeliveryLog]) -> Dict[Variant, SelectionResult]:
    """Run selection for every variant and schedule the resulting deliveries.

    ``req.k`` is ignored in favour of each variant's own k.  Variants whose
    outcome is identical share one set of scheduled events.
    """
    t_us = to_us(req.issue_time)
    p = sim.params
    results: Dict[Variant, SelectionResult] = {}
    navi = [v for v in variants if v.strategy == NAVI]
    lte = [v for v in variants if v.strategy == ALL_LTE]
    unknown = [v for v in variants if v.strategy not in STRATEGIES]
    if unknown:
        raise ValueError(f"unknown strategies: {sorted({v.strategy for v in unknown})}")

    for v in variants:
        logs[v].transmit(_request_tx(sim, req, t_us))

    if navi:
        k_max = max(v.k for v in navi)
        view = sim.geoserver.world_view(req.issue_time)
        grid = ZoneGrid(req.area, p.zone_cell)
        budget = p.latencies.lte_down + p.latencies.short_range
        full, cov = _select(view, grid, _with_k(req, k_max), budget, sim.candidate_filter)
        groups: Dict[Tuple[int, ...], List[Variant]] = {}
        for v in navi:
            sel = full.truncated(v.k, cov)
            results[v] = sel
            logs[v].selections.append(SelectionRecord(req.id, t_us, sel.selected, sel.gains, sel.stop_reason.value))
            groups.setdefault(sel.selected, []).append(v)
        for selected, members in groups.items():
            if selected:
                execute_navi(sim, results[members[0]], req, t_us, [logs[m] for m in members],
                             label="|".join(m.label for m in members))

    if lte:
        for v in lte:
            results[v] = SelectionResult((), frozenset(), StopReason.ZERO_GAIN)
        execute_all_lte(sim, req, t_us, [logs[v] for v in lte], label="|".join(v.label for v in lte))
    return results


def _with_k(req: DisseminationRequest, k: int) -> DisseminationRequest:
    return DisseminationRequest(req.id, req.area, req.payload_bytes, k, req.hop_limit, req.validity, req.issue_time)


def execute_navi(sim: "Simulator", selection: SelectionResult, req: DisseminationRequest, t_us: int,
                 sinks: Sequence[DeliveryLog], label: str = NAVI) -> Dispatch:
    """Notify each selected vehicle over LTE; they rebroadcast on arrival."""
    p = sim.params
    d = Dispatch(req.id, t_us, req.hop_limit, True, sinks, label, req.payload_bytes)
    arrive = t_us + to_us(p.latencies.lte_down)
    for vi in selection.selected:
        d.transmit(Transmission(t_us, Capability.LTE, p.sizes.vi_notify_base + req.payload_bytes,
                                "vi_notify", GEOSERVER, vi, req.id))
        sim.schedule(arrive, "LteDeliver", vi, DataMsg(d, 0, GEOSERVER))
    return d


def execute_all_lte(sim: "Simulator", req: DisseminationRequest, t_us: int,
                    sinks: Sequence[DeliveryLog], label: str = ALL_LTE) -> Dispatch:
    """Unicast the payload to every LTE-capable vehicle inside the request area."""
    p = sim.params
    d = Dispatch(req.id, t_us, 0, False, sinks, label, req.payload_bytes)
    arrive = t_us + to_us(p.latencies.lte_down)
    positions = sim.positions(t_us)
    for v, pos in positions.items():
        if not req.area.contains(pos) or Capability.LTE not in sim.agents[v].capabilities:
            continue
        d.transmit(Transmission(t_us, Capability.LTE, req.payload_bytes + p.sizes.lte_header,
                                "lte_unicast", GEOSERVER, v, req.id))
        sim.schedule(arrive, "LteDeliver", v, DataMsg(d, 0, GEOSERVER))
    return d


def deliver_data(sim: "Simulator", v: int, msg: DataMsg, technology: Capability) -> None:
    """Reception handler for dissemination payloads (LTE or short range)."""
    d = msg.dispatch
    t_us = sim.now_us
    if v in d.reached:
        return
    d.reached[v] = t_us
    rx = Reception(d.request, v, t_us, technology, msg.hop, msg.sender)
    for log in d.sinks:
        log.receive(rx)
    sim.agents[v].mark_received((d.label, d.request), to_s(t_us))
    if d.relay and msg.hop < d.hop_limit:
        local_broadcast(sim, d, v, msg.hop)


def local_broadcast(sim: "Simulator", d: Dispatch, v: int, hop: int) -> None:
    agent = sim.agents[v]
    if v in d.broadcasted or Capability.SHORT_RANGE not in agent.capabilities:
        return
    d.broadcasted.add(v)
    p = sim.params
    t_us = sim.now_us
    d.transmit(Transmission(t_us, Capability.SHORT_RANGE, d.payload_bytes + p.sizes.sr_header,
                            "local_broadcast", v, BROADCAST, d.request))
    arrive = t_us + to_us(p.latencies.short_range)
    positions = sim.positions(t_us)
    for u in neighbors_in_range(v, positions, sim.radio_range):
        if Capability.SHORT_RANGE in sim.agents[u].capabilities:
            sim.schedule(arrive, "ShortRangeDeliver", u, DataMsg(d, hop + 1, v))
