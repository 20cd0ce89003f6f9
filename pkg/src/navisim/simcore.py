"""Discrete-event engine: CAM beaconing, neighbor tables, NT uploads, request dispatch."""

from __future__ import annotations

import heapq
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

from .dissem import (ALL_LTE, NAVI, DataMsg, DeliveryLog, DisseminationRequest, Transmission, Variant,
                     deliver_data, handle_request)
from .geoserver import CandidateFilter, Geoserver, NeighborEntry, NtSnapshot
from .model import BOTH, GEOSERVER, BROADCAST, LTE_ONLY, SHORT_RANGE_ONLY, Capability, to_s, to_us
from .radio import neighbors_in_range
from .trace import MobilityTrace, Position, Rect


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Latencies:
    short_range: float = 0.005
    lte_down: float = 0.050
    lte_up: float = 0.060


@dataclass(frozen=True)
class MessageSizes:
    cam: int = 300
    nt_base: int = 100
    nt_per_entry: int = 20
    vi_notify_base: int = 200
    request: int = 100
    lte_header: int = 60
    sr_header: int = 40


@dataclass(frozen=True)
class CapabilityMix:
    both: float = 1.0
    lte_only: float = 0.0
    short_range_only: float = 0.0

    def __post_init__(self):
        parts = (self.both, self.lte_only, self.short_range_only)
        if any(p < 0 for p in parts) or not math.isclose(sum(parts), 1.0, abs_tol=1e-9):
            raise ValueError(f"capability fractions must be >= 0 and sum to 1, got {parts}")


@dataclass(frozen=True)
class SimParams:
    duration: float = 180.0
    radio_range: float = 200.0
    cam_frequency: float = 1.0
    cam_jitter: bool = False
    cam_jitter_max: float = 0.050
    nt_upload_frequency: float = 1.0
    nt_timeout: float = 5.0
    sweep_interval: float = 1.0
    request_frequency: float = 1.0     # 0 disables requests
    request_offset: float = 0.5
    area: Optional[Rect] = None        # dissemination area; None -> trace bounding box
    payload_bytes: int = 500
    hop_limit: int = 1
    validity: float = 1.0
    zone_cell: float = 50.0
    staleness: float = 5.0
    latencies: Latencies = field(default_factory=Latencies)
    sizes: MessageSizes = field(default_factory=MessageSizes)
    seed: int = 0

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        for name in ("cam_frequency", "nt_upload_frequency", "sweep_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.request_frequency < 0:
            raise ValueError("request_frequency must be >= 0")
        if not self.radio_range > 0:
            raise ValueError("radio_range must be > 0")


# --- vehicles ------------------------------------------------------------------

@dataclass(frozen=True)
class Cam:
    sender: int
    position: Position
    speed: float
    heading: float
    capabilities: FrozenSet[Capability]
    gen_time: float


@dataclass
class NeighborTable:
    owner: int
    timeout: float = 5.0
    entries: Dict[int, Tuple[Cam, float]] = field(default_factory=dict)

    def upsert(self, cam: Cam, now: float) -> None:
        if cam.sender == self.owner:
            raise ValueError("a vehicle cannot be its own neighbor")
        self.entries[cam.sender] = (cam, now)

    def expire(self, now: float) -> int:
        stale = [v for v, (_, heard) in self.entries.items() if now - heard > self.timeout]
        for v in stale:
            del self.entries[v]
        return len(stale)

    def fresh(self, now: float) -> List[Tuple[int, Cam, float]]:
        # lazy expiry on read
        return [(v, cam, heard) for v, (cam, heard) in sorted(self.entries.items())
                if now - heard <= self.timeout]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, v) -> bool:
        return v in self.entries


@dataclass
class VehicleAgent:
    id: int
    capabilities: FrozenSet[Capability]
    neighbor_table: NeighborTable
    received_requests: Dict[Any, float] = field(default_factory=dict)

    @property
    def short_range(self) -> bool:
        return Capability.SHORT_RANGE in self.capabilities

    @property
    def lte(self) -> bool:
        return Capability.LTE in self.capabilities

    def mark_received(self, key, t: float) -> bool:
        if key in self.received_requests:
            return False
        self.received_requests[key] = t
        return True


def process_cam(agent: VehicleAgent, cam: Cam, t: float) -> NeighborTable:
    agent.neighbor_table.upsert(cam, t)
    return agent.neighbor_table


def assign_capabilities(vehicles: Sequence[int], mix: CapabilityMix, seed: int) -> Dict[int, FrozenSet[Capability]]:
    ids = sorted(vehicles)
    n = len(ids)
    n_lte = round(n * mix.lte_only)
    n_sr = min(round(n * mix.short_range_only), n - n_lte)
    order = ids[:]
    random.Random(f"{seed}:capabilities").shuffle(order)
    caps = {v: BOTH for v in ids}
    for v in order[:n_lte]:
        caps[v] = LTE_ONLY
    for v in order[n_lte:n_lte + n_sr]:
        caps[v] = SHORT_RANGE_ONLY
    return caps


# --- engine ----------------------------------------------------------------------

class Event(NamedTuple):
    time_us: int
    seq: int
    kind: str       # EmitCam, ExpireSweep, UploadNT, Request, LteDeliver, ShortRangeDeliver
    vehicle: Any
    payload: Any = None

    @property
    def time(self) -> float:
        return to_s(self.time_us)


@dataclass(frozen=True)
class RequestRecord:
    request: DisseminationRequest
    issue_us: int
    population: FrozenSet[int]        # ground truth, any capability, inside the area at issue time
    lte_population: FrozenSet[int]


@dataclass
class RunResult:
    params: SimParams
    logs: Dict[Variant, DeliveryLog]
    background: DeliveryLog
    requests: List[RequestRecord]
    agents: Dict[int, VehicleAgent]
    event_counts: Counter
    events: Optional[List[Tuple[int, int, str, Any]]] = None
    selections: Dict[Variant, list] = field(default_factory=dict)


class Simulator:
    def __init__(self, trace: MobilityTrace, params: SimParams = SimParams(),
                 variants: Sequence[Variant] = (Variant(NAVI, 5),),
                 capabilities: Optional[Dict[int, FrozenSet[Capability]]] = None,
                 on_event: Optional[Callable[["Simulator", Event], None]] = None,
                 record_events: bool = False,
                 candidate_filter: Optional[CandidateFilter] = None):
        if trace.duration < params.duration:
            raise ValueError(f"trace covers {trace.duration} s < simulated {params.duration} s")
        self.trace = trace
        self.params = params
        self.variants = list(dict.fromkeys(variants))
        if capabilities is None:
            capabilities = {v: BOTH for v in trace.vehicles}
        self.agents = {v: VehicleAgent(v, capabilities[v], NeighborTable(v, params.nt_timeout))
                       for v in trace.vehicles}
        self.geoserver = Geoserver(params.staleness)
        self.logs = {v: DeliveryLog() for v in self.variants}
        self.background = DeliveryLog()
        self.requests: List[RequestRecord] = []
        self.radio_range = params.radio_range
        self.candidate_filter = candidate_filter
        self.area = params.area if params.area is not None else (trace.bounds() or Rect.from_size(0, 0))
        self.on_event = on_event
        self.events: Optional[list] = [] if record_events else None
        self.event_counts: Counter = Counter()
        self.now_us = 0
        self.end_us = to_us(params.duration)
        self._queue: List[Event] = []
        self._seq = 0
        self._pos_cache: Dict[int, Dict[int, Position]] = {}
        self._jitter = random.Random(f"{params.seed}:jitter")
        self._cam_round: Dict[int, int] = {}
        self._handlers = {
            "EmitCam": self._on_emit_cam,
            "ExpireSweep": self._on_sweep,
            "UploadNT": self._on_upload,
            "Request": self._on_request,
            "LteDeliver": self._on_lte,
            "ShortRangeDeliver": self._on_short_range,
        }
        self._started = False

    # -- scheduling

    def schedule(self, time_us: int, kind: str, vehicle: Any = None, payload: Any = None) -> Event:
        if time_us < self.now_us:
            raise SimulationError(f"{kind} scheduled at {time_us} us, before now={self.now_us} us")
        ev = Event(time_us, self._seq, kind, vehicle, payload)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def positions(self, time_us: int) -> Dict[int, Position]:
        pos = self._pos_cache.get(time_us)
        if pos is None:
            if len(self._pos_cache) > 64:
                self._pos_cache.clear()
            t = to_s(time_us)
            pos = {}
            for v in self.trace.vehicles:
                p = self.trace.tracks[v].position(t)
                if p is not None:
                    pos[v] = p
            self._pos_cache[time_us] = pos
        return pos

    def _cam_time(self, v: int, i: int) -> int:
        t = i / self.params.cam_frequency
        if self.params.cam_jitter:
            t += self._jitter.uniform(-self.params.cam_jitter_max, self.params.cam_jitter_max)
        return max(to_us(t), self.now_us)

    def _bootstrap(self) -> None:
        p = self.params
        for v in self.trace.vehicles:
            agent = self.agents[v]
            appear = to_us(self.trace.tracks[v].appear)
            if agent.short_range:
                self._cam_round[v] = 0
                self.schedule(max(self._cam_time(v, 0), appear), "EmitCam", v)
                self.schedule(max(to_us(p.sweep_interval), appear), "ExpireSweep", v)
            if agent.lte:
                self.schedule(appear, "UploadNT", v)
        if p.request_frequency > 0:
            i = 0
            while True:
                t = p.request_offset + i / p.request_frequency
                if to_us(t) >= self.end_us:
                    break
                self.schedule(to_us(t), "Request", None, i)
                i += 1

    # -- main loop

    def run(self, max_events: Optional[int] = None) -> RunResult:
        if not self._started:
            self._bootstrap()
            self._started = True
        processed = 0
        while self._queue:
            if max_events is not None and processed >= max_events:
                break
            if self._queue[0].time_us >= self.end_us:
                break
            ev = heapq.heappop(self._queue)
            self.now_us = ev.time_us
            self._handlers[ev.kind](ev)
            self.event_counts[ev.kind] += 1
            processed += 1
            if self.events is not None:
                self.events.append((ev.time_us, ev.seq, ev.kind, ev.vehicle))
            if self.on_event is not None:
                self.on_event(self, ev)
        return RunResult(self.params, self.logs, self.background, self.requests, self.agents,
                         self.event_counts, self.events)

    # -- handlers

    def emit_cam(self, v: int, time_us: int) -> List[Event]:
        agent = self.agents[v]
        if not agent.short_range:
            return []
        positions = self.positions(time_us)
        if v not in positions:
            return []
        t = to_s(time_us)
        speed, heading = self.trace.tracks[v].motion(t)
        cam = Cam(v, positions[v], speed, heading, agent.capabilities, t)
        self.background.transmit(Transmission(time_us, Capability.SHORT_RANGE, self.params.sizes.cam,
                                              "cam", v, BROADCAST))
        arrive = time_us + to_us(self.params.latencies.short_range)
        out = []
        for u in neighbors_in_range(v, positions, self.radio_range):
            if self.agents[u].short_range:
                out.append(self.schedule(arrive, "ShortRangeDeliver", u, cam))
        return out

    def _on_emit_cam(self, ev: Event) -> None:
        v = ev.vehicle
        self.emit_cam(v, ev.time_us)
        self._cam_round[v] += 1
        i = self._cam_round[v]
        # beacon count is fixed by the nominal schedule, jitter only shifts it
        if to_us(i / self.params.cam_frequency) < self.end_us:
            self.schedule(self._cam_time(v, i), "EmitCam", v)

    def _on_sweep(self, ev: Event) -> None:
        self.agents[ev.vehicle].neighbor_table.expire(ev.time)
        self.schedule(ev.time_us + to_us(self.params.sweep_interval), "ExpireSweep", ev.vehicle)

    def upload_neighbor_table(self, v: int, time_us: int) -> Optional[Event]:
        agent = self.agents[v]
        if not agent.lte:
            return None
        pos = self.positions(time_us).get(v)
        if pos is None:
            return None
        t = to_s(time_us)
        entries = tuple(NeighborEntry(u, cam.position, cam.capabilities, cam.gen_time, heard)
                        for u, cam, heard in agent.neighbor_table.fresh(t))
        snap = NtSnapshot(v, pos, agent.capabilities, t, entries)
        size = self.params.sizes.nt_base + self.params.sizes.nt_per_entry * len(entries)
        self.background.transmit(Transmission(time_us, Capability.LTE, size, "nt_upload", v, GEOSERVER))
        return self.schedule(time_us + to_us(self.params.latencies.lte_up), "LteDeliver", GEOSERVER, snap)

    def _on_upload(self, ev: Event) -> None:
        self.upload_neighbor_table(ev.vehicle, ev.time_us)
        self.schedule(ev.time_us + to_us(1.0 / self.params.nt_upload_frequency), "UploadNT", ev.vehicle)

    def _on_request(self, ev: Event) -> None:
        p = self.params
        t = ev.time
        req = DisseminationRequest(ev.payload, self.area, p.payload_bytes, max([v.k for v in self.variants] + [1]),
                                   p.hop_limit, p.validity, t)
        positions = self.positions(ev.time_us)
        inside = frozenset(v for v, pos in positions.items() if self.area.contains(pos))
        lte = frozenset(v for v in inside if self.agents[v].lte)
        self.requests.append(RequestRecord(req, ev.time_us, inside, lte))
        handle_request(self, req, self.variants, self.logs)

    def _on_lte(self, ev: Event) -> None:
        if ev.vehicle == GEOSERVER:
            self.geoserver.ingest(ev.payload)
        else:
            deliver_data(self, ev.vehicle, ev.payload, Capability.LTE)

    def _on_short_range(self, ev: Event) -> None:
        if isinstance(ev.payload, Cam):
            process_cam(self.agents[ev.vehicle], ev.payload, ev.time)
        else:
            deliver_data(self, ev.vehicle, ev.payload, Capability.SHORT_RANGE)


def run(params: SimParams, trace: MobilityTrace, variants: Sequence[Variant] = (Variant(NAVI, 5),),
        capabilities: Optional[Dict[int, FrozenSet[Capability]]] = None, **kwargs) -> RunResult:
    return Simulator(trace, params, variants, capabilities, **kwargs).run()
